#pragma once

#include "execrl/error.hpp"
#include "execrl/nn/ops.hpp"
#include "execrl/policy.hpp"
#include "execrl/rollout.hpp"
#include "execrl/trajectory.hpp"

#include <vector>

namespace execrl {

// Teacher greedy actions on the perfect-information twin of every visited
// student state. The teacher is only read.
inline void label_with_teacher(std::vector<Trajectory>& batch, const PolicyNet& teacher, std::size_t workers = 1) {
    if (teacher.role() != Role::teacher) throw ConfigError("label_with_teacher: checkpoint role is not teacher");
    std::vector<std::size_t> nonempty;
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (batch[i].length() > 0) nonempty.push_back(i);
    const std::size_t k = teacher.config().n_actions;
    parallel_chunks(nonempty.size(), workers, [&](std::size_t begin, std::size_t end) {
        nn::NoGradGuard guard;
        SequenceInput in;
        for (std::size_t j = begin; j < end; ++j) {
            const Trajectory& tr = batch[nonempty[j]];
            in.public_rows.push_back(&tr.context->full_features);
            in.private_rows.push_back(&tr.log.private_rows);
            in.lengths.push_back(tr.length());
        }
        const SequenceOutput out = teacher.forward_sequences(in);
        const auto logits = out.logits.values();
        std::size_t row = 0;
        for (std::size_t j = begin; j < end; ++j) {
            Trajectory& tr = batch[nonempty[j]];
            tr.teacher_actions.clear();
            tr.teacher_probs = Matrix();
            for (std::size_t t = 0; t < tr.length(); ++t, ++row) {
                const ActionDist d = ActionDist::from_logits(logits.subspan(row * k, k));
                tr.teacher_actions.push_back(act_greedy(d));
                tr.teacher_probs.append_row(d.probs);
            }
        }
    });
}

// Fraction of labeled steps where the student's greedy action equals the label.
inline double agreement_rate(const PolicyNet& student, const std::vector<Trajectory>& batch) {
    nn::NoGradGuard guard;
    SequenceInput in;
    std::vector<std::size_t> labels;
    for (const auto& tr : batch) {
        if (!tr.labeled()) continue;
        in.public_rows.push_back(&tr.context->history_features);
        in.private_rows.push_back(&tr.log.private_rows);
        in.lengths.push_back(tr.length());
        labels.insert(labels.end(), tr.teacher_actions.begin(), tr.teacher_actions.end());
    }
    if (labels.empty()) throw UsageError("agreement_rate: no labeled steps");
    const auto out = student.forward_sequences(in);
    const std::size_t k = student.config().n_actions;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        hits += act_greedy(ActionDist::from_logits(out.logits.values().subspan(i * k, k))) == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// L_d = -mean log pi(label | s) over rows of student logits.
inline nn::Tensor distill_loss(const nn::Tensor& student_logits, std::vector<std::size_t> labels) {
    if (labels.size() != student_logits.rows())
        throw UsageError("distill_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(student_logits.rows()) + " steps");
    return nn::scale(nn::mean(dist_ops::log_prob(student_logits, std::move(labels))), -1.0);
}

}  // namespace execrl
