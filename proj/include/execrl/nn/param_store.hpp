#pragma once

#include "execrl/error.hpp"
#include "execrl/nn/tensor.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace execrl::nn {

// Named parameters plus their Adam moments.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        std::vector<double> m;
        std::vector<double> v;
    };

    Tensor add(const std::string& name, std::size_t rows, std::size_t cols, std::vector<double> values) {
        for (const auto& e : entries_)
            if (e.name == name) throw UsageError("ParamStore: duplicate parameter '" + name + "'");
        Tensor t = Tensor::from(rows, cols, std::move(values), true);
        entries_.push_back({name, t, std::vector<double>(t.size(), 0.0), std::vector<double>(t.size(), 0.0)});
        return t;
    }

    Tensor get(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e.tensor;
        throw UsageError("ParamStore: no parameter '" + name + "'");
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    void zero_grad() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.tensor.size();
        return n;
    }

    std::uint64_t adam_step() const { return adam_step_; }
    void set_adam_step(std::uint64_t step) { adam_step_ = step; }

    // Deep copy: new leaves with the same values and optimizer state.
    ParamStore clone() const {
        ParamStore out;
        out.adam_step_ = adam_step_;
        for (const auto& e : entries_) {
            std::vector<double> values(e.tensor.values().begin(), e.tensor.values().end());
            out.entries_.push_back({e.name, Tensor::from(e.tensor.rows(), e.tensor.cols(), std::move(values), true), e.m, e.v});
        }
        return out;
    }

    // Copies values into this store's existing tensors (shapes must match).
    void assign_values(const ParamStore& other) {
        if (other.entries_.size() != entries_.size()) throw UsageError("ParamStore::assign_values: layout mismatch");
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            auto src = other.entries_[i].tensor.values();
            auto dst = entries_[i].tensor.mutable_values();
            if (entries_[i].name != other.entries_[i].name || src.size() != dst.size())
                throw UsageError("ParamStore::assign_values: layout mismatch at '" + entries_[i].name + "'");
            std::copy(src.begin(), src.end(), dst.begin());
            entries_[i].m = other.entries_[i].m;
            entries_[i].v = other.entries_[i].v;
        }
        adam_step_ = other.adam_step_;
    }

    bool same_values(const ParamStore& other) const {
        if (other.entries_.size() != entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            auto a = entries_[i].tensor.values();
            auto b = other.entries_[i].tensor.values();
            if (entries_[i].name != other.entries_[i].name || a.size() != b.size() ||
                std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0)
                return false;
        }
        return true;
    }

private:
    std::vector<Entry> entries_;
    std::uint64_t adam_step_ = 0;
};

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update over every parameter with a gradient buffer.
inline void adam_step(ParamStore& store, const AdamConfig& cfg) {
    store.set_adam_step(store.adam_step() + 1);
    const double t = static_cast<double>(store.adam_step());
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& e : store.entries()) {
        auto g = e.tensor.grad();
        if (g.empty()) continue;
        auto w = e.tensor.mutable_values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g[i];
            e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = e.m[i] / c1;
            const double vhat = e.v[i] / c2;
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// Rescales all gradients so their joint L2 norm is at most max_norm; returns the pre-clip norm.
inline double clip_grad_norm(ParamStore& store, double max_norm) {
    double sq = 0.0;
    for (const auto& e : store.entries())
        for (double g : e.tensor.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& e : store.entries())
            if (!e.tensor.grad().empty())
                for (double& g : e.tensor.mutable_grad()) g *= s;
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Initializers
// ---------------------------------------------------------------------------

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) scaled by `gain`.
inline std::vector<double> fan_in_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng,
                                          double gain = 1.0) {
    const double bound = gain / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (double& x : w) x = bound * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
    return w;
}

// [n x (blocks * n)] made of independent orthogonal n x n blocks.
inline std::vector<double> orthogonal_blocks(std::size_t n, std::size_t blocks, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> w(n * blocks * n);
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        Eigen::MatrixXd a(n, n);
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        // Sign-fix columns so the factorization is unique.
        const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (Eigen::Index j = 0; j < q.cols(); ++j)
            if (r(j, j) < 0.0) q.col(j) *= -1.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                w[i * blocks * n + blk * n + j] = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    return w;
}

// ---------------------------------------------------------------------------
// Checkpoint container
//
// Layout: 8-byte magic "EXRLCKP1", u64 little-endian header length, UTF-8
// JSON header (parameter names/shapes, optimizer step, caller metadata), then
// for each parameter in header order: values, Adam m, Adam v as raw
// little-endian float64.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'E', 'X', 'R', 'L', 'C', 'K', 'P', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline std::string serialize_checkpoint(const ParamStore& store, const nlohmann::json& meta) {
    nlohmann::json header;
    header["format"] = "execrl-checkpoint";
    header["version"] = 1;
    header["adam_step"] = store.adam_step();
    header["meta"] = meta;
    header["params"] = nlohmann::json::array();
    for (const auto& e : store.entries())
        header["params"].push_back({{"name", e.name}, {"rows", e.tensor.rows()}, {"cols", e.tensor.cols()}});
    const std::string text = header.dump();
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t len = text.size();
    out.append(reinterpret_cast<const char*>(&len), sizeof(len));
    out += text;
    auto put = [&out](std::span<const double> xs) {
        out.append(reinterpret_cast<const char*>(xs.data()), xs.size() * sizeof(double));
    };
    for (const auto& e : store.entries()) {
        put(e.tensor.values());
        put(e.m);
        put(e.v);
    }
    return out;
}

struct LoadedCheckpoint {
    ParamStore params;
    nlohmann::json meta;
};

inline LoadedCheckpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin = "<memory>") {
    auto fail = [&](const std::string& why) { return ValidationError("checkpoint " + origin + ": " + why); };
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) throw fail("bad magic");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof(len));
    if (16 + len > bytes.size()) throw fail("truncated header");
    const nlohmann::json header = nlohmann::json::parse(bytes.substr(16, len));
    LoadedCheckpoint out;
    out.meta = header.at("meta");
    out.params.set_adam_step(header.at("adam_step").get<std::uint64_t>());
    std::size_t offset = 16 + len;
    auto take = [&](std::size_t count) {
        if (offset + count * sizeof(double) > bytes.size()) throw fail("truncated payload");
        std::vector<double> xs(count);
        std::memcpy(xs.data(), bytes.data() + offset, count * sizeof(double));
        offset += count * sizeof(double);
        return xs;
    };
    for (const auto& p : header.at("params")) {
        const auto rows = p.at("rows").get<std::size_t>();
        const auto cols = p.at("cols").get<std::size_t>();
        out.params.add(p.at("name").get<std::string>(), rows, cols, take(rows * cols));
        auto& e = out.params.entries().back();
        e.m = take(rows * cols);
        e.v = take(rows * cols);
    }
    if (offset != bytes.size()) throw fail("trailing bytes");
    return out;
}

inline void save_checkpoint(const std::string& path, const ParamStore& store, const nlohmann::json& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    const std::string bytes = serialize_checkpoint(store, meta);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for checkpoint '" + path + "'");
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, "'" + path + "'");
}

}  // namespace execrl::nn
