#pragma once

#include "execrl/nn/ops.hpp"
#include "execrl/nn/tensor.hpp"

#include <string>
#include <vector>

namespace execrl::nn {

// Weights of one gated recurrent unit. Gate blocks are laid out [reset | update | candidate]
// along the 3H columns.
struct GruParams {
    Tensor input_kernel;      // [I x 3H]
    Tensor recurrent_kernel;  // [H x 3H]
    Tensor input_bias;        // [1 x 3H]
    Tensor recurrent_bias;    // [1 x 3H]

    std::size_t input_width() const { return input_kernel.rows(); }
    std::size_t hidden_width() const { return recurrent_kernel.rows(); }
};

// One GRU update for a batch of rows:
//   r = sigmoid(x Wi_r + bi_r + h Wh_r + bh_r)
//   z = sigmoid(x Wi_z + bi_z + h Wh_z + bh_z)
//   n = tanh(x Wi_n + bi_n + r * (h Wh_n + bh_n))
//   h' = (1 - z) * n + z * h
inline Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p) {
    const std::size_t batch = x.rows();
    const std::size_t in = p.input_width();
    const std::size_t hid = p.hidden_width();
    if (x.cols() != in || h.cols() != hid || h.rows() != batch || p.input_kernel.cols() != 3 * hid ||
        p.recurrent_kernel.cols() != 3 * hid || p.input_bias.size() != 3 * hid || p.recurrent_bias.size() != 3 * hid)
        throw DimensionError("gru_cell: shape mismatch x" + x.shape_str() + " h" + h.shape_str() + " Wi" +
                             p.input_kernel.shape_str() + " Wh" + p.recurrent_kernel.shape_str());
    const std::size_t g3 = 3 * hid;
    std::vector<double> gi(batch * g3), gh(batch * g3);
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(p.input_bias.values().data(), g3, gi.data() + b * g3);
        std::copy_n(p.recurrent_bias.values().data(), g3, gh.data() + b * g3);
    }
    detail::gemm_accumulate(x.values().data(), p.input_kernel.values().data(), gi.data(), batch, in, g3);
    detail::gemm_accumulate(h.values().data(), p.recurrent_kernel.values().data(), gh.data(), batch, hid, g3);

    // saved: r, z, n, (h Wh_n + bh_n), each [batch x hid]
    std::vector<double> saved(4 * batch * hid);
    double* r = saved.data();
    double* z = r + batch * hid;
    double* n = z + batch * hid;
    double* hn = n + batch * hid;
    std::vector<double> out(batch * hid);
    const auto hv = h.values();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < hid; ++j) {
            const std::size_t k = b * hid + j;
            const double* gib = gi.data() + b * g3;
            const double* ghb = gh.data() + b * g3;
            r[k] = sigmoid_scalar(gib[j] + ghb[j]);
            z[k] = sigmoid_scalar(gib[hid + j] + ghb[hid + j]);
            hn[k] = ghb[2 * hid + j];
            n[k] = std::tanh(gib[2 * hid + j] + r[k] * hn[k]);
            out[k] = (1.0 - z[k]) * n[k] + z[k] * hv[k];
        }

    return make_result(
        batch, hid, std::move(out), {x, h, p.input_kernel, p.recurrent_kernel, p.input_bias, p.recurrent_bias},
        [batch, in, hid](Node& self) {
            const std::size_t g3 = 3 * hid;
            const double* r = self.saved.data();
            const double* z = r + batch * hid;
            const double* n = z + batch * hid;
            const double* hn = n + batch * hid;
            const auto& xv = self.parents[0]->value;
            const auto& hv = self.parents[1]->value;
            const auto& wi = self.parents[2]->value;
            const auto& wh = self.parents[3]->value;
            std::vector<double> dgi(batch * g3), dgh(batch * g3);
            std::vector<double> dh_direct(batch * hid);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t j = 0; j < hid; ++j) {
                    const std::size_t k = b * hid + j;
                    const double g = self.grad[k];
                    const double dn = g * (1.0 - z[k]);
                    const double dz = g * (hv[k] - n[k]);
                    dh_direct[k] = g * z[k];
                    const double dan = dn * (1.0 - n[k] * n[k]);
                    const double dr = dan * hn[k];
                    const double dar = dr * r[k] * (1.0 - r[k]);
                    const double daz = dz * z[k] * (1.0 - z[k]);
                    double* dgib = dgi.data() + b * g3;
                    double* dghb = dgh.data() + b * g3;
                    dgib[j] = dar;
                    dgib[hid + j] = daz;
                    dgib[2 * hid + j] = dan;
                    dghb[j] = dar;
                    dghb[hid + j] = daz;
                    dghb[2 * hid + j] = dan * r[k];
                }
            if (double* gx = parent_grad(self, 0)) detail::gemm_bt_accumulate(dgi.data(), wi.data(), gx, batch, in, g3);
            if (double* gh = parent_grad(self, 1)) {
                for (std::size_t k = 0; k < batch * hid; ++k) gh[k] += dh_direct[k];
                detail::gemm_bt_accumulate(dgh.data(), wh.data(), gh, batch, hid, g3);
            }
            if (double* gwi = parent_grad(self, 2)) detail::gemm_at_accumulate(xv.data(), dgi.data(), gwi, batch, in, g3);
            if (double* gwh = parent_grad(self, 3)) detail::gemm_at_accumulate(hv.data(), dgh.data(), gwh, batch, hid, g3);
            if (double* gbi = parent_grad(self, 4))
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t j = 0; j < g3; ++j) gbi[j] += dgi[b * g3 + j];
            if (double* gbh = parent_grad(self, 5))
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t j = 0; j < g3; ++j) gbh[j] += dgh[b * g3 + j];
        },
        std::move(saved));
}

// Runs the cell over inputs[0..], starting from `h0`; returns every hidden state.
inline std::vector<Tensor> gru_unroll(const std::vector<Tensor>& inputs, const Tensor& h0, const GruParams& p) {
    std::vector<Tensor> states;
    states.reserve(inputs.size());
    Tensor h = h0;
    for (const auto& x : inputs) {
        h = gru_cell(x, h, p);
        states.push_back(h);
    }
    return states;
}

}  // namespace execrl::nn
