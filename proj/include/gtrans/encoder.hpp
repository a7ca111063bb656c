#pragma once

#include <string>
#include <vector>

#include "gtrans/config.hpp"
#include "gtrans/graph.hpp"
#include "gtrans/tensor.hpp"

namespace gtrans {

// Message-passing encoder with skip connections and a parallel position
// stream. Each block runs linear+ReLU on [self || neighbor-mean] and then
// re-concatenates the raw input (attributes for the feature stream, position
// embedding for the position stream), so the block output widths are
// d_hidden + d_F and d_hidden + k throughout.
struct EncoderBlock {
    Tensor w_f, b_f;  // feature stream
    Tensor w_p, b_p;  // position stream
};

struct EncoderParams {
    std::vector<EncoderBlock> blocks;
    int d_f = 0;
    int k = 0;
    int d_hidden = 0;

    int d_h() const { return d_hidden + d_f; }
    int d_p() const { return d_hidden + k; }

    std::vector<Tensor> params() const {
        std::vector<Tensor> out;
        for (const auto& b : blocks) {
            out.push_back(b.w_f);
            out.push_back(b.b_f);
            out.push_back(b.w_p);
            out.push_back(b.b_p);
        }
        return out;
    }
};

inline EncoderParams encoder_param_init(int d_f, int k, int d_hidden, int layers,
                                        const std::string& prefix, Rng& rng) {
    if (layers < 1) throw std::invalid_argument("encoder: need at least one block");
    if (d_f < 1 || k < 1 || d_hidden < 1)
        throw std::invalid_argument("encoder: dims must be positive");
    EncoderParams p;
    p.d_f = d_f;
    p.k = k;
    p.d_hidden = d_hidden;
    int wf = d_f;  // feature-stream width entering the block
    int wp = k;
    for (int l = 0; l < layers; ++l) {
        EncoderBlock b;
        const std::string tag = prefix + ".block" + std::to_string(l);
        b.w_f = Tensor::glorot(2 * wf, d_hidden, tag + ".w_f", rng);
        b.b_f = Tensor::parameter(1, d_hidden, tag + ".b_f");
        b.w_p = Tensor::glorot(2 * wp, d_hidden, tag + ".w_p", rng);
        b.b_p = Tensor::parameter(1, d_hidden, tag + ".b_p");
        p.blocks.push_back(std::move(b));
        wf = d_hidden + d_f;
        wp = d_hidden + k;
    }
    return p;
}

struct NodeEmbeddings {
    Tensor h;  // n x (d_hidden + d_F)
    Tensor p;  // n x (d_hidden + k)
};

// Row-normalized adjacency (neighbor mean); isolated nodes get a zero row.
// With agg_sum the raw adjacency is used instead.
inline Tensor aggregation_matrix(const Graph& g, bool agg_sum) {
    std::vector<double> m(static_cast<std::size_t>(g.n) * g.n, 0.0);
    for (int i = 0; i < g.n; ++i) {
        const int deg = g.degree(i);
        if (deg == 0) continue;
        const double w = agg_sum ? 1.0 : 1.0 / static_cast<double>(deg);
        for (int j = 0; j < g.n; ++j)
            if (g.has_edge(i, j)) m[static_cast<std::size_t>(i) * g.n + j] = w;
    }
    return Tensor::constant(g.n, g.n, std::move(m));
}

inline NodeEmbeddings encode(const Graph& g, const PositionEmbedding& pos,
                             const EncoderParams& params, bool agg_sum = false) {
    if (g.attr_dim != params.d_f)
        throw std::invalid_argument("encode: graph attribute width " + std::to_string(g.attr_dim) +
                                    " != encoder d_F " + std::to_string(params.d_f));
    if (pos.k != params.k)
        throw std::invalid_argument("encode: position width " + std::to_string(pos.k) +
                                    " != encoder k " + std::to_string(params.k));
    const Tensor agg = aggregation_matrix(g, agg_sum);
    const Tensor f0 = Tensor::constant(g.n, g.attr_dim, g.attr);
    const Tensor p0 = Tensor::constant(pos.n, pos.k, pos.values);
    Tensor h = f0;
    Tensor p = p0;
    for (const EncoderBlock& b : params.blocks) {
        Tensor hmsg = concat(h, matmul(agg, h), 1);
        h = concat(relu(affine(hmsg, b.w_f, b.b_f)), f0, 1);
        Tensor pmsg = concat(p, matmul(agg, p), 1);
        p = concat(relu(affine(pmsg, b.w_p, b.b_p)), p0, 1);
    }
    return {h, p};
}

}  // namespace gtrans
