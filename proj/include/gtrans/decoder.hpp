#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gtrans/graph.hpp"
#include "gtrans/tensor.hpp"

namespace gtrans {

// One multi-head attention block: queries and keys come from the position
// stream P, values from the feature stream H. Blocks are stacked with P held
// fixed; each block's output becomes the next block's H.
struct AttentionBlock {
    std::vector<Tensor> w_q, w_k, w_v;  // per head
    Tensor w_o;                         // (heads*d_v) x d_H
};

struct DecoderParams {
    std::vector<AttentionBlock> blocks;
    Tensor s_bilinear;                 // (d_H+d_P)^2 link-scoring matrix
    Tensor attr_w1, attr_b1, attr_w2, attr_b2;
    int d_h = 0;
    int d_p = 0;
    int d_k = 0;
    int d_v = 0;

    std::vector<Tensor> params() const {
        std::vector<Tensor> out;
        for (const auto& b : blocks) {
            for (const auto& t : b.w_q) out.push_back(t);
            for (const auto& t : b.w_k) out.push_back(t);
            for (const auto& t : b.w_v) out.push_back(t);
            out.push_back(b.w_o);
        }
        out.push_back(s_bilinear);
        out.push_back(attr_w1);
        out.push_back(attr_b1);
        out.push_back(attr_w2);
        out.push_back(attr_b2);
        return out;
    }
};

inline DecoderParams decoder_param_init(int d_h, int d_p, int d_f, int blocks, int heads, int d_k,
                                        int d_v, int attr_hidden, const std::string& prefix,
                                        Rng& rng) {
    DecoderParams p;
    p.d_h = d_h;
    p.d_p = d_p;
    p.d_k = d_k;
    p.d_v = d_v;
    for (int b = 0; b < blocks; ++b) {
        AttentionBlock blk;
        const std::string tag = prefix + ".block" + std::to_string(b);
        for (int h = 0; h < heads; ++h) {
            const std::string head = tag + ".head" + std::to_string(h);
            blk.w_q.push_back(Tensor::glorot(d_p, d_k, head + ".w_q", rng));
            blk.w_k.push_back(Tensor::glorot(d_p, d_k, head + ".w_k", rng));
            blk.w_v.push_back(Tensor::glorot(d_h, d_v, head + ".w_v", rng));
        }
        blk.w_o = Tensor::glorot(heads * d_v, d_h, tag + ".w_o", rng);
        p.blocks.push_back(std::move(blk));
    }
    const int d_e = d_h + d_p;
    p.s_bilinear = Tensor::glorot(d_e, d_e, prefix + ".s_bilinear", rng);
    p.attr_w1 = Tensor::glorot(d_e, attr_hidden, prefix + ".attr.w1", rng);
    p.attr_b1 = Tensor::parameter(1, attr_hidden, prefix + ".attr.b1");
    p.attr_w2 = Tensor::glorot(attr_hidden, d_f, prefix + ".attr.w2", rng);
    p.attr_b2 = Tensor::parameter(1, d_f, prefix + ".attr.b2");
    return p;
}

inline bool has_nan(const Tensor& t) {
    for (double x : t.value())
        if (std::isnan(x)) return true;
    return false;
}

// Scaled dot-product attention over all heads of one block.
inline Tensor attention_block(const Tensor& p, const Tensor& h, const AttentionBlock& blk,
                              int d_k, int block_index) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    Tensor heads;
    for (std::size_t i = 0; i < blk.w_q.size(); ++i) {
        Tensor q = matmul(p, blk.w_q[i]);
        Tensor k = matmul(p, blk.w_k[i]);
        Tensor scores = mul_scalar(matmul(q, transpose(k)), scale);
        if (has_nan(scores))
            throw std::runtime_error("attention: NaN scores in block " +
                                     std::to_string(block_index) + ", head " + std::to_string(i));
        Tensor out = matmul(row_softmax(scores), matmul(h, blk.w_v[i]));
        heads = i == 0 ? out : concat(heads, out, 1);
    }
    return matmul(heads, blk.w_o);
}

// Runs the block stack; with no_attention the feature stream passes through
// untouched (H_O = H).
inline Tensor decoder_attention(const Tensor& h, const Tensor& p, const DecoderParams& params,
                                bool no_attention = false) {
    if (no_attention) return h;
    Tensor h_o = h;
    for (std::size_t b = 0; b < params.blocks.size(); ++b)
        h_o = attention_block(p, h_o, params.blocks[b], params.d_k, static_cast<int>(b));
    return h_o;
}

// Link prediction: pairwise bilinear scores over E = [H_O || P] squashed to
// probabilities. Row-softmax normalization is available behind a flag.
inline Tensor predict_adjacency(const Tensor& h_o, const Tensor& p, const Tensor& s_bilinear,
                                bool row_softmax_probs = false) {
    if (h_o.rows() != p.rows())
        throw std::invalid_argument("predict_adjacency: row counts differ");
    Tensor e = concat(h_o, p, 1);
    Tensor scores = matmul(matmul(e, s_bilinear), transpose(e));
    return row_softmax_probs ? row_softmax(scores) : sigmoid(scores);
}

inline Tensor predict_attributes(const Tensor& h_o, const Tensor& p, const DecoderParams& params) {
    Tensor e = concat(h_o, p, 1);
    Tensor hidden = relu(affine(e, params.attr_w1, params.attr_b1));
    return affine(hidden, params.attr_w2, params.attr_b2);
}

struct DecodedGraph {
    Tensor a_pred;  // n x n probabilities
    Tensor f_pred;  // n x d_F
};

inline DecodedGraph decode(const Tensor& h, const Tensor& p, const DecoderParams& params,
                           bool no_attention = false, bool row_softmax_probs = false) {
    Tensor h_o = decoder_attention(h, p, params, no_attention);
    return {predict_adjacency(h_o, p, params.s_bilinear, row_softmax_probs),
            predict_attributes(h_o, p, params)};
}

// 1 on edges, delta elsewhere (the diagonal counts as non-edge: self-loops
// are absent by invariant).
inline Tensor edge_weight_mask(const Graph& g, double delta) {
    if (!(delta > 0.0 && delta <= 1.0))
        throw std::invalid_argument("edge_weight_mask: delta must be in (0, 1], got " +
                                    std::to_string(delta));
    std::vector<double> m(static_cast<std::size_t>(g.n) * g.n, delta);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            if (g.has_edge(i, j)) m[static_cast<std::size_t>(i) * g.n + j] = 1.0;
    return Tensor::constant(g.n, g.n, std::move(m));
}

// Masked squared-Frobenius adjacency error plus plain attribute error, each
// normalized by its element count so graph size does not rescale the loss.
inline Tensor reconstruction_loss(const Graph& g, const DecodedGraph& dec, double delta) {
    if (dec.a_pred.rows() != static_cast<std::size_t>(g.n) ||
        dec.a_pred.cols() != static_cast<std::size_t>(g.n))
        throw std::invalid_argument("reconstruction_loss: adjacency shape mismatch");
    if (dec.f_pred.rows() != static_cast<std::size_t>(g.n) ||
        dec.f_pred.cols() != static_cast<std::size_t>(g.attr_dim))
        throw std::invalid_argument("reconstruction_loss: attribute shape mismatch");
    const Tensor a = Tensor::constant(g.n, g.n, g.adj);
    const Tensor f = Tensor::constant(g.n, g.attr_dim, g.attr);
    const Tensor mask = edge_weight_mask(g, delta);
    Tensor adj_term = mul_scalar(frobenius_sq(mul(mask, sub(dec.a_pred, a))),
                                 1.0 / (static_cast<double>(g.n) * g.n));
    Tensor attr_term = mul_scalar(frobenius_sq(sub(dec.f_pred, f)),
                                  1.0 / (static_cast<double>(g.n) * g.attr_dim));
    return add(adj_term, attr_term);
}

}  // namespace gtrans
