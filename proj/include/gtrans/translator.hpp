#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gtrans/rng.hpp"
#include "gtrans/tensor.hpp"

namespace gtrans {

// Node-wise MLP bridging the two embedding spaces. Input per node is
// [H_v || P_v || readout], output is the translated [H || P] row, split
// afterwards. When `identity` is set (shared-embedding ablation) the module
// owns no parameters and passes embeddings through unchanged.
struct TranslatorParams {
    Tensor w1, b1, w2, b2, w3, b3;
    int d_h = 0;
    int d_p = 0;
    bool identity = false;

    std::vector<Tensor> params() const {
        if (identity) return {};
        return {w1, b1, w2, b2, w3, b3};
    }
};

inline TranslatorParams translator_param_init(int d_h, int d_p, int hidden,
                                              const std::string& prefix, Rng& rng) {
    TranslatorParams p;
    p.d_h = d_h;
    p.d_p = d_p;
    const int d_node = d_h + d_p;
    p.w1 = Tensor::glorot(2 * d_node, hidden, prefix + ".w1", rng);
    p.b1 = Tensor::parameter(1, hidden, prefix + ".b1");
    p.w2 = Tensor::glorot(hidden, hidden, prefix + ".w2", rng);
    p.b2 = Tensor::parameter(1, hidden, prefix + ".b2");
    p.w3 = Tensor::glorot(hidden, d_node, prefix + ".w3", rng);
    p.b3 = Tensor::parameter(1, d_node, prefix + ".b3");
    return p;
}

inline TranslatorParams translator_identity(int d_h, int d_p) {
    TranslatorParams p;
    p.d_h = d_h;
    p.d_p = d_p;
    p.identity = true;
    return p;
}

// Graph-level feature: mean (default) or sum pooling of [H || P] rows.
inline Tensor readout(const Tensor& h, const Tensor& p, bool sum_pool = false) {
    if (h.rows() != p.rows()) throw std::invalid_argument("readout: row counts differ");
    if (h.rows() == 0) throw std::invalid_argument("readout: zero-node graph");
    Tensor cat = concat(h, p, 1);
    return sum_pool ? sum_rows(cat) : mean_rows(cat);
}

inline std::pair<Tensor, Tensor> translate(const Tensor& h_s, const Tensor& p_s,
                                           const TranslatorParams& params,
                                           bool sum_pool = false) {
    if (params.identity) return {h_s, p_s};
    if (h_s.cols() != static_cast<std::size_t>(params.d_h) ||
        p_s.cols() != static_cast<std::size_t>(params.d_p))
        throw std::invalid_argument("translate: embedding widths do not match translator");
    const std::size_t n = h_s.rows();
    Tensor g = readout(h_s, p_s, sum_pool);
    Tensor input = concat(concat(h_s, p_s, 1), repeat_rows(g, n), 1);
    Tensor hidden = relu(affine(input, params.w1, params.b1));
    hidden = relu(affine(hidden, params.w2, params.b2));
    Tensor out = affine(hidden, params.w3, params.b3);
    Tensor h_t = slice_cols(out, 0, params.d_h);
    Tensor p_t = slice_cols(out, params.d_h, params.d_h + params.d_p);
    return {h_t, p_t};
}

// Per-element-normalized squared distance in the intermediate space.
inline Tensor translation_loss(const std::pair<Tensor, Tensor>& pred,
                               const std::pair<Tensor, Tensor>& target) {
    const Tensor& hp = pred.first;
    const Tensor& pp = pred.second;
    const Tensor& ht = target.first;
    const Tensor& pt = target.second;
    if (hp.rows() != ht.rows() || hp.cols() != ht.cols() || pp.rows() != pt.rows() ||
        pp.cols() != pt.cols())
        throw std::invalid_argument("translation_loss: shape mismatch");
    Tensor h_term = mul_scalar(frobenius_sq(sub(hp, ht)),
                               1.0 / static_cast<double>(hp.size()));
    Tensor p_term = mul_scalar(frobenius_sq(sub(pp, pt)),
                               1.0 / static_cast<double>(pp.size()));
    return add(h_term, p_term);
}

// Jensen-Shannon mutual-information discriminator: a small MLP scoring a
// (g_s, g_t_pred) pair.
struct MIEstimatorParams {
    Tensor w1, b1, w2, b2;

    std::vector<Tensor> params() const { return {w1, b1, w2, b2}; }
};

inline MIEstimatorParams mi_param_init(int d_global, int hidden, const std::string& prefix,
                                       Rng& rng) {
    MIEstimatorParams p;
    p.w1 = Tensor::glorot(2 * d_global, hidden, prefix + ".w1", rng);
    p.b1 = Tensor::parameter(1, hidden, prefix + ".b1");
    p.w2 = Tensor::glorot(hidden, 1, prefix + ".w2", rng);
    p.b2 = Tensor::parameter(1, 1, prefix + ".b2");
    return p;
}

// Scores a batch of pairs at once: rows of `pairs` are [g_s || g_t].
inline Tensor mi_scores(const Tensor& pairs, const MIEstimatorParams& t) {
    Tensor hidden = relu(affine(pairs, t.w1, t.b1));
    return affine(hidden, t.w2, t.b2);  // B x 1 unbounded scores
}

struct MiObjective {
    Tensor estimator_loss;  // minimized when training the estimator
    Tensor mi_score;        // JSD estimate; the model maximizes this
    std::vector<std::size_t> derangement;
};

// Positives are the given pairs; negatives mismatch them through an in-batch
// derangement, so no extra data is needed. The JSD estimate is
// E_pos[-softplus(-T)] - E_neg[softplus(T)].
inline MiObjective mi_objective(const std::vector<std::pair<Tensor, Tensor>>& pos_pairs,
                                Rng& rng, const MIEstimatorParams& t) {
    const std::size_t b = pos_pairs.size();
    if (b < 2)
        throw std::invalid_argument("mi_objective: need a batch of >= 2 pairs, got " +
                                    std::to_string(b));
    std::vector<std::size_t> pi = rng.derangement(b);
    Tensor pos;
    Tensor neg;
    for (std::size_t i = 0; i < b; ++i) {
        Tensor pos_row = concat(pos_pairs[i].first, pos_pairs[i].second, 1);
        Tensor neg_row = concat(pos_pairs[i].first, pos_pairs[pi[i]].second, 1);
        pos = i == 0 ? pos_row : concat(pos, pos_row, 0);
        neg = i == 0 ? neg_row : concat(neg, neg_row, 0);
    }
    Tensor t_pos = mi_scores(pos, t);
    Tensor t_neg = mi_scores(neg, t);
    Tensor e_pos = mean_rows(mul_scalar(softplus(mul_scalar(t_pos, -1.0)), -1.0));
    Tensor e_neg = mean_rows(softplus(t_neg));
    Tensor mi = sub(e_pos, e_neg);
    MiObjective out;
    out.mi_score = mi;
    out.estimator_loss = mul_scalar(mi, -1.0);
    out.derangement = std::move(pi);
    return out;
}

}  // namespace gtrans
