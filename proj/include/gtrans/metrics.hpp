#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gtrans/dataset.hpp"
#include "gtrans/graph.hpp"
#include "gtrans/model.hpp"
#include "gtrans/rng.hpp"

namespace gtrans {

struct MetricPair {
    double mse = 0.0;
    double mape = 0.0;
};

// Plain-value prediction, detached from any tape.
struct Prediction {
    std::vector<double> a_pred;  // n x n
    std::vector<double> f_pred;  // n x d_F
    int n = 0;
    int d_f = 0;
};

namespace detail {

// Class-balanced adjacency averaging: edges and off-diagonal non-edges each
// contribute half; if one class is absent the present class takes weight 1.
// The diagonal never enters the metric. Attributes add a plain mean on top.
template <typename PerEntry>
double balanced_metric(const Prediction& pred, const Graph& target, PerEntry entry) {
    double edge_sum = 0.0, non_sum = 0.0;
    std::size_t edge_cnt = 0, non_cnt = 0;
    for (int i = 0; i < target.n; ++i) {
        for (int j = 0; j < target.n; ++j) {
            if (i == j) continue;
            const double p = pred.a_pred[static_cast<std::size_t>(i) * target.n + j];
            const double t = target.a(i, j);
            if (t > 0.0) {
                edge_sum += entry(p, t);
                ++edge_cnt;
            } else {
                non_sum += entry(p, t);
                ++non_cnt;
            }
        }
    }
    double adj = 0.0;
    if (edge_cnt > 0 && non_cnt > 0)
        adj = 0.5 * edge_sum / static_cast<double>(edge_cnt) +
              0.5 * non_sum / static_cast<double>(non_cnt);
    else if (edge_cnt > 0)
        adj = edge_sum / static_cast<double>(edge_cnt);
    else if (non_cnt > 0)
        adj = non_sum / static_cast<double>(non_cnt);
    double attr = 0.0;
    const std::size_t attr_n = target.attr.size();
    for (std::size_t i = 0; i < attr_n; ++i) attr += entry(pred.f_pred[i], target.attr[i]);
    if (attr_n > 0) attr /= static_cast<double>(attr_n);
    return adj + attr;
}

}  // namespace detail

inline double weighted_mse(const Prediction& pred, const Graph& target) {
    if (pred.n != target.n || pred.d_f != target.attr_dim)
        throw std::invalid_argument("weighted_mse: shape mismatch");
    return detail::balanced_metric(pred, target, [](double p, double t) {
        const double d = p - t;
        return d * d;
    });
}

inline double weighted_mape(const Prediction& pred, const Graph& target) {
    if (pred.n != target.n || pred.d_f != target.attr_dim)
        throw std::invalid_argument("weighted_mape: shape mismatch");
    return detail::balanced_metric(pred, target, [](double p, double t) {
        return std::abs(p - t) / std::max(std::abs(t), 1.0);
    });
}

// Full test-time path for one pair: encode the source with fresh anchors,
// translate, decode in the target domain.
inline Prediction predict_translation(const Model& model, const Graph& source, Rng& anchor_rng) {
    NoGradScope no_grad;
    const auto anchors = select_anchors(source, model.cfg.dims.k, anchor_rng);
    const PositionEmbedding pos = model.make_position(source, anchors);
    const NodeEmbeddings emb = model.encode_source(source, pos);
    const auto [h_t, p_t] = model.translate_embeddings(emb);
    const DecodedGraph dec = model.decode_target(h_t, p_t);
    Prediction out;
    out.n = source.n;
    out.d_f = model.d_f;
    out.a_pred = dec.a_pred.value();
    out.f_pred = dec.f_pred.value();
    return out;
}

inline MetricPair evaluate_test(const Model& model, const std::vector<PairedExample>& paired_test,
                                std::uint64_t seed) {
    if (paired_test.empty()) throw std::invalid_argument("evaluate_test: empty test set");
    MetricPair acc;
    for (std::size_t i = 0; i < paired_test.size(); ++i) {
        Rng rng(substream(seed, "eval.anchors", i));
        const Prediction pred = predict_translation(model, paired_test[i].source, rng);
        acc.mse += weighted_mse(pred, paired_test[i].target);
        acc.mape += weighted_mape(pred, paired_test[i].target);
    }
    acc.mse /= static_cast<double>(paired_test.size());
    acc.mape /= static_cast<double>(paired_test.size());
    return acc;
}

}  // namespace gtrans
