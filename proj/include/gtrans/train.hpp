#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gtrans/adam.hpp"
#include "gtrans/checkpoint.hpp"
#include "gtrans/config.hpp"
#include "gtrans/dataset.hpp"
#include "gtrans/metrics.hpp"
#include "gtrans/model.hpp"

namespace gtrans {

struct EpochRecord {
    std::string phase;
    int epoch = 0;
    double l_rec_s = 0.0;
    double l_rec_t = 0.0;
    double l_trans = 0.0;
    double l_mi = 0.0;
    double total = 0.0;
};

struct RunReport {
    std::vector<EpochRecord> epochs;
    MetricPair final_metrics;
    bool has_final_metrics = false;
    double wall_seconds = 0.0;
    nlohmann::json config;
    // Discriminator means on a held-out slice right after MI pretraining.
    double mi_holdout_matched = 0.0;
    double mi_holdout_deranged = 0.0;
    bool mi_holdout_set = false;
};

inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline void write_report_csv(const RunReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "phase,epoch,L_rec_s,L_rec_t,L_trans,L_MI,total\n";
    for (const EpochRecord& r : report.epochs)
        os << r.phase << ',' << r.epoch << ',' << format_g17(r.l_rec_s) << ','
           << format_g17(r.l_rec_t) << ',' << format_g17(r.l_trans) << ',' << format_g17(r.l_mi)
           << ',' << format_g17(r.total) << '\n';
}

// A tagged minibatch; graphs are borrowed from the dataset.
struct Batch {
    std::vector<const PairedExample*> paired;
    std::vector<const Graph*> unpaired_source;
    std::vector<const Graph*> unpaired_target;
    // anchor streams keyed per graph by the caller
    std::vector<std::uint64_t> paired_anchor_seeds;
    std::vector<std::uint64_t> source_anchor_seeds;
    std::vector<std::uint64_t> target_anchor_seeds;

    bool empty() const {
        return paired.empty() && unpaired_source.empty() && unpaired_target.empty();
    }
};

struct ObjectiveParts {
    Tensor total;
    double l_rec_s = 0.0;
    double l_rec_t = 0.0;
    double l_trans = 0.0;
    double l_mi = 0.0;
};

namespace detail {

inline std::vector<int> anchors_for(const Graph& g, int k, std::uint64_t seed) {
    Rng rng(seed);
    return select_anchors(g, k, rng);
}

inline Tensor mean_of(std::vector<Tensor>& terms) {
    Tensor acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return mul_scalar(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace detail

// Eq.-level composite objective over one tagged batch:
//   mean paired L_trans
//   + lambda * (mean L_rec over source graphs present + mean over targets)
//   + mu * (-MI estimate over unpaired source translations).
// Component values are exposed for logging. MI needs >= 2 unpaired sources
// in the batch and is skipped otherwise.
inline ObjectiveParts full_objective(const Batch& batch, const Model& model,
                                     const TrainConfig& cfg, Rng& derangement_rng) {
    if (batch.empty()) throw std::invalid_argument("full_objective: empty batch");
    std::vector<Tensor> trans_terms, rec_s_terms, rec_t_terms;
    std::vector<std::pair<Tensor, Tensor>> mi_pairs;

    for (std::size_t i = 0; i < batch.paired.size(); ++i) {
        const PairedExample& ex = *batch.paired[i];
        const auto anchors = detail::anchors_for(ex.source, cfg.dims.k,
                                                 batch.paired_anchor_seeds[i]);
        const NodeEmbeddings es = model.encode_source(ex.source,
                                                      model.make_position(ex.source, anchors));
        const NodeEmbeddings et = model.encode_target(ex.target,
                                                      model.make_position(ex.target, anchors));
        rec_s_terms.push_back(reconstruction_loss(ex.source, model.decode_source(es), cfg.delta));
        rec_t_terms.push_back(
            reconstruction_loss(ex.target, model.decode_target(et.h, et.p), cfg.delta));
        trans_terms.push_back(
            translation_loss(model.translate_embeddings(es), {et.h, et.p}));
    }
    for (std::size_t i = 0; i < batch.unpaired_source.size(); ++i) {
        const Graph& g = *batch.unpaired_source[i];
        const auto anchors = detail::anchors_for(g, cfg.dims.k, batch.source_anchor_seeds[i]);
        const NodeEmbeddings e = model.encode_source(g, model.make_position(g, anchors));
        rec_s_terms.push_back(reconstruction_loss(g, model.decode_source(e), cfg.delta));
        if (model.cfg.mi_enabled() && cfg.mu > 0.0) {
            const auto [h_t, p_t] = model.translate_embeddings(e);
            mi_pairs.emplace_back(model.graph_feature(e.h, e.p), model.graph_feature(h_t, p_t));
        }
    }
    for (std::size_t i = 0; i < batch.unpaired_target.size(); ++i) {
        const Graph& g = *batch.unpaired_target[i];
        const auto anchors = detail::anchors_for(g, cfg.dims.k, batch.target_anchor_seeds[i]);
        const NodeEmbeddings e = model.encode_target(g, model.make_position(g, anchors));
        rec_t_terms.push_back(
            reconstruction_loss(g, model.decode_target(e.h, e.p), cfg.delta));
    }

    ObjectiveParts parts;
    Tensor total = Tensor::scalar(0.0);
    if (!trans_terms.empty()) {
        Tensor t = detail::mean_of(trans_terms);
        parts.l_trans = t.scalar_value();
        total = add(total, t);
    }
    if (!rec_s_terms.empty()) {
        Tensor t = detail::mean_of(rec_s_terms);
        parts.l_rec_s = t.scalar_value();
        total = add(total, mul_scalar(t, cfg.lambda));
    }
    if (!rec_t_terms.empty()) {
        Tensor t = detail::mean_of(rec_t_terms);
        parts.l_rec_t = t.scalar_value();
        total = add(total, mul_scalar(t, cfg.lambda));
    }
    if (mi_pairs.size() >= 2) {
        MiObjective mi = mi_objective(mi_pairs, derangement_rng, model.mi);
        parts.l_mi = mi.mi_score.scalar_value();
        total = add(total, mul_scalar(mi.mi_score, -cfg.effective_mu()));
    }
    parts.total = total;
    return parts;
}

// Four-phase schedule: autoencoder pretraining, translator fitting on frozen
// embeddings, MI-estimator pretraining, then alternating paired/unpaired
// fine-tuning of the full objective. All per-epoch randomness (shuffles,
// anchors, derangements) is derived statelessly from (seed, tag, epoch, ...),
// so a resumed run continues on exactly the stream a straight run would use.
class Trainer {
public:
    Trainer(const Dataset& data, const TrainConfig& cfg)
        : data_(&data), cfg_(cfg) {
        cfg_.validate();
        Rng init_rng(substream(cfg_.seed, "init"));
        const int d_f = infer_attr_dim();
        model_ = Model::init(cfg_, d_f, init_rng);
        opt_model_ = std::make_unique<Adam>(model_.non_mi_params());
        opt_mi_ = std::make_unique<Adam>(model_.mi.params());
        report_.config = config_snapshot(cfg_);
    }

    Model& model() { return model_; }
    const Model& model() const { return model_; }
    RunReport& report() { return report_; }
    const TrainConfig& cfg() const { return cfg_; }
    int finetune_epochs_done() const { return finetune_done_; }

    void run_all() {
        const auto start = std::chrono::steady_clock::now();
        pretrain_autoencoders();
        train_translator();
        pretrain_mi();
        finetune();
        if (!data_->paired_test.empty()) {
            report_.final_metrics = evaluate();
            report_.has_final_metrics = true;
        }
        report_.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }

    MetricPair evaluate() const {
        return evaluate_test(model_, data_->paired_test, substream(cfg_.seed, "eval"));
    }

    // Phase 1: reconstruction on every graph available in each domain;
    // translator and MI estimator untouched.
    void pretrain_autoencoders() {
        std::vector<const Graph*> src_pool, tgt_pool;
        for (const auto& ex : data_->paired_train) {
            src_pool.push_back(&ex.source);
            tgt_pool.push_back(&ex.target);
        }
        for (const auto& g : data_->unpaired_source) src_pool.push_back(&g);
        for (const auto& g : data_->unpaired_target) tgt_pool.push_back(&g);
        if (cfg_.epochs.pretrain_ae > 0 && (src_pool.empty() || tgt_pool.empty()))
            throw std::invalid_argument("pretrain_autoencoders: need graphs in both domains");

        auto src_params = merge(model_.enc_s.params(), model_.dec_s.params());
        auto tgt_params = merge(model_.enc_t.params(), model_.dec_t.params());
        Adam opt_s(src_params), opt_t(tgt_params);

        for (int e = 0; e < cfg_.epochs.pretrain_ae; ++e) {
            const double ls = ae_epoch(src_pool, opt_s, /*source=*/true, e);
            const double lt = ae_epoch(tgt_pool, opt_t, /*source=*/false, e);
            EpochRecord r;
            r.phase = "pretrain_ae";
            r.epoch = e;
            r.l_rec_s = ls;
            r.l_rec_t = lt;
            r.total = ls + lt;
            report_.epochs.push_back(r);
        }
    }

    // Phase 2: translator regression on frozen (detached) embeddings.
    void train_translator() {
        if (cfg_.epochs.pretrain_trans == 0) return;
        if (model_.trans.identity) return;  // nothing to train
        if (data_->paired_train.empty())
            throw std::invalid_argument("train_translator: no paired examples");
        Adam opt(model_.trans.params());
        for (int e = 0; e < cfg_.epochs.pretrain_trans; ++e) {
            std::vector<std::size_t> order = shuffled_indices(data_->paired_train.size(),
                                                              "trans.shuffle", e);
            double loss_sum = 0.0;
            std::size_t batches = 0;
            for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg_.batch_size) {
                Tape tape;
                TapeScope scope(tape);
                std::vector<Tensor> terms;
                for (std::size_t i = b0; i < std::min(order.size(), b0 + cfg_.batch_size); ++i) {
                    const PairedExample& ex = data_->paired_train[order[i]];
                    Tensor hs, ps, ht, pt;
                    {
                        NoGradScope ng;
                        const auto anchors = detail::anchors_for(
                            ex.source, cfg_.dims.k,
                            substream(cfg_.seed, "anchors.trans", e, order[i]));
                        const auto es =
                            model_.encode_source(ex.source, model_.make_position(ex.source, anchors));
                        const auto et =
                            model_.encode_target(ex.target, model_.make_position(ex.target, anchors));
                        hs = es.h;
                        ps = es.p;
                        ht = et.h;
                        pt = et.p;
                    }
                    terms.push_back(
                        translation_loss(translate(hs, ps, model_.trans, cfg_.readout_sum),
                                         {ht, pt}));
                }
                Tensor loss = detail::mean_of(terms);
                backward(loss);
                opt.step(cfg_.lr);
                opt.zero_grad();
                loss_sum += loss.scalar_value();
                ++batches;
            }
            EpochRecord r;
            r.phase = "pretrain_trans";
            r.epoch = e;
            r.l_trans = loss_sum / static_cast<double>(batches);
            r.total = r.l_trans;
            report_.epochs.push_back(r);
        }
    }

    // Phase 3: the discriminator alone, on detached global features of
    // unpaired source graphs and their translations.
    void pretrain_mi() {
        if (!model_.cfg.mi_enabled() || cfg_.epochs.pretrain_mi == 0) return;
        if (data_->unpaired_source.size() < 2)
            throw std::invalid_argument("pretrain_mi: need >= 2 unpaired source graphs");
        Adam opt(model_.mi.params());
        for (int e = 0; e < cfg_.epochs.pretrain_mi; ++e) {
            std::vector<std::size_t> order = shuffled_indices(data_->unpaired_source.size(),
                                                              "mi.shuffle", e);
            double mi_sum = 0.0;
            std::size_t batches = 0;
            std::size_t batch_index = 0;
            for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg_.batch_size, ++batch_index) {
                const std::size_t b1 = std::min(order.size(), b0 + cfg_.batch_size);
                if (b1 - b0 < 2) continue;  // a singleton has no derangement
                std::vector<std::pair<Tensor, Tensor>> pairs;
                {
                    NoGradScope ng;
                    for (std::size_t i = b0; i < b1; ++i)
                        pairs.push_back(global_pair(
                            data_->unpaired_source[order[i]],
                            substream(cfg_.seed, "anchors.mi", e, order[i])));
                }
                Tape tape;
                TapeScope scope(tape);
                Rng drng(substream(cfg_.seed, "mi.derange", e, batch_index));
                MiObjective obj = mi_objective(pairs, drng, model_.mi);
                backward(obj.estimator_loss);
                opt.step(cfg_.lr);
                opt.zero_grad();
                mi_sum += obj.mi_score.scalar_value();
                ++batches;
            }
            EpochRecord r;
            r.phase = "pretrain_mi";
            r.epoch = e;
            r.l_mi = batches ? mi_sum / static_cast<double>(batches) : 0.0;
            r.total = -r.l_mi;
            report_.epochs.push_back(r);
        }
        record_mi_holdout();
    }

    // Phase 4: alternating updates. Per iteration: (a) paired batch on
    // L_trans + lambda*L_rec for all non-MI parameters, (b) one estimator
    // step on the upcoming unpaired batch, (c) that unpaired batch on
    // lambda*L_rec - mu*MI for the non-MI parameters.
    void finetune() {
        const int target_epochs = cfg_.epochs.finetune;
        for (int e = finetune_done_; e < target_epochs; ++e) {
            finetune_one_epoch(e);
            finetune_done_ = e + 1;
        }
    }

    void finetune_one_epoch(int e) {
        struct Tag {
            bool source;
            std::size_t idx;
        };
        std::vector<std::size_t> paired_order = shuffled_indices(data_->paired_train.size(),
                                                                 "ft.shuffle.paired", e);
        std::vector<Tag> unpaired;
        for (std::size_t i = 0; i < data_->unpaired_source.size(); ++i)
            unpaired.push_back({true, i});
        for (std::size_t i = 0; i < data_->unpaired_target.size(); ++i)
            unpaired.push_back({false, i});
        {
            Rng rng(substream(cfg_.seed, "ft.shuffle.unpaired", e));
            rng.shuffle(unpaired);
        }
        const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
        const std::size_t n_unpaired_batches = (unpaired.size() + bs - 1) / bs;
        const std::size_t n_paired_batches = (paired_order.size() + bs - 1) / bs;
        // One iteration per paired batch; with no paired data the loop still
        // walks the unpaired batches once.
        const std::size_t n_iters = n_paired_batches > 0 ? n_paired_batches : n_unpaired_batches;

        double sum_rec_s = 0.0, sum_rec_t = 0.0, sum_trans = 0.0, sum_mi = 0.0, sum_total = 0.0;
        std::size_t cnt_rec_s = 0, cnt_rec_t = 0, cnt_trans = 0, cnt_mi = 0;
        std::size_t iters = 0;

        for (std::size_t it = 0; it < n_iters; ++it) {
            const std::size_t b0 = it * bs;
            double iter_total = 0.0;
            // (a) paired step
            if (b0 < paired_order.size()) {
                Batch batch;
                for (std::size_t i = b0; i < std::min(paired_order.size(), b0 + bs); ++i) {
                    batch.paired.push_back(&data_->paired_train[paired_order[i]]);
                    batch.paired_anchor_seeds.push_back(
                        substream(cfg_.seed, "ft.anchors.paired", e, paired_order[i]));
                }
                Tape tape;
                TapeScope scope(tape);
                Rng drng(substream(cfg_.seed, "ft.derange.paired", e, b0));
                ObjectiveParts parts = full_objective(batch, model_, cfg_, drng);
                backward(parts.total);
                opt_model_->step(cfg_.lr);
                opt_model_->zero_grad();
                zero_grads(model_.mi.params());
                sum_trans += parts.l_trans;
                ++cnt_trans;
                sum_rec_s += parts.l_rec_s;
                ++cnt_rec_s;
                sum_rec_t += parts.l_rec_t;
                ++cnt_rec_t;
                iter_total += parts.total.scalar_value();
            }
            // unpaired steps, cycling through the unpaired batches
            if (!unpaired.empty()) {
                const std::size_t ub = iters % n_unpaired_batches;
                const std::size_t u0 = ub * bs;
                const std::size_t u1 = std::min(unpaired.size(), u0 + bs);
                Batch batch;
                std::vector<std::pair<const Graph*, std::uint64_t>> mi_sources;
                for (std::size_t i = u0; i < u1; ++i) {
                    const Tag& t = unpaired[i];
                    const std::uint64_t aseed = substream(
                        cfg_.seed, t.source ? "ft.anchors.us" : "ft.anchors.ut", e, t.idx);
                    if (t.source) {
                        batch.unpaired_source.push_back(&data_->unpaired_source[t.idx]);
                        batch.source_anchor_seeds.push_back(aseed);
                        mi_sources.emplace_back(&data_->unpaired_source[t.idx], aseed);
                    } else {
                        batch.unpaired_target.push_back(&data_->unpaired_target[t.idx]);
                        batch.target_anchor_seeds.push_back(aseed);
                    }
                }
                // (b) estimator step on this batch's source pairs
                if (model_.cfg.mi_enabled() && mi_sources.size() >= 2) {
                    std::vector<std::pair<Tensor, Tensor>> pairs;
                    {
                        NoGradScope ng;
                        for (const auto& [g, aseed] : mi_sources)
                            pairs.push_back(global_pair(*g, aseed));
                    }
                    Tape tape;
                    TapeScope scope(tape);
                    Rng drng(substream(cfg_.seed, "ft.derange.est", e, b0));
                    MiObjective obj = mi_objective(pairs, drng, model_.mi);
                    backward(obj.estimator_loss);
                    opt_mi_->step(cfg_.lr);
                    opt_mi_->zero_grad();
                }
                // (c) model step on the unpaired objective
                {
                    Tape tape;
                    TapeScope scope(tape);
                    Rng drng(substream(cfg_.seed, "ft.derange.model", e, b0));
                    ObjectiveParts parts = full_objective(batch, model_, cfg_, drng);
                    backward(parts.total);
                    opt_model_->step(cfg_.lr);
                    opt_model_->zero_grad();
                    zero_grads(model_.mi.params());
                    if (!batch.unpaired_source.empty()) {
                        sum_rec_s += parts.l_rec_s;
                        ++cnt_rec_s;
                    }
                    if (!batch.unpaired_target.empty()) {
                        sum_rec_t += parts.l_rec_t;
                        ++cnt_rec_t;
                    }
                    if (model_.cfg.mi_enabled() && batch.unpaired_source.size() >= 2) {
                        sum_mi += parts.l_mi;
                        ++cnt_mi;
                    }
                    iter_total += parts.total.scalar_value();
                }
            }
            sum_total += iter_total;
            ++iters;
        }

        EpochRecord r;
        r.phase = "finetune";
        r.epoch = e;
        r.l_rec_s = cnt_rec_s ? sum_rec_s / static_cast<double>(cnt_rec_s) : 0.0;
        r.l_rec_t = cnt_rec_t ? sum_rec_t / static_cast<double>(cnt_rec_t) : 0.0;
        r.l_trans = cnt_trans ? sum_trans / static_cast<double>(cnt_trans) : 0.0;
        r.l_mi = cnt_mi ? sum_mi / static_cast<double>(cnt_mi) : 0.0;
        r.total = iters ? sum_total / static_cast<double>(iters) : 0.0;
        report_.epochs.push_back(r);
    }

    // Discriminator scores on matched vs deranged pairs over a graph slice.
    std::pair<double, double> mi_score_split(const std::vector<const Graph*>& slice) const {
        NoGradScope ng;
        std::vector<std::pair<Tensor, Tensor>> pairs;
        for (std::size_t i = 0; i < slice.size(); ++i)
            pairs.push_back(global_pair(*slice[i],
                                        substream(cfg_.seed, "mi.holdout.anchors", i)));
        double matched = 0.0, deranged = 0.0;
        Rng rng(substream(cfg_.seed, "mi.holdout.derange"));
        const auto pi = rng.derangement(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            matched += mi_scores(concat(pairs[i].first, pairs[i].second, 1), model_.mi)
                           .scalar_value();
            deranged += mi_scores(concat(pairs[i].first, pairs[pi[i]].second, 1), model_.mi)
                            .scalar_value();
        }
        const double inv = 1.0 / static_cast<double>(pairs.size());
        return {matched * inv, deranged * inv};
    }

    // ------------------------------------------------------------------
    // Run directory + checkpoints
    // ------------------------------------------------------------------

    void save_run(const std::string& dir) {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        write_config_snapshot(cfg_, dir + "/config");
        write_report_csv(report_, dir + "/report.csv");
        if (report_.has_final_metrics) {
            nlohmann::json fm;
            fm["mse"] = report_.final_metrics.mse;
            fm["mape"] = report_.final_metrics.mape;
            std::ofstream os(dir + "/final_metrics", std::ios::trunc);
            os << fm.dump(2) << "\n";
        }
        save_checkpoint(dir + "/checkpoint");
        std::ofstream log(dir + "/log", std::ios::trunc);
        log << "wall_seconds=" << format_g17(report_.wall_seconds) << "\n";
    }

    void save_checkpoint(const std::string& stem) const {
        std::vector<CheckpointEntry> entries;
        for (const Tensor& p : model_.all_params())
            entries.push_back({p.name(), p.rows(), p.cols(), p.value()});
        append_adam(entries, *opt_model_, "adam.model");
        append_adam(entries, *opt_mi_, "adam.mi");
        nlohmann::json meta;
        meta["finetune_epochs_done"] = finetune_done_;
        meta["adam_model_steps"] = opt_model_->steps();
        meta["adam_mi_steps"] = opt_mi_->steps();
        meta["seed"] = cfg_.seed;
        gtrans::save_checkpoint(stem, entries, meta);
    }

    void load_checkpoint(const std::string& stem) {
        Checkpoint ckpt = gtrans::load_checkpoint(stem);
        auto params = model_.all_params();
        load_params(ckpt, params);
        restore_adam(ckpt, *opt_model_, "adam.model");
        restore_adam(ckpt, *opt_mi_, "adam.mi");
        finetune_done_ = ckpt.meta.value("finetune_epochs_done", 0);
        opt_model_->set_steps(ckpt.meta.value("adam_model_steps", std::uint64_t{0}));
        opt_mi_->set_steps(ckpt.meta.value("adam_mi_steps", std::uint64_t{0}));
    }

private:
    int infer_attr_dim() const {
        if (!data_->paired_train.empty()) return data_->paired_train[0].source.attr_dim;
        if (!data_->unpaired_source.empty()) return data_->unpaired_source[0].attr_dim;
        if (!data_->unpaired_target.empty()) return data_->unpaired_target[0].attr_dim;
        if (!data_->paired_test.empty()) return data_->paired_test[0].source.attr_dim;
        throw std::invalid_argument("trainer: dataset is empty");
    }

    static std::vector<Tensor> merge(std::vector<Tensor> a, const std::vector<Tensor>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    }

    std::vector<std::size_t> shuffled_indices(std::size_t n, std::string_view tag, int epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng rng(substream(cfg_.seed, tag, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        return order;
    }

    double ae_epoch(const std::vector<const Graph*>& pool, Adam& opt, bool source, int e) {
        if (pool.empty()) return 0.0;
        std::vector<std::size_t> order =
            shuffled_indices(pool.size(), source ? "ae.shuffle.s" : "ae.shuffle.t", e);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg_.batch_size) {
            Tape tape;
            TapeScope scope(tape);
            std::vector<Tensor> terms;
            for (std::size_t i = b0; i < std::min(order.size(), b0 + cfg_.batch_size); ++i) {
                const Graph& g = *pool[order[i]];
                const auto anchors = detail::anchors_for(
                    g, cfg_.dims.k,
                    substream(cfg_.seed, source ? "anchors.ae_s" : "anchors.ae_t", e, order[i]));
                const PositionEmbedding pos = model_.make_position(g, anchors);
                if (source) {
                    const NodeEmbeddings emb = model_.encode_source(g, pos);
                    terms.push_back(
                        reconstruction_loss(g, model_.decode_source(emb), cfg_.delta));
                } else {
                    const NodeEmbeddings emb = model_.encode_target(g, pos);
                    terms.push_back(
                        reconstruction_loss(g, model_.decode_target(emb.h, emb.p), cfg_.delta));
                }
            }
            Tensor loss = detail::mean_of(terms);
            backward(loss);
            opt.step(cfg_.lr);
            opt.zero_grad();
            loss_sum += loss.scalar_value();
            ++batches;
        }
        return loss_sum / static_cast<double>(batches);
    }

    // (g_s, g_t_pred) global features for one source graph, value-only.
    std::pair<Tensor, Tensor> global_pair(const Graph& g, std::uint64_t anchor_seed) const {
        const auto anchors = detail::anchors_for(g, cfg_.dims.k, anchor_seed);
        const NodeEmbeddings e = model_.encode_source(g, model_.make_position(g, anchors));
        const auto [h_t, p_t] = model_.translate_embeddings(e);
        return {model_.graph_feature(e.h, e.p), model_.graph_feature(h_t, p_t)};
    }

    void record_mi_holdout() {
        std::vector<const Graph*> slice;
        for (const auto& ex : data_->paired_test) slice.push_back(&ex.source);
        if (slice.size() < 2) return;
        const auto [matched, deranged] = mi_score_split(slice);
        report_.mi_holdout_matched = matched;
        report_.mi_holdout_deranged = deranged;
        report_.mi_holdout_set = true;
    }

    static void append_adam(std::vector<CheckpointEntry>& entries, Adam& opt,
                            const std::string& prefix) {
        const auto& params = opt.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            entries.push_back({prefix + "." + params[i].name() + ".m", params[i].rows(),
                               params[i].cols(), opt.moment1(i)});
            entries.push_back({prefix + "." + params[i].name() + ".v", params[i].rows(),
                               params[i].cols(), opt.moment2(i)});
        }
    }

    static void restore_adam(const Checkpoint& ckpt, Adam& opt, const std::string& prefix) {
        const auto& params = opt.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto* m = ckpt.find(prefix + "." + params[i].name() + ".m");
            const auto* v = ckpt.find(prefix + "." + params[i].name() + ".v");
            if (!m || !v)
                throw std::runtime_error("checkpoint missing optimizer state for '" +
                                         params[i].name() + "'");
            opt.moment1(i) = m->data;
            opt.moment2(i) = v->data;
        }
    }

    const Dataset* data_;
    TrainConfig cfg_;
    Model model_;
    std::unique_ptr<Adam> opt_model_;
    std::unique_ptr<Adam> opt_mi_;
    RunReport report_;
    int finetune_done_ = 0;
};

}  // namespace gtrans
