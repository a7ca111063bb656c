#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gtrans/dataset.hpp"
#include "gtrans/metrics.hpp"
#include "gtrans/train.hpp"

namespace gtrans {

// Runs jobs on up to `threads` workers. Each job owns its model, tape, and
// PRNG streams, so the only shared state is the job list itself.
inline void parallel_run(std::vector<std::function<void()>>& jobs, int threads) {
    if (threads < 1) threads = 1;
    const int workers = std::min<int>(threads, static_cast<int>(jobs.size()));
    if (workers <= 1) {
        for (auto& job : jobs) job();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                jobs[i]();
            }
        });
    }
    for (auto& t : pool) t.join();
}

struct SeedStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample std; meaningful only with >= 2 seeds
    int count = 0;
};

inline SeedStats seed_stats(const std::vector<double>& xs) {
    SeedStats s;
    s.count = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() >= 2) {
        double acc = 0.0;
        for (double x : xs) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Ablation suite
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string name;
    SeedStats mse;
    SeedStats mape;
};

inline std::vector<std::pair<std::string, AblationFlags>> ablation_variants() {
    AblationFlags shared, nopos, nomi, noattn, full;
    shared.shared_embedding = true;
    nopos.no_position = true;
    nomi.no_mi = true;
    noattn.no_attention = true;
    return {{"Shared Embedding", shared},
            {"No position", nopos},
            {"No MI", nomi},
            {"No multi-head attention", noattn},
            {"full", full}};
}

// Trains every variant on the same data with the same per-repeat seeds and
// reports test metrics per variant.
inline std::vector<AblationRow> run_ablation_suite(const Dataset& data, const TrainConfig& base,
                                                   int seeds, int threads = 1) {
    if (seeds < 1) throw std::invalid_argument("run_ablation_suite: need >= 1 seed");
    const auto variants = ablation_variants();
    std::vector<std::vector<MetricPair>> results(variants.size(),
                                                 std::vector<MetricPair>(seeds));
    std::vector<std::function<void()>> jobs;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        for (int s = 0; s < seeds; ++s) {
            jobs.push_back([&, v, s]() {
                TrainConfig cfg = base;
                cfg.ablation = variants[v].second;
                cfg.seed = substream(base.seed, "ablate.rep", static_cast<std::uint64_t>(s));
                Trainer trainer(data, cfg);
                trainer.run_all();
                results[v][s] = trainer.report().final_metrics;
            });
        }
    }
    parallel_run(jobs, threads);
    std::vector<AblationRow> rows;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        std::vector<double> mses, mapes;
        for (const MetricPair& m : results[v]) {
            mses.push_back(m.mse);
            mapes.push_back(m.mape);
        }
        rows.push_back({variants[v].first, seed_stats(mses), seed_stats(mapes)});
    }
    return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "variant,mse_mean,mse_std,mape_mean,mape_std\n";
    for (const AblationRow& r : rows) {
        os << r.name << ',' << format_g17(r.mse.mean) << ','
           << (r.mse.count >= 2 ? format_g17(r.mse.stddev) : std::string()) << ','
           << format_g17(r.mape.mean) << ','
           << (r.mape.count >= 2 ? format_g17(r.mape.stddev) : std::string()) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Unpaired-ratio sweep
// ---------------------------------------------------------------------------

struct RatioPoint {
    double ratio = 0.0;
    SeedStats mse;
    SeedStats mape;
};

struct RatioSweepSpec {
    int paired = 150;
    int paired_test = 100;
    int n_nodes = 20;
};

// Fixes the paired partition (the dataset seed is shared across ratios inside
// one repeat) and regenerates the unpaired partitions per ratio: total
// unpaired = round(ratio * paired), split evenly between the domains.
inline std::vector<RatioPoint> run_ratio_sweep(const TrainConfig& base,
                                               const RatioSweepSpec& spec,
                                               const std::vector<double>& ratios, int seeds,
                                               int threads = 1) {
    if (ratios.empty()) throw std::invalid_argument("run_ratio_sweep: no ratios given");
    if (seeds < 1) throw std::invalid_argument("run_ratio_sweep: need >= 1 seed");
    std::vector<std::vector<MetricPair>> results(ratios.size(), std::vector<MetricPair>(seeds));
    std::vector<std::function<void()>> jobs;
    for (std::size_t r = 0; r < ratios.size(); ++r) {
        for (int s = 0; s < seeds; ++s) {
            jobs.push_back([&, r, s]() {
                const double ratio = ratios[r];
                const int unpaired_total =
                    static_cast<int>(std::lround(ratio * spec.paired));
                DatasetCounts counts;
                counts.paired_train = spec.paired;
                counts.unpaired_source = (unpaired_total + 1) / 2;
                counts.unpaired_target = unpaired_total / 2;
                counts.paired_test = spec.paired_test;
                const std::uint64_t data_seed =
                    substream(base.seed, "ratio.data", static_cast<std::uint64_t>(s));
                Dataset ds = build_ba_dataset(counts, spec.n_nodes, data_seed);
                TrainConfig cfg = base;
                cfg.seed = substream(base.seed, "ratio.point",
                                     static_cast<std::uint64_t>(std::lround(ratio * 1000.0)),
                                     static_cast<std::uint64_t>(s));
                Trainer trainer(ds, cfg);
                trainer.run_all();
                results[r][s] = trainer.report().final_metrics;
            });
        }
    }
    parallel_run(jobs, threads);
    std::vector<RatioPoint> points;
    for (std::size_t r = 0; r < ratios.size(); ++r) {
        std::vector<double> mses, mapes;
        for (const MetricPair& m : results[r]) {
            mses.push_back(m.mse);
            mapes.push_back(m.mape);
        }
        points.push_back({ratios[r], seed_stats(mses), seed_stats(mapes)});
    }
    return points;
}

inline void write_ratio_csv(const std::vector<RatioPoint>& points, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "ratio,mse_mean,mse_std,mape_mean,mape_std\n";
    for (const RatioPoint& p : points) {
        os << format_g17(p.ratio) << ',' << format_g17(p.mse.mean) << ','
           << (p.mse.count >= 2 ? format_g17(p.mse.stddev) : std::string()) << ','
           << format_g17(p.mape.mean) << ','
           << (p.mape.count >= 2 ? format_g17(p.mape.stddev) : std::string()) << '\n';
    }
}

// ---------------------------------------------------------------------------
// lambda/mu sensitivity grid
// ---------------------------------------------------------------------------

struct GridPoint {
    double lambda = 0.0;
    double mu = 0.0;
    SeedStats mse;
    SeedStats mape;
};

// Pretraining runs once per repeat; every grid point fine-tunes from that
// shared snapshot, since lambda and mu only act during fine-tuning.
inline std::vector<GridPoint> run_sensitivity_grid(const Dataset& data, const TrainConfig& base,
                                                   const std::vector<double>& lambdas,
                                                   const std::vector<double>& mus, int seeds,
                                                   int threads = 1) {
    if (lambdas.empty() || mus.empty())
        throw std::invalid_argument("run_sensitivity_grid: empty grid");
    if (seeds < 1) throw std::invalid_argument("run_sensitivity_grid: need >= 1 seed");
    const std::size_t n_points = lambdas.size() * mus.size();
    std::vector<std::vector<MetricPair>> results(n_points, std::vector<MetricPair>(seeds));

    for (int s = 0; s < seeds; ++s) {
        const std::uint64_t rep_seed =
            substream(base.seed, "grid.rep", static_cast<std::uint64_t>(s));
        TrainConfig pre_cfg = base;
        pre_cfg.seed = rep_seed;
        pre_cfg.epochs.finetune = 0;
        Trainer pretrained(data, pre_cfg);
        pretrained.run_all();
        // Snapshot the pretrained parameter values; fine-tune optimizers are
        // fresh at this point, so values are the whole state.
        std::vector<std::vector<double>> snapshot;
        for (const Tensor& p : pretrained.model().all_params()) snapshot.push_back(p.value());

        std::vector<std::function<void()>> jobs;
        for (std::size_t li = 0; li < lambdas.size(); ++li) {
            for (std::size_t mi = 0; mi < mus.size(); ++mi) {
                jobs.push_back([&, li, mi, s]() {
                    TrainConfig cfg = base;
                    cfg.seed = rep_seed;
                    cfg.lambda = lambdas[li];
                    cfg.mu = mus[mi];
                    Trainer trainer(data, cfg);
                    auto params = trainer.model().all_params();
                    for (std::size_t i = 0; i < params.size(); ++i)
                        params[i].value() = snapshot[i];
                    trainer.finetune();
                    results[li * mus.size() + mi][s] = trainer.evaluate();
                });
            }
        }
        parallel_run(jobs, threads);
    }

    std::vector<GridPoint> points;
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        for (std::size_t mi = 0; mi < mus.size(); ++mi) {
            std::vector<double> mses, mapes;
            for (const MetricPair& m : results[li * mus.size() + mi]) {
                mses.push_back(m.mse);
                mapes.push_back(m.mape);
            }
            points.push_back({lambdas[li], mus[mi], seed_stats(mses), seed_stats(mapes)});
        }
    }
    return points;
}

inline void write_grid_csv(const std::vector<GridPoint>& points, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "lambda,mu,mse_mean,mse_std,mape_mean,mape_std\n";
    for (const GridPoint& p : points) {
        os << format_g17(p.lambda) << ',' << format_g17(p.mu) << ',' << format_g17(p.mse.mean)
           << ',' << (p.mse.count >= 2 ? format_g17(p.mse.stddev) : std::string()) << ','
           << format_g17(p.mape.mean) << ','
           << (p.mape.count >= 2 ? format_g17(p.mape.stddev) : std::string()) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Case study export
// ---------------------------------------------------------------------------

enum class EdgeBucket { ConfidentTrue, ConfidentFalse, Faint, Omitted };

// Probability buckets: > 0.2 is confident (black when the edge exists in the
// target, red otherwise), [0.05, 0.2] is faint (grey) -- exactly 0.2 falls in
// the faint bucket -- and below 0.05 the edge is left out.
inline EdgeBucket classify_edge(double prob, bool in_target) {
    if (prob > 0.2) return in_target ? EdgeBucket::ConfidentTrue : EdgeBucket::ConfidentFalse;
    if (prob >= 0.05) return EdgeBucket::Faint;
    return EdgeBucket::Omitted;
}

namespace detail {

inline void write_dot_plain(const Graph& g, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "graph G {\n";
    for (int i = 0; i < g.n; ++i) os << "  " << i << ";\n";
    for (int i = 0; i < g.n; ++i)
        for (int j = i + 1; j < g.n; ++j)
            if (g.has_edge(i, j)) os << "  " << i << " -- " << j << ";\n";
    os << "}\n";
}

}  // namespace detail

// Writes source.dot, target.dot, predicted.dot and a `probabilities` sidecar
// holding the raw prediction matrix. The DOT uses the symmetrized pair
// probability (the score matrix need not be symmetric); the sidecar keeps the
// full asymmetric matrix.
inline void export_case_study(const Model& model, const PairedExample& pair,
                              const std::string& dir, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    Rng rng(substream(seed, "case.anchors"));
    const Prediction pred = predict_translation(model, pair.source, rng);

    detail::write_dot_plain(pair.source, dir + "/source.dot");
    detail::write_dot_plain(pair.target, dir + "/target.dot");

    std::ofstream os(dir + "/predicted.dot", std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + dir + "/predicted.dot");
    os << "graph G {\n";
    for (int i = 0; i < pred.n; ++i) os << "  " << i << ";\n";
    for (int i = 0; i < pred.n; ++i) {
        for (int j = i + 1; j < pred.n; ++j) {
            const double p = 0.5 * (pred.a_pred[static_cast<std::size_t>(i) * pred.n + j] +
                                    pred.a_pred[static_cast<std::size_t>(j) * pred.n + i]);
            switch (classify_edge(p, pair.target.has_edge(i, j))) {
                case EdgeBucket::ConfidentTrue:
                    os << "  " << i << " -- " << j << " [color=black];\n";
                    break;
                case EdgeBucket::ConfidentFalse:
                    os << "  " << i << " -- " << j << " [color=red];\n";
                    break;
                case EdgeBucket::Faint:
                    os << "  " << i << " -- " << j << " [color=grey];\n";
                    break;
                case EdgeBucket::Omitted:
                    break;
            }
        }
    }
    os << "}\n";

    nlohmann::json sidecar;
    sidecar["n"] = pred.n;
    auto rows = nlohmann::json::array();
    for (int i = 0; i < pred.n; ++i) {
        auto row = nlohmann::json::array();
        for (int j = 0; j < pred.n; ++j)
            row.push_back(pred.a_pred[static_cast<std::size_t>(i) * pred.n + j]);
        rows.push_back(std::move(row));
    }
    sidecar["a_pred"] = std::move(rows);
    std::ofstream sc(dir + "/probabilities", std::ios::trunc);
    if (!sc) throw std::runtime_error("cannot write " + dir + "/probabilities");
    sc << sidecar.dump(1) << "\n";
}

}  // namespace gtrans
