// Command-line front end: dataset generation, training, evaluation,
// ablations, sweeps, and case-study export. All randomness flows from --seed;
// rerunning a command with the same resolved config reproduces its output
// files byte for byte (timestamps live only in the `log` file).

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "gtrans/gtrans.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::vector<double> parse_double_list(const std::string& csv, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw CLI::ValidationError(flag, "cannot parse '" + item + "' as number");
        }
    }
    if (out.empty()) throw CLI::ValidationError(flag, "empty list");
    return out;
}

struct CommonTrainArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    bool has_lambda = false, has_mu = false, has_delta = false, has_lr = false;
    bool has_seed = false, has_batch = false;
    double lambda = 1.0, mu = 1.0, delta = 0.5, lr = 0.001;
    std::uint64_t seed = 42;
    int batch_size = 8;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file with flat dotted keys");
        cmd->add_option("--set", overrides, "key=value override (repeatable)");
        cmd->add_option("--lambda", lambda, "reconstruction weight")
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--mu", mu, "mutual-information weight")->check(CLI::NonNegativeNumber);
        cmd->add_option("--delta", delta, "non-edge weight in (0,1]");
        cmd->add_option("--lr", lr, "learning rate")->check(CLI::PositiveNumber);
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--batch-size", batch_size, "graphs per optimizer step");
    }

    gtrans::TrainConfig resolve(CLI::App* cmd) const {
        std::vector<std::string> all = overrides;
        // direct flags outrank --set pairs
        if (cmd->count("--lambda")) all.push_back("lambda=" + std::to_string(lambda));
        if (cmd->count("--mu")) all.push_back("mu=" + std::to_string(mu));
        if (cmd->count("--delta")) all.push_back("delta=" + std::to_string(delta));
        if (cmd->count("--lr")) all.push_back("lr=" + std::to_string(lr));
        if (cmd->count("--seed")) all.push_back("seed=" + std::to_string(seed));
        if (cmd->count("--batch-size")) all.push_back("batch_size=" + std::to_string(batch_size));
        return gtrans::resolve_config(config_path, all);
    }
};

int cmd_gen_data(int nodes, int paired, int unpaired_source, int unpaired_target, int test,
                 std::uint64_t seed, const std::string& out) {
    gtrans::DatasetCounts counts{paired, unpaired_source, unpaired_target, test};
    gtrans::Dataset ds = gtrans::build_ba_dataset(counts, nodes, seed);
    gtrans::save_dataset(ds, out, nodes, seed);
    std::cout << "wrote dataset to " << out << " (" << paired << " paired train, "
              << unpaired_source << "+" << unpaired_target << " unpaired, " << test
              << " paired test)\n";
    return kExitOk;
}

int cmd_train(const gtrans::TrainConfig& cfg, const std::string& data_dir,
              const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    gtrans::write_config_snapshot(cfg, out_dir + "/config");
    gtrans::Dataset ds = gtrans::load_dataset(data_dir);
    gtrans::Trainer trainer(ds, cfg);
    trainer.run_all();
    trainer.save_run(out_dir);
    if (trainer.report().has_final_metrics) {
        std::cout << "test mse=" << gtrans::format_g17(trainer.report().final_metrics.mse)
                  << " mape=" << gtrans::format_g17(trainer.report().final_metrics.mape) << "\n";
    }
    std::cout << "run written to " << out_dir << "\n";
    return kExitOk;
}

int cmd_eval(const gtrans::TrainConfig& cfg_hint, const std::string& data_dir,
             const std::string& run_dir) {
    gtrans::Dataset ds = gtrans::load_dataset(data_dir);
    // The run's own snapshot wins over flags so the checkpoint always matches.
    gtrans::TrainConfig cfg = cfg_hint;
    if (std::filesystem::exists(run_dir + "/config"))
        cfg = gtrans::resolve_config(run_dir + "/config", {});
    gtrans::Trainer trainer(ds, cfg);
    trainer.load_checkpoint(run_dir + "/checkpoint");
    const gtrans::MetricPair m = trainer.evaluate();
    std::cout << "test mse=" << gtrans::format_g17(m.mse)
              << " mape=" << gtrans::format_g17(m.mape) << "\n";
    return kExitOk;
}

int cmd_ablate(const gtrans::TrainConfig& cfg, const std::string& data_dir, int seeds,
               int threads, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    gtrans::write_config_snapshot(cfg, out_dir + "/config");
    gtrans::Dataset ds = gtrans::load_dataset(data_dir);
    const auto rows = gtrans::run_ablation_suite(ds, cfg, seeds, threads);
    gtrans::write_ablation_csv(rows, out_dir + "/ablation.csv");
    for (const auto& r : rows)
        std::cout << r.name << ": mse=" << gtrans::format_g17(r.mse.mean)
                  << " mape=" << gtrans::format_g17(r.mape.mean) << "\n";
    std::cout << "table written to " << out_dir << "/ablation.csv\n";
    return kExitOk;
}

int cmd_sweep_ratio(const gtrans::TrainConfig& cfg, const gtrans::RatioSweepSpec& spec,
                    const std::vector<double>& ratios, int seeds, int threads,
                    const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    gtrans::write_config_snapshot(cfg, out_dir + "/config");
    const auto points = gtrans::run_ratio_sweep(cfg, spec, ratios, seeds, threads);
    gtrans::write_ratio_csv(points, out_dir + "/ratio_sweep.csv");
    std::cout << "sweep written to " << out_dir << "/ratio_sweep.csv\n";
    return kExitOk;
}

int cmd_sweep_sensitivity(const gtrans::TrainConfig& cfg, const std::string& data_dir,
                          const std::vector<double>& lambdas, const std::vector<double>& mus,
                          int seeds, int threads, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    gtrans::write_config_snapshot(cfg, out_dir + "/config");
    gtrans::Dataset ds = gtrans::load_dataset(data_dir);
    const auto points = gtrans::run_sensitivity_grid(ds, cfg, lambdas, mus, seeds, threads);
    gtrans::write_grid_csv(points, out_dir + "/sensitivity.csv");
    std::cout << "grid written to " << out_dir << "/sensitivity.csv\n";
    return kExitOk;
}

int cmd_case_study(const gtrans::TrainConfig& cfg_hint, const std::string& data_dir,
                   const std::string& run_dir, int index, const std::string& out_dir) {
    gtrans::Dataset ds = gtrans::load_dataset(data_dir);
    gtrans::TrainConfig cfg = cfg_hint;
    if (std::filesystem::exists(run_dir + "/config"))
        cfg = gtrans::resolve_config(run_dir + "/config", {});
    gtrans::Trainer trainer(ds, cfg);
    trainer.load_checkpoint(run_dir + "/checkpoint");
    if (index < 0 || index >= static_cast<int>(ds.paired_test.size()))
        throw std::invalid_argument("case-study: --index out of range (test set has " +
                                    std::to_string(ds.paired_test.size()) + " pairs)");
    gtrans::export_case_study(trainer.model(), ds.paired_test[index], out_dir, cfg.seed);
    std::cout << "case study written to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph-to-graph translation experiments"};
    app.require_subcommand(1);
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    app.add_option("--threads", threads, "worker pool cap for sweeps/ablations");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic tree-to-reachability dataset");
    int nodes = 20, paired = 150, ups = 150, upt = 150, test = 100;
    std::uint64_t gen_seed = 42;
    std::string gen_out;
    gen->add_option("--nodes", nodes, "nodes per graph")->check(CLI::Range(2, 1000000));
    gen->add_option("--paired", paired, "paired training graphs");
    gen->add_option("--unpaired-source", ups, "unpaired source graphs");
    gen->add_option("--unpaired-target", upt, "unpaired target graphs");
    gen->add_option("--test", test, "paired test graphs");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--out", gen_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "run the full four-phase training schedule");
    CommonTrainArgs train_args;
    std::string train_data, train_out;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--out", train_out, "run directory")->required();
    train_args.add_to(train);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a saved run on a dataset's test split");
    CommonTrainArgs eval_args;
    std::string eval_data, eval_run;
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--model", eval_run, "run directory holding checkpoint.*")->required();
    eval_args.add_to(eval);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "train and score every ablation variant");
    CommonTrainArgs ablate_args;
    std::string ablate_data, ablate_out;
    int ablate_seeds = 3;
    ablate->add_option("--data", ablate_data, "dataset directory")->required();
    ablate->add_option("--seeds", ablate_seeds, "repeats per variant")->check(CLI::PositiveNumber);
    ablate->add_option("--out", ablate_out, "output directory")->required();
    ablate_args.add_to(ablate);

    // sweep-ratio
    auto* sratio = app.add_subcommand("sweep-ratio", "sweep the unpaired-to-paired ratio");
    CommonTrainArgs sratio_args;
    std::string sratio_ratios = "0.1,0.2,0.3,0.4,0.5,0.6";
    std::string sratio_out;
    gtrans::RatioSweepSpec spec;
    int sratio_seeds = 3;
    sratio->add_option("--ratios", sratio_ratios, "comma-separated ratios");
    sratio->add_option("--paired", spec.paired, "paired training graphs");
    sratio->add_option("--test", spec.paired_test, "paired test graphs");
    sratio->add_option("--nodes", spec.n_nodes, "nodes per graph");
    sratio->add_option("--seeds", sratio_seeds, "repeats per point")->check(CLI::PositiveNumber);
    sratio->add_option("--out", sratio_out, "output directory")->required();
    sratio_args.add_to(sratio);

    // sweep-sensitivity
    auto* sgrid = app.add_subcommand("sweep-sensitivity", "sweep lambda and mu over a grid");
    CommonTrainArgs sgrid_args;
    std::string sgrid_data, sgrid_out;
    std::string sgrid_lambdas = "0.3,0.7,1.0,1.3";
    std::string sgrid_mus = "0.3,0.7,1.0,1.3";
    int sgrid_seeds = 3;
    sgrid->add_option("--data", sgrid_data, "dataset directory")->required();
    sgrid->add_option("--lambdas", sgrid_lambdas, "comma-separated lambda values");
    sgrid->add_option("--mus", sgrid_mus, "comma-separated mu values");
    sgrid->add_option("--seeds", sgrid_seeds, "repeats per point")->check(CLI::PositiveNumber);
    sgrid->add_option("--out", sgrid_out, "output directory")->required();
    sgrid_args.add_to(sgrid);

    // case-study
    auto* cs = app.add_subcommand("case-study", "export DOT renderings for one test pair");
    CommonTrainArgs cs_args;
    std::string cs_data, cs_run, cs_out;
    int cs_index = 0;
    cs->add_option("--data", cs_data, "dataset directory")->required();
    cs->add_option("--model", cs_run, "run directory holding checkpoint.*")->required();
    cs->add_option("--index", cs_index, "test pair index");
    cs->add_option("--out", cs_out, "output directory")->required();
    cs_args.add_to(cs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(nodes, paired, ups, upt, test, gen_seed, gen_out);
        if (train->parsed()) return cmd_train(train_args.resolve(train), train_data, train_out);
        if (eval->parsed()) return cmd_eval(eval_args.resolve(eval), eval_data, eval_run);
        if (ablate->parsed())
            return cmd_ablate(ablate_args.resolve(ablate), ablate_data, ablate_seeds, threads,
                              ablate_out);
        if (sratio->parsed())
            return cmd_sweep_ratio(sratio_args.resolve(sratio), spec,
                                   parse_double_list(sratio_ratios, "--ratios"), sratio_seeds,
                                   threads, sratio_out);
        if (sgrid->parsed())
            return cmd_sweep_sensitivity(sgrid_args.resolve(sgrid), sgrid_data,
                                         parse_double_list(sgrid_lambdas, "--lambdas"),
                                         parse_double_list(sgrid_mus, "--mus"), sgrid_seeds,
                                         threads, sgrid_out);
        if (cs->parsed())
            return cmd_case_study(cs_args.resolve(cs), cs_data, cs_run, cs_index, cs_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    std::cerr << "no command given\n";
    return kExitUsage;
}
