#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gtrans/config.hpp"

using namespace gtrans;
namespace fs = std::filesystem;

namespace {

std::string cli() { return GTRANS_CLI_PATH; }

int run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

const char* kTinyEpochs =
    " --set epochs.pretrain_ae=1 --set epochs.pretrain_trans=1 --set epochs.pretrain_mi=1"
    " --set epochs.finetune=2 --set dims.d_hidden=4 --set dims.k=3 --set dims.heads=2"
    " --set dims.d_k=3 --set dims.d_v=3 --set dims.attr_mlp_hidden=5"
    " --set dims.trans_hidden=8 --set dims.mi_hidden=8 --set batch_size=4";

}  // namespace

TEST(ResolveConfig, DocumentedDefaults) {
    const TrainConfig cfg = resolve_config("", {});
    EXPECT_DOUBLE_EQ(cfg.lambda, 1.0);
    EXPECT_DOUBLE_EQ(cfg.mu, 1.0);
    EXPECT_DOUBLE_EQ(cfg.delta, 0.5);
    EXPECT_DOUBLE_EQ(cfg.lr, 0.001);
    EXPECT_EQ(cfg.dims.k, 8);
    EXPECT_EQ(cfg.dims.d_hidden, 16);
    EXPECT_EQ(cfg.epochs.pretrain_ae, 100);
    EXPECT_EQ(cfg.epochs.finetune, 300);
}

TEST(ResolveConfig, FileThenFlagsPrecedence) {
    TempDir tmp("gtrans_cfg_test");
    const std::string file = tmp.str() + "/cfg.json";
    {
        std::ofstream os(file);
        os << R"({"lambda": 0.7, "dims.k": 5, "ablation.no_mi": true})";
    }
    const TrainConfig from_file = resolve_config(file, {});
    EXPECT_DOUBLE_EQ(from_file.lambda, 0.7);
    EXPECT_EQ(from_file.dims.k, 5);
    EXPECT_TRUE(from_file.ablation.no_mi);

    const TrainConfig overridden = resolve_config(file, {"lambda=0.9", "dims.k=6"});
    EXPECT_DOUBLE_EQ(overridden.lambda, 0.9);  // flag wins over the file
    EXPECT_EQ(overridden.dims.k, 6);
    EXPECT_TRUE(overridden.ablation.no_mi);    // untouched file value survives
}

TEST(ResolveConfig, UnknownKeyNamesTheKey) {
    TempDir tmp("gtrans_cfg_unknown");
    const std::string file = tmp.str() + "/cfg.json";
    {
        std::ofstream os(file);
        os << R"({"lambdaa": 0.7})";
    }
    try {
        resolve_config(file, {});
        FAIL() << "expected unknown-key error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("lambdaa"), std::string::npos);
    }
    try {
        resolve_config("", {"lr=fast"});
        FAIL() << "expected type error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("lr"), std::string::npos);
    }
    EXPECT_THROW(resolve_config("", {"delta=0"}), std::invalid_argument);  // validation
}

TEST(Cli, GenDataWritesManifestWithCounts) {
    TempDir tmp("gtrans_cli_gen");
    const std::string data = tmp.str() + "/d";
    ASSERT_EQ(run("gen-data --nodes 6 --paired 3 --unpaired-source 2 --unpaired-target 2 "
                  "--test 2 --seed 7 --out " + data),
              0);
    const auto manifest = nlohmann::json::parse(slurp(data + "/manifest"));
    EXPECT_EQ(manifest.at("paired_train").get<int>(), 3);
    EXPECT_EQ(manifest.at("unpaired_source").get<int>(), 2);
    EXPECT_EQ(manifest.at("unpaired_target").get<int>(), 2);
    EXPECT_EQ(manifest.at("paired_test").get<int>(), 2);
    EXPECT_EQ(manifest.at("n_nodes").get<int>(), 6);
    EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 7u);
    EXPECT_TRUE(fs::exists(data + "/paired_train/002_target"));
}

TEST(Cli, TrainRerunIsByteIdenticalAndLeavesDataUntouched) {
    TempDir tmp("gtrans_cli_train");
    const std::string data = tmp.str() + "/d";
    ASSERT_EQ(run("gen-data --nodes 6 --paired 4 --unpaired-source 3 --unpaired-target 3 "
                  "--test 2 --seed 7 --out " + data),
              0);
    const std::string data_manifest = slurp(data + "/manifest");
    const std::string data_sample = slurp(data + "/paired_train/000_source");

    const std::string run1 = tmp.str() + "/run1";
    const std::string run2 = tmp.str() + "/run2";
    const std::string train_args = std::string("train --data ") + data +
                                   " --lambda 1.0 --mu 1.0 --delta 0.5 --lr 0.001 --seed 7" +
                                   kTinyEpochs;
    ASSERT_EQ(run(train_args + " --out " + run1), 0);
    ASSERT_EQ(run(train_args + " --out " + run2), 0);

    EXPECT_EQ(slurp(run1 + "/report.csv"), slurp(run2 + "/report.csv"));
    EXPECT_EQ(slurp(run1 + "/final_metrics"), slurp(run2 + "/final_metrics"));
    EXPECT_EQ(slurp(run1 + "/config"), slurp(run2 + "/config"));
    EXPECT_EQ(slurp(run1 + "/checkpoint.blob"), slurp(run2 + "/checkpoint.blob"));

    // input dataset untouched
    EXPECT_EQ(slurp(data + "/manifest"), data_manifest);
    EXPECT_EQ(slurp(data + "/paired_train/000_source"), data_sample);

    // eval against the stored checkpoint succeeds
    EXPECT_EQ(run("eval --data " + data + " --model " + run1), 0);

    // case-study export
    const std::string cs = tmp.str() + "/cs";
    EXPECT_EQ(run("case-study --data " + data + " --model " + run1 + " --index 0 --out " + cs),
              0);
    EXPECT_TRUE(fs::exists(cs + "/predicted.dot"));
    EXPECT_TRUE(fs::exists(cs + "/probabilities"));
}

TEST(Cli, AblateWritesAllVariantRows) {
    TempDir tmp("gtrans_cli_ablate");
    const std::string data = tmp.str() + "/d";
    ASSERT_EQ(run("gen-data --nodes 6 --paired 3 --unpaired-source 2 --unpaired-target 2 "
                  "--test 2 --seed 3 --out " + data),
              0);
    const std::string out = tmp.str() + "/abl";
    ASSERT_EQ(run("ablate --data " + data + " --seeds 1 --out " + out + kTinyEpochs), 0);
    const std::string csv = slurp(out + "/ablation.csv");
    EXPECT_NE(csv.find("Shared Embedding"), std::string::npos);
    EXPECT_NE(csv.find("No position"), std::string::npos);
    EXPECT_NE(csv.find("No MI"), std::string::npos);
    EXPECT_NE(csv.find("No multi-head attention"), std::string::npos);
    EXPECT_NE(csv.find("full"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    TempDir tmp("gtrans_cli_exit");
    EXPECT_EQ(run("no-such-command"), 1);
    EXPECT_EQ(run("train --data x --out y --lambda notanumber"), 1);
    EXPECT_EQ(run("gen-data --nodes 1 --out " + tmp.str() + "/x"), 1);  // below range
    // valid flags but missing dataset -> runtime failure
    EXPECT_EQ(run("train --data " + tmp.str() + "/missing --out " + tmp.str() + "/r"), 2);
}
