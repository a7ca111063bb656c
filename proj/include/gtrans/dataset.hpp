#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtrans/graph.hpp"
#include "gtrans/rng.hpp"

namespace gtrans {

struct DatasetCounts {
    int paired_train = 0;
    int unpaired_source = 0;
    int unpaired_target = 0;
    int paired_test = 0;
};

struct Dataset {
    std::vector<PairedExample> paired_train;
    std::vector<Graph> unpaired_source;
    std::vector<Graph> unpaired_target;
    std::vector<PairedExample> paired_test;
};

// Source graphs are preferential-attachment trees; the paired target is the
// 2-hop reachability graph over the same nodes, keeping the source attribute
// matrix. Each partition draws from its own substream of the master seed, so
// partitions stay disjoint and a partition's prefix is independent of the
// other partitions' sizes.
inline PairedExample make_ba_pair(int n_nodes, Rng& rng) {
    PairedExample ex;
    ex.source = generate_ba(n_nodes, rng);
    ex.target = k_hop_reachability(ex.source, 2);
    return ex;
}

inline Dataset build_ba_dataset(const DatasetCounts& counts, int n_nodes, std::uint64_t seed) {
    if (counts.paired_train < 0 || counts.unpaired_source < 0 || counts.unpaired_target < 0 ||
        counts.paired_test < 0)
        throw std::invalid_argument("build_ba_dataset: counts must be non-negative");
    Dataset ds;
    for (int i = 0; i < counts.paired_train; ++i) {
        Rng rng(substream(seed, "paired_train", static_cast<std::uint64_t>(i)));
        ds.paired_train.push_back(make_ba_pair(n_nodes, rng));
    }
    for (int i = 0; i < counts.unpaired_source; ++i) {
        Rng rng(substream(seed, "unpaired_source", static_cast<std::uint64_t>(i)));
        ds.unpaired_source.push_back(generate_ba(n_nodes, rng));
    }
    for (int i = 0; i < counts.unpaired_target; ++i) {
        Rng rng(substream(seed, "unpaired_target", static_cast<std::uint64_t>(i)));
        ds.unpaired_target.push_back(make_ba_pair(n_nodes, rng).target);
    }
    for (int i = 0; i < counts.paired_test; ++i) {
        Rng rng(substream(seed, "paired_test", static_cast<std::uint64_t>(i)));
        ds.paired_test.push_back(make_ba_pair(n_nodes, rng));
    }
    return ds;
}

namespace detail {
inline std::string index_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d", i);
    return buf;
}
}  // namespace detail

// Directory layout: paired_train/NNN_source, paired_train/NNN_target,
// unpaired_source/NNN, unpaired_target/NNN, paired_test/NNN_{source,target},
// and a `manifest` recording counts, node size, and the master seed.
inline void save_dataset(const Dataset& ds, const std::string& dir, int n_nodes,
                         std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(dir + "/paired_train");
    fs::create_directories(dir + "/unpaired_source");
    fs::create_directories(dir + "/unpaired_target");
    fs::create_directories(dir + "/paired_test");
    for (std::size_t i = 0; i < ds.paired_train.size(); ++i) {
        const std::string stem = dir + "/paired_train/" + detail::index_name(static_cast<int>(i));
        save_graph(ds.paired_train[i].source, stem + "_source");
        save_graph(ds.paired_train[i].target, stem + "_target");
    }
    for (std::size_t i = 0; i < ds.unpaired_source.size(); ++i)
        save_graph(ds.unpaired_source[i],
                   dir + "/unpaired_source/" + detail::index_name(static_cast<int>(i)));
    for (std::size_t i = 0; i < ds.unpaired_target.size(); ++i)
        save_graph(ds.unpaired_target[i],
                   dir + "/unpaired_target/" + detail::index_name(static_cast<int>(i)));
    for (std::size_t i = 0; i < ds.paired_test.size(); ++i) {
        const std::string stem = dir + "/paired_test/" + detail::index_name(static_cast<int>(i));
        save_graph(ds.paired_test[i].source, stem + "_source");
        save_graph(ds.paired_test[i].target, stem + "_target");
    }
    nlohmann::json manifest;
    manifest["paired_train"] = ds.paired_train.size();
    manifest["unpaired_source"] = ds.unpaired_source.size();
    manifest["unpaired_target"] = ds.unpaired_target.size();
    manifest["paired_test"] = ds.paired_test.size();
    manifest["n_nodes"] = n_nodes;
    manifest["seed"] = seed;
    std::ofstream os(dir + "/manifest", std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + dir + "/manifest");
    os << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
    std::ifstream is(dir + "/manifest");
    if (!is) throw std::runtime_error("cannot open " + dir + "/manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(dir + "/manifest: " + e.what());
    }
    Dataset ds;
    const int np = manifest.at("paired_train").get<int>();
    const int ns = manifest.at("unpaired_source").get<int>();
    const int nt = manifest.at("unpaired_target").get<int>();
    const int nq = manifest.at("paired_test").get<int>();
    for (int i = 0; i < np; ++i) {
        const std::string stem = dir + "/paired_train/" + detail::index_name(i);
        PairedExample ex{load_graph(stem + "_source"), load_graph(stem + "_target")};
        if (ex.source.n != ex.target.n)
            throw std::runtime_error(stem + ": paired graphs must share the node set");
        ds.paired_train.push_back(std::move(ex));
    }
    for (int i = 0; i < ns; ++i)
        ds.unpaired_source.push_back(load_graph(dir + "/unpaired_source/" + detail::index_name(i)));
    for (int i = 0; i < nt; ++i)
        ds.unpaired_target.push_back(load_graph(dir + "/unpaired_target/" + detail::index_name(i)));
    for (int i = 0; i < nq; ++i) {
        const std::string stem = dir + "/paired_test/" + detail::index_name(i);
        PairedExample ex{load_graph(stem + "_source"), load_graph(stem + "_target")};
        if (ex.source.n != ex.target.n)
            throw std::runtime_error(stem + ": paired graphs must share the node set");
        ds.paired_test.push_back(std::move(ex));
    }
    return ds;
}

}  // namespace gtrans
