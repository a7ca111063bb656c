#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtrans/tensor.hpp"

namespace gtrans {

// Checkpoints are two files sharing a stem: `<stem>.manifest` (JSON: entry
// name, shape, byte offset, plus free-form metadata) and `<stem>.blob`, one
// flat little-endian stream of f64. Round trips are bit-exact.

struct CheckpointEntry {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
};

namespace detail {

inline void write_f64_le(std::ofstream& os, const std::vector<double>& v) {
    for (double x : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        os.write(reinterpret_cast<const char*>(buf), 8);
    }
}

inline std::vector<double> read_f64_le(std::ifstream& is, std::size_t count) {
    std::vector<double> v(count);
    std::vector<unsigned char> buf(count * 8);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size())
        throw std::runtime_error("checkpoint blob truncated");
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
        std::memcpy(&v[i], &bits, 8);
    }
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& stem, const std::vector<CheckpointEntry>& entries,
                            const nlohmann::json& meta = nlohmann::json::object()) {
    nlohmann::json manifest;
    manifest["entries"] = nlohmann::json::array();
    std::ofstream blob(stem + ".blob", std::ios::binary | std::ios::trunc);
    if (!blob) throw std::runtime_error("cannot open " + stem + ".blob for writing");
    std::size_t offset = 0;
    for (const auto& e : entries) {
        manifest["entries"].push_back(
            {{"name", e.name}, {"shape", {e.rows, e.cols}}, {"offset", offset}});
        detail::write_f64_le(blob, e.data);
        offset += e.data.size() * 8;
    }
    manifest["meta"] = meta;
    blob.close();
    std::ofstream mf(stem + ".manifest", std::ios::trunc);
    if (!mf) throw std::runtime_error("cannot open " + stem + ".manifest for writing");
    mf << manifest.dump(2) << "\n";
}

struct Checkpoint {
    std::vector<CheckpointEntry> entries;
    nlohmann::json meta;

    const CheckpointEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
};

inline Checkpoint load_checkpoint(const std::string& stem) {
    std::ifstream mf(stem + ".manifest");
    if (!mf) throw std::runtime_error("cannot open " + stem + ".manifest");
    nlohmann::json manifest = nlohmann::json::parse(mf);
    std::ifstream blob(stem + ".blob", std::ios::binary);
    if (!blob) throw std::runtime_error("cannot open " + stem + ".blob");
    Checkpoint ckpt;
    ckpt.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& j : manifest.at("entries")) {
        CheckpointEntry e;
        e.name = j.at("name").get<std::string>();
        e.rows = j.at("shape").at(0).get<std::size_t>();
        e.cols = j.at("shape").at(1).get<std::size_t>();
        const auto offset = j.at("offset").get<std::size_t>();
        blob.seekg(static_cast<std::streamoff>(offset));
        e.data = detail::read_f64_le(blob, e.rows * e.cols);
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

// Convenience over a live parameter list.
inline void save_params(const std::string& stem, const std::vector<Tensor>& params,
                        const nlohmann::json& meta = nlohmann::json::object()) {
    std::vector<CheckpointEntry> entries;
    entries.reserve(params.size());
    for (const Tensor& p : params)
        entries.push_back({p.name(), p.rows(), p.cols(), p.value()});
    save_checkpoint(stem, entries, meta);
}

inline void load_params(const Checkpoint& ckpt, std::vector<Tensor>& params) {
    for (Tensor& p : params) {
        const CheckpointEntry* e = ckpt.find(p.name());
        if (!e) throw std::runtime_error("checkpoint missing parameter '" + p.name() + "'");
        if (e->rows != p.rows() || e->cols != p.cols())
            throw std::runtime_error("checkpoint shape mismatch for '" + p.name() + "'");
        p.value() = e->data;
    }
}

}  // namespace gtrans
