#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace gtrans {

struct PhaseEpochs {
    int pretrain_ae = 100;
    int pretrain_trans = 100;
    int pretrain_mi = 50;
    int finetune = 300;
};

struct Dims {
    int d_hidden = 16;       // per-stream hidden width in the encoder
    int k = 8;               // anchor count / position width
    int enc_layers = 2;
    int dec_blocks = 2;
    int heads = 4;
    int d_k = 16;            // attention query/key width
    int d_v = 16;            // attention value width
    int attr_mlp_hidden = 32;
    int trans_hidden = 64;
    int mi_hidden = 64;
};

struct AblationFlags {
    bool shared_embedding = false;  // identity translator, MI disabled
    bool no_position = false;       // first k attribute columns stand in for positions
    bool no_mi = false;             // mu forced to 0, MI phases skipped
    bool no_attention = false;      // decoder uses H directly (H_O = H)
};

struct TrainConfig {
    double lambda = 1.0;  // reconstruction weight
    double mu = 1.0;      // mutual-information weight
    double delta = 0.5;   // non-edge weight in the reconstruction mask
    double lr = 0.001;
    int batch_size = 8;
    std::uint64_t seed = 42;
    PhaseEpochs epochs;
    Dims dims;
    AblationFlags ablation;
    bool encoder_agg_sum = false;    // neighbor sum instead of mean
    bool position_raw_hops = false;  // untransformed hop counts
    bool decoder_row_softmax = false;
    bool readout_sum = false;        // sum pooling instead of mean

    void validate() const {
        if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
        if (mu < 0.0) throw std::invalid_argument("config: mu must be >= 0");
        if (!(delta > 0.0 && delta <= 1.0))
            throw std::invalid_argument("config: delta must be in (0, 1]");
        if (lr <= 0.0) throw std::invalid_argument("config: lr must be > 0");
        if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
        if (epochs.pretrain_ae < 0 || epochs.pretrain_trans < 0 || epochs.pretrain_mi < 0 ||
            epochs.finetune < 0)
            throw std::invalid_argument("config: epochs must be >= 0");
        if (dims.d_hidden < 1 || dims.k < 1 || dims.enc_layers < 1 || dims.dec_blocks < 1 ||
            dims.heads < 1 || dims.d_k < 1 || dims.d_v < 1 || dims.attr_mlp_hidden < 1 ||
            dims.trans_hidden < 1 || dims.mi_hidden < 1)
            throw std::invalid_argument("config: dims must be >= 1");
    }

    double effective_mu() const { return (ablation.no_mi || ablation.shared_embedding) ? 0.0 : mu; }
    bool mi_enabled() const { return !ablation.no_mi && !ablation.shared_embedding; }
};

// ---------------------------------------------------------------------------
// Flat dotted-key config resolution: defaults <- file <- overrides, later
// levels winning. Unknown keys are an error so typos never pass silently.
// ---------------------------------------------------------------------------

namespace detail {

struct ConfigBinder {
    TrainConfig& cfg;

    std::map<std::string, double*> doubles;
    std::map<std::string, int*> ints;
    std::map<std::string, bool*> bools;
    std::map<std::string, std::uint64_t*> u64s;

    explicit ConfigBinder(TrainConfig& c) : cfg(c) {
        doubles = {{"lambda", &c.lambda}, {"mu", &c.mu}, {"delta", &c.delta}, {"lr", &c.lr}};
        ints = {{"batch_size", &c.batch_size},
                {"epochs.pretrain_ae", &c.epochs.pretrain_ae},
                {"epochs.pretrain_trans", &c.epochs.pretrain_trans},
                {"epochs.pretrain_mi", &c.epochs.pretrain_mi},
                {"epochs.finetune", &c.epochs.finetune},
                {"dims.d_hidden", &c.dims.d_hidden},
                {"dims.k", &c.dims.k},
                {"dims.enc_layers", &c.dims.enc_layers},
                {"dims.dec_blocks", &c.dims.dec_blocks},
                {"dims.heads", &c.dims.heads},
                {"dims.d_k", &c.dims.d_k},
                {"dims.d_v", &c.dims.d_v},
                {"dims.attr_mlp_hidden", &c.dims.attr_mlp_hidden},
                {"dims.trans_hidden", &c.dims.trans_hidden},
                {"dims.mi_hidden", &c.dims.mi_hidden}};
        bools = {{"ablation.shared_embedding", &c.ablation.shared_embedding},
                 {"ablation.no_position", &c.ablation.no_position},
                 {"ablation.no_mi", &c.ablation.no_mi},
                 {"ablation.no_attention", &c.ablation.no_attention},
                 {"encoder.agg_sum", &c.encoder_agg_sum},
                 {"position.raw_hops", &c.position_raw_hops},
                 {"decoder.row_softmax", &c.decoder_row_softmax},
                 {"readout.sum", &c.readout_sum}};
        u64s = {{"seed", &c.seed}};
    }

    void apply_json(const std::string& key, const nlohmann::json& v) {
        if (auto it = doubles.find(key); it != doubles.end()) {
            if (!v.is_number()) throw std::invalid_argument("config key '" + key + "': expected number");
            *it->second = v.get<double>();
        } else if (auto it2 = ints.find(key); it2 != ints.end()) {
            if (!v.is_number_integer())
                throw std::invalid_argument("config key '" + key + "': expected integer");
            *it2->second = v.get<int>();
        } else if (auto it3 = bools.find(key); it3 != bools.end()) {
            if (!v.is_boolean())
                throw std::invalid_argument("config key '" + key + "': expected boolean");
            *it3->second = v.get<bool>();
        } else if (auto it4 = u64s.find(key); it4 != u64s.end()) {
            if (!v.is_number_unsigned() && !v.is_number_integer())
                throw std::invalid_argument("config key '" + key + "': expected integer");
            *it4->second = v.get<std::uint64_t>();
        } else {
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
    }

    void apply_string(const std::string& key, const std::string& raw) {
        auto parse_double = [&](const std::string& s) {
            std::size_t pos = 0;
            double x;
            try {
                x = std::stod(s, &pos);
            } catch (const std::exception&) {
                throw std::invalid_argument("config key '" + key + "': cannot parse '" + s +
                                            "' as number");
            }
            if (pos != s.size())
                throw std::invalid_argument("config key '" + key + "': cannot parse '" + s +
                                            "' as number");
            return x;
        };
        if (auto it = doubles.find(key); it != doubles.end()) {
            *it->second = parse_double(raw);
        } else if (auto it2 = ints.find(key); it2 != ints.end()) {
            const double x = parse_double(raw);
            if (x != static_cast<int>(x))
                throw std::invalid_argument("config key '" + key + "': expected integer");
            *it2->second = static_cast<int>(x);
        } else if (auto it3 = bools.find(key); it3 != bools.end()) {
            if (raw == "true" || raw == "1")
                *it3->second = true;
            else if (raw == "false" || raw == "0")
                *it3->second = false;
            else
                throw std::invalid_argument("config key '" + key + "': expected boolean, got '" +
                                            raw + "'");
        } else if (auto it4 = u64s.find(key); it4 != u64s.end()) {
            try {
                *it4->second = std::stoull(raw);
            } catch (const std::exception&) {
                throw std::invalid_argument("config key '" + key + "': cannot parse '" + raw +
                                            "' as integer");
            }
        } else {
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
    }

    nlohmann::json snapshot() const {
        nlohmann::json j;
        for (const auto& [k, p] : doubles) j[k] = *p;
        for (const auto& [k, p] : ints) j[k] = *p;
        for (const auto& [k, p] : bools) j[k] = *p;
        for (const auto& [k, p] : u64s) j[k] = *p;
        return j;
    }
};

}  // namespace detail

// overrides are "key=value" strings applied after the file.
inline TrainConfig resolve_config(const std::string& config_path,
                                  const std::vector<std::string>& overrides) {
    TrainConfig cfg;
    detail::ConfigBinder binder(cfg);
    if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) throw std::invalid_argument("cannot open config file " + config_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(is);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::invalid_argument(config_path + ": " + e.what());
        }
        if (!j.is_object()) throw std::invalid_argument(config_path + ": expected a JSON object");
        for (const auto& [key, value] : j.items()) binder.apply_json(key, value);
    }
    for (const std::string& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override '" + ov + "' is not key=value");
        binder.apply_string(ov.substr(0, eq), ov.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

inline nlohmann::json config_snapshot(const TrainConfig& cfg) {
    TrainConfig copy = cfg;
    detail::ConfigBinder binder(copy);
    return binder.snapshot();
}

inline void write_config_snapshot(const TrainConfig& cfg, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << config_snapshot(cfg).dump(2) << "\n";
}

}  // namespace gtrans
