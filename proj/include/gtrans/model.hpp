#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gtrans/config.hpp"
#include "gtrans/decoder.hpp"
#include "gtrans/encoder.hpp"
#include "gtrans/graph.hpp"
#include "gtrans/translator.hpp"

namespace gtrans {

// The complete trainable state: one encoder/decoder pair per domain, the
// translator bridging the two embedding spaces, and the MI discriminator.
// Forward helpers honor the ablation and variant flags captured from config.
struct Model {
    EncoderParams enc_s, enc_t;
    DecoderParams dec_s, dec_t;
    TranslatorParams trans;
    MIEstimatorParams mi;
    TrainConfig cfg;
    int d_f = 0;

    int d_h() const { return enc_s.d_h(); }
    int d_p() const { return enc_s.d_p(); }

    static Model init(const TrainConfig& cfg, int d_f, Rng& rng) {
        cfg.validate();
        Model m;
        m.cfg = cfg;
        m.d_f = d_f;
        const Dims& d = cfg.dims;
        m.enc_s = encoder_param_init(d_f, d.k, d.d_hidden, d.enc_layers, "enc_s", rng);
        m.enc_t = encoder_param_init(d_f, d.k, d.d_hidden, d.enc_layers, "enc_t", rng);
        const int d_h = m.enc_s.d_h();
        const int d_p = m.enc_s.d_p();
        m.dec_s = decoder_param_init(d_h, d_p, d_f, d.dec_blocks, d.heads, d.d_k, d.d_v,
                                     d.attr_mlp_hidden, "dec_s", rng);
        m.dec_t = decoder_param_init(d_h, d_p, d_f, d.dec_blocks, d.heads, d.d_k, d.d_v,
                                     d.attr_mlp_hidden, "dec_t", rng);
        m.trans = cfg.ablation.shared_embedding
                      ? translator_identity(d_h, d_p)
                      : translator_param_init(d_h, d_p, d.trans_hidden, "trans", rng);
        m.mi = mi_param_init(d_h + d_p, d.mi_hidden, "mi", rng);
        return m;
    }

    std::vector<Tensor> non_mi_params() const {
        std::vector<Tensor> out;
        auto append = [&out](const std::vector<Tensor>& v) {
            out.insert(out.end(), v.begin(), v.end());
        };
        append(enc_s.params());
        append(enc_t.params());
        append(dec_s.params());
        append(dec_t.params());
        append(trans.params());
        return out;
    }

    std::vector<Tensor> all_params() const {
        std::vector<Tensor> out = non_mi_params();
        const auto m = mi.params();
        out.insert(out.end(), m.begin(), m.end());
        return out;
    }

    // Position input for one graph. Under no_position the first k attribute
    // columns stand in (zero-padded when the graph has fewer), so the network
    // shape is unchanged while the positional signal is gone.
    PositionEmbedding make_position(const Graph& g, const std::vector<int>& anchors) const {
        if (!cfg.ablation.no_position)
            return position_embedding(g, anchors, cfg.position_raw_hops);
        PositionEmbedding pe;
        pe.n = g.n;
        pe.k = cfg.dims.k;
        pe.values.assign(static_cast<std::size_t>(g.n) * pe.k, 0.0);
        for (int i = 0; i < g.n; ++i)
            for (int j = 0; j < pe.k && j < g.attr_dim; ++j)
                pe.values[static_cast<std::size_t>(i) * pe.k + j] =
                    g.attr[static_cast<std::size_t>(i) * g.attr_dim + j];
        return pe;
    }

    NodeEmbeddings encode_source(const Graph& g, const PositionEmbedding& pos) const {
        return encode(g, pos, enc_s, cfg.encoder_agg_sum);
    }
    NodeEmbeddings encode_target(const Graph& g, const PositionEmbedding& pos) const {
        return encode(g, pos, enc_t, cfg.encoder_agg_sum);
    }

    DecodedGraph decode_source(const NodeEmbeddings& e) const {
        return decode(e.h, e.p, dec_s, cfg.ablation.no_attention, cfg.decoder_row_softmax);
    }
    DecodedGraph decode_target(const Tensor& h, const Tensor& p) const {
        return decode(h, p, dec_t, cfg.ablation.no_attention, cfg.decoder_row_softmax);
    }

    std::pair<Tensor, Tensor> translate_embeddings(const NodeEmbeddings& e) const {
        return translate(e.h, e.p, trans, cfg.readout_sum);
    }

    Tensor graph_feature(const Tensor& h, const Tensor& p) const {
        return readout(h, p, cfg.readout_sum);
    }
};

// Structural variant builder. shared_embedding swaps the translator for the
// parameterless identity (widths already agree by construction); everything
// else is a forward-path flag the copied config carries along.
inline Model apply_ablation(const Model& base, const AblationFlags& flags) {
    Model m = base;
    m.cfg.ablation = flags;
    if (flags.shared_embedding && !m.trans.identity)
        m.trans = translator_identity(m.enc_s.d_h(), m.enc_s.d_p());
    return m;
}

}  // namespace gtrans
