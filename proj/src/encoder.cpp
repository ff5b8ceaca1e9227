#include "mtlforge/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mtlforge/error.hpp"

namespace mtlforge {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kTruncSigmas = 2.0;
constexpr double kLayerNormEps = 1e-12;
constexpr double kMaskValue = -1e9;

TensorPtr init_weight(Rng& rng, std::vector<int> shape, const std::string& name) {
    auto t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t->data) v = kInitStd * rng.trunc_normal(kTruncSigmas);
    t->name = name;
    return t;
}

TensorPtr init_const(std::vector<int> shape, double value, const std::string& name) {
    auto t = Tensor::full(std::move(shape), value, true);
    t->name = name;
    return t;
}

}  // namespace

void EncoderConfig::validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || vocab_size < 1) {
        throw ConfigError("encoder config: all dimensions must be positive");
    }
    if (max_len < 3) throw ConfigError("encoder config: max_len must be >= 3");
    if (d_model % n_heads != 0) {
        throw ConfigError("encoder config: d_model (" + std::to_string(d_model) +
                          ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    }
    if (dropout_p < 0.0 || dropout_p > 1.0) {
        throw ConfigError("encoder config: dropout_p must lie in [0,1]");
    }
}

std::vector<std::pair<std::string, TensorPtr>> EncoderParams::named() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back(tok_emb->name, tok_emb);
    out.emplace_back(pos_emb->name, pos_emb);
    for (const auto& l : layers) {
        for (const auto& t : {l.wq, l.wk, l.wv, l.wo, l.ff_w1, l.ff_b1, l.ff_w2, l.ff_b2,
                              l.ln1_gain, l.ln1_bias, l.ln2_gain, l.ln2_bias}) {
            out.emplace_back(t->name, t);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

std::vector<TensorPtr> EncoderParams::tensors() const {
    std::vector<TensorPtr> out;
    for (auto& [name, t] : named()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

EncoderParams init_params(const EncoderConfig& config, uint64_t seed) {
    config.validate();
    Rng rng = Rng::stream(seed, "init/encoder");

    EncoderParams p;
    p.config = config;
    p.tok_emb = init_weight(rng, {config.vocab_size, config.d_model}, "encoder/tok_emb");
    p.pos_emb = init_weight(rng, {config.max_len, config.d_model}, "encoder/pos_emb");

    char name[64];
    for (int l = 0; l < config.n_layers; ++l) {
        EncoderParams::Layer layer;
        auto named_weight = [&](const char* part, std::vector<int> shape) {
            std::snprintf(name, sizeof(name), "encoder/layer%02d/%s", l, part);
            return init_weight(rng, std::move(shape), name);
        };
        auto named_const = [&](const char* part, std::vector<int> shape, double v) {
            std::snprintf(name, sizeof(name), "encoder/layer%02d/%s", l, part);
            return init_const(std::move(shape), v, name);
        };
        const int d = config.d_model, f = config.d_ff;
        layer.wq = named_weight("attn_wq", {d, d});
        layer.wk = named_weight("attn_wk", {d, d});
        layer.wv = named_weight("attn_wv", {d, d});
        layer.wo = named_weight("attn_wo", {d, d});
        layer.ff_w1 = named_weight("ffn_w1", {d, f});
        layer.ff_b1 = named_const("ffn_b1", {f}, 0.0);
        layer.ff_w2 = named_weight("ffn_w2", {f, d});
        layer.ff_b2 = named_const("ffn_b2", {d}, 0.0);
        layer.ln1_gain = named_const("ln1_gain", {d}, 1.0);
        layer.ln1_bias = named_const("ln1_bias", {d}, 0.0);
        layer.ln2_gain = named_const("ln2_gain", {d}, 1.0);
        layer.ln2_bias = named_const("ln2_bias", {d}, 0.0);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

TensorPtr dropout(Tape* tape, const TensorPtr& x, double p, Rng& rng) {
    if (p <= 0.0) return x;
    auto mask = Tensor::zeros(x->shape);
    const double scale = p < 1.0 ? 1.0 / (1.0 - p) : 0.0;
    for (auto& v : mask->data) v = rng.uniform() >= p ? scale : 0.0;
    return mul(tape, x, mask);
}

HiddenStates encode_batch(Tape* tape, const EncoderParams& params,
                          const std::vector<TokenSequence>& batch, bool train_mode,
                          Rng* dropout_rng, EncodeTrace* trace) {
    const EncoderConfig& cfg = params.config;
    if (batch.empty()) throw ValueError("encode_batch: empty batch");
    for (const auto& seq : batch) {
        if (seq.length() != cfg.max_len) {
            throw DimensionError("encode_batch: sequence length " + std::to_string(seq.length()) +
                                 " does not match config max_len " + std::to_string(cfg.max_len));
        }
    }
    const bool use_dropout = train_mode && cfg.dropout_p > 0.0;
    if (use_dropout && dropout_rng == nullptr) {
        throw ContractError("encode_batch: train mode with dropout needs an RNG");
    }

    const int b = static_cast<int>(batch.size());
    const int len = cfg.max_len, d = cfg.d_model;
    const int heads = cfg.n_heads, hd = cfg.head_dim();

    std::vector<int> tok_idx, pos_idx;
    tok_idx.reserve(static_cast<size_t>(b) * len);
    pos_idx.reserve(static_cast<size_t>(b) * len);
    for (const auto& seq : batch) {
        for (int i = 0; i < len; ++i) {
            tok_idx.push_back(seq.ids[static_cast<size_t>(i)]);
            pos_idx.push_back(i);
        }
    }

    auto x = add(tape, gather_rows(tape, params.tok_emb, tok_idx),
                 gather_rows(tape, params.pos_emb, pos_idx));
    if (use_dropout) x = dropout(tape, x, cfg.dropout_p, *dropout_rng);

    // Additive attention mask per item: column j gets -1e9 when key j is PAD.
    std::vector<TensorPtr> masks;
    masks.reserve(static_cast<size_t>(b));
    for (const auto& seq : batch) {
        auto m = Tensor::zeros({len, len});
        for (int i = 0; i < len; ++i) {
            for (int j = 0; j < len; ++j) {
                if (!seq.attention_mask[static_cast<size_t>(j)]) {
                    m->data[static_cast<size_t>(i) * len + j] = kMaskValue;
                }
            }
        }
        masks.push_back(std::move(m));
    }

    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& layer = params.layers[static_cast<size_t>(l)];

        auto q = matmul(tape, x, layer.wq);
        auto k = matmul(tape, x, layer.wk);
        auto v = matmul(tape, x, layer.wv);

        std::vector<TensorPtr> item_rows;
        item_rows.reserve(static_cast<size_t>(b));
        for (int bi = 0; bi < b; ++bi) {
            std::vector<TensorPtr> head_cols;
            head_cols.reserve(static_cast<size_t>(heads));
            for (int h = 0; h < heads; ++h) {
                auto qh = block(tape, q, bi * len, len, h * hd, hd);
                auto kh = block(tape, k, bi * len, len, h * hd, hd);
                auto vh = block(tape, v, bi * len, len, h * hd, hd);
                auto scores = scale(tape, matmul(tape, qh, transpose(tape, kh)), attn_scale);
                scores = add(tape, scores, masks[static_cast<size_t>(bi)]);
                auto probs = softmax(tape, scores);
                if (trace) trace->attention.push_back({l, bi, h, probs});
                head_cols.push_back(matmul(tape, probs, vh));
            }
            item_rows.push_back(concat_cols(tape, head_cols));
        }
        auto attn = matmul(tape, concat_rows(tape, item_rows), layer.wo);
        if (use_dropout) attn = dropout(tape, attn, cfg.dropout_p, *dropout_rng);
        x = layer_norm(tape, add(tape, x, attn), layer.ln1_gain, layer.ln1_bias, kLayerNormEps);

        auto ff = gelu(tape, add_rowvec(tape, matmul(tape, x, layer.ff_w1), layer.ff_b1));
        ff = add_rowvec(tape, matmul(tape, ff, layer.ff_w2), layer.ff_b2);
        if (use_dropout) ff = dropout(tape, ff, cfg.dropout_p, *dropout_rng);
        x = layer_norm(tape, add(tape, x, ff), layer.ln2_gain, layer.ln2_bias, kLayerNormEps);
    }

    HiddenStates h;
    h.flat = x;
    h.batch = b;
    h.seq_len = len;
    h.d_model = d;
    return h;
}

TensorPtr pool_cls(Tape* tape, const HiddenStates& h) {
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(h.batch));
    for (int bi = 0; bi < h.batch; ++bi) idx.push_back(bi * h.seq_len);
    return gather_rows(tape, h.flat, std::move(idx));
}

}  // namespace mtlforge
