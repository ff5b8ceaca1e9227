#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtlforge/tensor.hpp"
#include "mtlforge/tokenizer.hpp"

namespace mtlforge {

struct EncoderConfig {
    int n_layers = 2;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 256;
    int max_len = 64;
    int vocab_size = 4000;
    double dropout_p = 0.1;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;  // throws ConfigError
    bool operator==(const EncoderConfig&) const = default;
};

// The single shared parameter set of the encoder. Both task heads write
// gradients into these same tensors during multitask training.
struct EncoderParams {
    EncoderConfig config;

    TensorPtr tok_emb;  // [vocab_size x d_model]
    TensorPtr pos_emb;  // [max_len x d_model]

    struct Layer {
        TensorPtr wq, wk, wv, wo;          // [d_model x d_model]
        TensorPtr ff_w1, ff_w2;            // [d_model x d_ff], [d_ff x d_model]
        TensorPtr ff_b1, ff_b2;            // [d_ff], [d_model]
        TensorPtr ln1_gain, ln1_bias;      // post-attention layer norm
        TensorPtr ln2_gain, ln2_bias;      // post-FFN layer norm
    };
    std::vector<Layer> layers;

    // (name, tensor) pairs sorted lexicographically by name; the canonical
    // ordering for checkpoints, optimizer traversal and gradient checks.
    std::vector<std::pair<std::string, TensorPtr>> named() const;
    std::vector<TensorPtr> tensors() const;
};

// Weights ~ Normal(0, 0.02^2) truncated at 2 sigma, biases 0, layer-norm
// gains 1; deterministic per seed via the "init/encoder" stream.
EncoderParams init_params(const EncoderConfig& config, uint64_t seed);

struct HiddenStates {
    TensorPtr flat;  // [(batch * max_len) x d_model], row b*max_len+i = position i of item b
    int batch = 0;
    int seq_len = 0;
    int d_model = 0;
};

// Optional probe of attention distributions for tests and inspection.
struct EncodeTrace {
    struct Attention {
        int layer, batch_index, head;
        TensorPtr probs;  // [max_len x max_len]
    };
    std::vector<Attention> attention;
};

// Multi-head self-attention (PAD keys masked with -1e9 before softmax)
// + residual + layer norm, then GELU FFN + residual + layer norm, repeated
// per layer. Dropout is live only in train mode and draws from `dropout_rng`.
HiddenStates encode_batch(Tape* tape, const EncoderParams& params,
                          const std::vector<TokenSequence>& batch, bool train_mode,
                          Rng* dropout_rng = nullptr, EncodeTrace* trace = nullptr);

// Final-layer hidden vector at sequence position 0 (the CLS slot) per item.
TensorPtr pool_cls(Tape* tape, const HiddenStates& h);

// Inverted dropout: keep with probability 1-p and scale by 1/(1-p).
TensorPtr dropout(Tape* tape, const TensorPtr& x, double p, Rng& rng);

}  // namespace mtlforge
