#include "mtlforge/verify.hpp"

#include "mtlforge/data.hpp"
#include "mtlforge/encoder.hpp"
#include "mtlforge/error.hpp"
#include "mtlforge/heads.hpp"
#include "mtlforge/tokenizer.hpp"

namespace mtlforge {

GradCheckReport run_encoder_gradcheck(const std::string& preset, int sample, double h,
                                      uint64_t seed, bool negative_control) {
    EncoderConfig cfg;
    int batch;
    if (preset == "micro") {
        cfg = {1, 16, 2, 32, 12, 0, 0.0};
        batch = 2;
    } else if (preset == "tiny") {
        cfg = {2, 64, 4, 256, 16, 0, 0.0};
        batch = 4;
    } else {
        throw ConfigError("gradcheck: unknown preset '" + preset + "' (micro or tiny)");
    }

    // Deterministic synthetic texts and vocabulary.
    SynthPair pair = synth_generate(64, 50, seed, 0.7);
    std::vector<std::string> corpus;
    for (const auto& ex : pair.primary.examples) corpus.push_back(ex.text);
    Vocabulary vocab = Vocabulary::build(corpus, 600, 1);
    cfg.vocab_size = vocab.size();

    std::vector<TokenSequence> seqs;
    std::vector<int> targets1, targets2;
    for (int i = 0; i < batch; ++i) {
        seqs.push_back(encode(vocab, pair.primary.examples[static_cast<size_t>(i)].text, cfg.max_len));
        targets1.push_back(pair.primary.label_space.index_of(
            pair.primary.examples[static_cast<size_t>(i)].label));
        targets2.push_back(pair.auxiliary.label_space.index_of(
            pair.auxiliary.examples[static_cast<size_t>(i)].label));
    }

    EncoderParams params = init_params(cfg, seed);
    TaskHead head1 = init_head(cfg.d_model, pair.primary.label_space, seed);
    TaskHead head2 = init_head(cfg.d_model, pair.auxiliary.label_space, seed);
    const double lambda = 0.6;

    auto f = [&](Tape* tape) -> TensorPtr {
        auto hidden = encode_batch(tape, params, seqs, /*train_mode=*/false);
        auto pooled = pool_cls(tape, hidden);
        auto l1 = cross_entropy(tape, head_forward(tape, head1, pooled), targets1);
        auto l2 = cross_entropy(tape, head_forward(tape, head2, pooled), targets2);
        auto total = combined_loss(tape, l1, l2, lambda);
        if (negative_control && tape) {
            // Identity in the forward direction whose recorded rule doubles
            // the gradient; finite differences must expose it.
            auto out = Tensor::scalar(total->data[0], true);
            tape->record(out, [total, out] {
                total->ensure_grad();
                total->grad[0] += 2.0 * out->grad[0];
            });
            return out;
        }
        return total;
    };

    std::vector<TensorPtr> all_params = params.tensors();
    for (auto& t : head1.tensors()) all_params.push_back(t);
    for (auto& t : head2.tensors()) all_params.push_back(t);

    Rng probe = Rng::stream(seed, "gradcheck/probe");
    return grad_check(f, all_params, h, sample, probe);
}

}  // namespace mtlforge
