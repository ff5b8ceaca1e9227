#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mtlforge/encoder.hpp"
#include "mtlforge/error.hpp"
#include "mtlforge/heads.hpp"
#include "mtlforge/tokenizer.hpp"
#include "mtlforge/verify.hpp"

using namespace mtlforge;

namespace {

TokenSequence make_seq(std::vector<int> ids) {
    TokenSequence s;
    s.ids = std::move(ids);
    s.attention_mask.assign(s.ids.size(), 0);
    for (size_t i = 0; i < s.ids.size(); ++i) s.attention_mask[i] = s.ids[i] != kPadId ? 1 : 0;
    return s;
}

// Straight-line scalar recomputation of one single-head encoder layer over
// one sequence. Plain loops and arrays; shares nothing with the Tensor path.
struct ScalarOracle {
    int len, d, dff;
    std::vector<std::vector<double>> tok_emb, pos_emb, wq, wk, wv, wo, w1, w2;
    std::vector<double> b1, b2, ln1g, ln1b, ln2g, ln2b;

    static double gelu1(double x) {
        const double k = 0.7978845608028654;
        const double u = k * (x + 0.044715 * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
    }

    std::vector<std::vector<double>> run(const std::vector<int>& ids,
                                         const std::vector<int>& mask) const {
        auto matvec = [](const std::vector<double>& row,
                         const std::vector<std::vector<double>>& m, int out_dim) {
            std::vector<double> out(static_cast<size_t>(out_dim), 0.0);
            for (size_t p = 0; p < row.size(); ++p)
                for (int j = 0; j < out_dim; ++j) out[static_cast<size_t>(j)] += row[p] * m[p][static_cast<size_t>(j)];
            return out;
        };
        auto lnorm = [&](const std::vector<double>& row, const std::vector<double>& g,
                         const std::vector<double>& b) {
            double mean = 0.0;
            for (double v : row) mean += v;
            mean /= static_cast<double>(row.size());
            double var = 0.0;
            for (double v : row) var += (v - mean) * (v - mean);
            var /= static_cast<double>(row.size());
            const double is = 1.0 / std::sqrt(var + 1e-12);
            std::vector<double> out(row.size());
            for (size_t j = 0; j < row.size(); ++j) out[j] = g[j] * (row[j] - mean) * is + b[j];
            return out;
        };

        std::vector<std::vector<double>> x(static_cast<size_t>(len));
        for (int i = 0; i < len; ++i) {
            x[static_cast<size_t>(i)].resize(static_cast<size_t>(d));
            for (int j = 0; j < d; ++j) {
                x[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                    tok_emb[static_cast<size_t>(ids[static_cast<size_t>(i)])][static_cast<size_t>(j)] +
                    pos_emb[static_cast<size_t>(i)][static_cast<size_t>(j)];
            }
        }

        std::vector<std::vector<double>> q(static_cast<size_t>(len)), k(static_cast<size_t>(len)),
            v(static_cast<size_t>(len));
        for (int i = 0; i < len; ++i) {
            q[static_cast<size_t>(i)] = matvec(x[static_cast<size_t>(i)], wq, d);
            k[static_cast<size_t>(i)] = matvec(x[static_cast<size_t>(i)], wk, d);
            v[static_cast<size_t>(i)] = matvec(x[static_cast<size_t>(i)], wv, d);
        }

        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        std::vector<std::vector<double>> ctx(static_cast<size_t>(len),
                                             std::vector<double>(static_cast<size_t>(d), 0.0));
        for (int i = 0; i < len; ++i) {
            std::vector<double> scores(static_cast<size_t>(len));
            for (int j = 0; j < len; ++j) {
                double dot = 0.0;
                for (int p = 0; p < d; ++p)
                    dot += q[static_cast<size_t>(i)][static_cast<size_t>(p)] *
                           k[static_cast<size_t>(j)][static_cast<size_t>(p)];
                scores[static_cast<size_t>(j)] =
                    dot * scale + (mask[static_cast<size_t>(j)] ? 0.0 : -1e9);
            }
            double mx = scores[0];
            for (double s : scores) mx = std::max(mx, s);
            double z = 0.0;
            std::vector<double> probs(static_cast<size_t>(len));
            for (int j = 0; j < len; ++j) {
                probs[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
                z += probs[static_cast<size_t>(j)];
            }
            for (int j = 0; j < len; ++j) probs[static_cast<size_t>(j)] /= z;
            for (int j = 0; j < len; ++j)
                for (int p = 0; p < d; ++p)
                    ctx[static_cast<size_t>(i)][static_cast<size_t>(p)] +=
                        probs[static_cast<size_t>(j)] * v[static_cast<size_t>(j)][static_cast<size_t>(p)];
        }

        for (int i = 0; i < len; ++i) {
            auto attn_out = matvec(ctx[static_cast<size_t>(i)], wo, d);
            std::vector<double> res(static_cast<size_t>(d));
            for (int j = 0; j < d; ++j)
                res[static_cast<size_t>(j)] =
                    x[static_cast<size_t>(i)][static_cast<size_t>(j)] + attn_out[static_cast<size_t>(j)];
            x[static_cast<size_t>(i)] = lnorm(res, ln1g, ln1b);

            auto h1 = matvec(x[static_cast<size_t>(i)], w1, dff);
            for (int j = 0; j < dff; ++j) {
                h1[static_cast<size_t>(j)] = gelu1(h1[static_cast<size_t>(j)] + b1[static_cast<size_t>(j)]);
            }
            auto h2 = matvec(h1, w2, d);
            for (int j = 0; j < d; ++j)
                h2[static_cast<size_t>(j)] =
                    h2[static_cast<size_t>(j)] + b2[static_cast<size_t>(j)] +
                    x[static_cast<size_t>(i)][static_cast<size_t>(j)];
            x[static_cast<size_t>(i)] = lnorm(h2, ln2g, ln2b);
        }
        return x;
    }
};

// Hand-set parameters shared by the oracle and an EncoderParams instance.
void fill_handset(EncoderParams& params, ScalarOracle& oracle) {
    const int vocab = params.config.vocab_size, len = params.config.max_len;
    const int d = params.config.d_model, dff = params.config.d_ff;
    oracle.len = len;
    oracle.d = d;
    oracle.dff = dff;

    auto set2 = [](TensorPtr t, std::vector<std::vector<double>>& o, int rows, int cols,
                   auto fn) {
        o.assign(static_cast<size_t>(rows), std::vector<double>(static_cast<size_t>(cols)));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) {
                const double v = fn(i, j);
                t->data[static_cast<size_t>(i) * cols + j] = v;
                o[static_cast<size_t>(i)][static_cast<size_t>(j)] = v;
            }
    };
    auto set1 = [](TensorPtr t, std::vector<double>& o, int n, auto fn) {
        o.assign(static_cast<size_t>(n), 0.0);
        for (int j = 0; j < n; ++j) {
            const double v = fn(j);
            t->data[static_cast<size_t>(j)] = v;
            o[static_cast<size_t>(j)] = v;
        }
    };

    set2(params.tok_emb, oracle.tok_emb, vocab, d,
         [](int i, int j) { return 0.03 * i - 0.02 * j + 0.01; });
    set2(params.pos_emb, oracle.pos_emb, len, d, [](int i, int j) { return 0.02 * i + 0.01 * j; });
    auto& l = params.layers[0];
    set2(l.wq, oracle.wq, d, d, [](int i, int j) { return 0.05 * (i == j) + 0.01 * i - 0.01 * j; });
    set2(l.wk, oracle.wk, d, d, [](int i, int j) { return 0.04 * (i == j) - 0.01 * i + 0.02 * j; });
    set2(l.wv, oracle.wv, d, d, [](int i, int j) { return 0.03 * (i == j) + 0.005 * (i + j); });
    set2(l.wo, oracle.wo, d, d, [](int i, int j) { return 0.06 * (i == j) - 0.005 * i; });
    set2(l.ff_w1, oracle.w1, d, dff, [](int i, int j) { return 0.02 - 0.003 * i + 0.002 * j; });
    set1(l.ff_b1, oracle.b1, dff, [](int j) { return 0.01 * j; });
    set2(l.ff_w2, oracle.w2, dff, d, [](int i, int j) { return -0.01 + 0.002 * i + 0.001 * j; });
    set1(l.ff_b2, oracle.b2, d, [](int j) { return 0.02 - 0.01 * j; });
    set1(l.ln1_gain, oracle.ln1g, d, [](int j) { return 1.0 + 0.1 * j; });
    set1(l.ln1_bias, oracle.ln1b, d, [](int j) { return 0.05 * j; });
    set1(l.ln2_gain, oracle.ln2g, d, [](int j) { return 1.0 - 0.05 * j; });
    set1(l.ln2_bias, oracle.ln2b, d, [](int j) { return -0.02 * j; });
}

}  // namespace

TEST_CASE("init_params is bit-deterministic per seed") {
    EncoderConfig cfg{2, 16, 2, 32, 8, 50, 0.1};
    EncoderParams a = init_params(cfg, 42);
    EncoderParams b = init_params(cfg, 42);
    EncoderParams c = init_params(cfg, 43);
    auto na = a.named(), nb = b.named(), nc = c.named();
    REQUIRE(na.size() == nb.size());
    bool any_diff_c = false;
    for (size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].first == nb[i].first);
        CHECK(na[i].second->data == nb[i].second->data);
        if (na[i].second->data != nc[i].second->data) any_diff_c = true;
    }
    CHECK(any_diff_c);
}

TEST_CASE("layer norm gains initialize to exactly one and biases to zero") {
    EncoderConfig cfg{1, 8, 2, 16, 4, 30, 0.0};
    EncoderParams p = init_params(cfg, 7);
    for (double v : p.layers[0].ln1_gain->data) CHECK(v == 1.0);
    for (double v : p.layers[0].ln2_gain->data) CHECK(v == 1.0);
    for (double v : p.layers[0].ln1_bias->data) CHECK(v == 0.0);
    for (double v : p.layers[0].ff_b1->data) CHECK(v == 0.0);
}

TEST_CASE("initial weights are truncated and nearly centered") {
    EncoderConfig cfg{1, 64, 4, 64, 4, 64, 0.0};
    EncoderParams p = init_params(cfg, 11);
    const auto& w = p.layers[0].wq;  // 64x64 sample
    double mean = 0.0;
    for (double v : w->data) {
        CHECK(std::fabs(v) <= 0.04 + 1e-15);  // 2 sigma * 0.02
        mean += v;
    }
    mean /= static_cast<double>(w->data.size());
    CHECK(std::fabs(mean) < 0.01);
}

TEST_CASE("invalid config is rejected") {
    EncoderConfig bad{2, 30, 4, 64, 8, 100, 0.1};  // 30 % 4 != 0
    CHECK_THROWS_AS(init_params(bad, 1), ConfigError);
    EncoderConfig bad2{2, 32, 4, 64, 2, 100, 0.1};  // max_len < 3
    CHECK_THROWS_AS(init_params(bad2, 1), ConfigError);
}

TEST_CASE("single-layer single-head forward matches the scalar oracle") {
    EncoderConfig cfg{1, 4, 1, 8, 4, 6, 0.0};
    EncoderParams params = init_params(cfg, 1);
    ScalarOracle oracle;
    fill_handset(params, oracle);

    TokenSequence seq = make_seq({kClsId, 4, kSepId, kPadId});
    auto h = encode_batch(nullptr, params, {seq}, false);
    auto expect = oracle.run(seq.ids, seq.attention_mask);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            CHECK(std::fabs(h.flat->at(i, j) - expect[static_cast<size_t>(i)][static_cast<size_t>(j)]) <
                  1e-12);
        }
    }

    // pool_cls returns exactly row 0 of the final layer.
    auto pooled = pool_cls(nullptr, h);
    for (int j = 0; j < 4; ++j) CHECK(pooled->at(0, j) == h.flat->at(0, j));
}

TEST_CASE("identical batch items produce identical rows in eval mode") {
    EncoderConfig cfg{2, 16, 2, 32, 8, 60, 0.0};
    EncoderParams params = init_params(cfg, 3);
    TokenSequence seq = make_seq({kClsId, 10, 11, 12, kSepId, kPadId, kPadId, kPadId});
    auto h = encode_batch(nullptr, params, {seq, seq}, false);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 16; ++j) CHECK(h.flat->at(i, j) == h.flat->at(8 + i, j));
    }
}

TEST_CASE("PAD positions cannot influence the CLS representation") {
    EncoderConfig cfg{2, 16, 2, 32, 10, 60, 0.0};
    EncoderParams params = init_params(cfg, 5);
    TokenSequence a = make_seq({kClsId, 20, 21, kSepId, kPadId, kPadId, kPadId, kPadId, kPadId, kPadId});
    TokenSequence b = a;
    // Corrupt the token ids under the mask: outputs must be bit-identical.
    b.ids[5] = 33;
    b.ids[7] = 44;
    b.ids[9] = 55;
    auto ha = encode_batch(nullptr, params, {a}, false);
    auto hb = encode_batch(nullptr, params, {b}, false);
    auto pa = pool_cls(nullptr, ha);
    auto pb = pool_cls(nullptr, hb);
    CHECK(pa->data == pb->data);
}

TEST_CASE("batch permutation permutes pooled rows identically") {
    EncoderConfig cfg{1, 16, 2, 32, 8, 60, 0.0};
    EncoderParams params = init_params(cfg, 9);
    TokenSequence s1 = make_seq({kClsId, 10, kSepId, kPadId, kPadId, kPadId, kPadId, kPadId});
    TokenSequence s2 = make_seq({kClsId, 11, 12, kSepId, kPadId, kPadId, kPadId, kPadId});
    auto p12 = pool_cls(nullptr, encode_batch(nullptr, params, {s1, s2}, false));
    auto p21 = pool_cls(nullptr, encode_batch(nullptr, params, {s2, s1}, false));
    for (int j = 0; j < 16; ++j) {
        CHECK(p12->at(0, j) == p21->at(1, j));
        CHECK(p12->at(1, j) == p21->at(0, j));
    }
}

TEST_CASE("attention rows sum to one and masked keys get no weight") {
    EncoderConfig cfg{2, 16, 4, 32, 8, 60, 0.0};
    EncoderParams params = init_params(cfg, 13);
    TokenSequence seq = make_seq({kClsId, 10, 11, kSepId, kPadId, kPadId, kPadId, kPadId});
    EncodeTrace trace;
    encode_batch(nullptr, params, {seq}, false, nullptr, &trace);
    REQUIRE(trace.attention.size() == 2 * 4);  // layers x heads
    for (const auto& att : trace.attention) {
        for (int i = 0; i < 8; ++i) {
            double total = 0.0, unmasked = 0.0;
            for (int j = 0; j < 8; ++j) {
                const double w = att.probs->at(i, j);
                total += w;
                if (seq.attention_mask[static_cast<size_t>(j)]) unmasked += w;
                if (!seq.attention_mask[static_cast<size_t>(j)]) CHECK(w < 1e-30);
            }
            CHECK(std::fabs(total - 1.0) <= 1e-10);
            CHECK(std::fabs(unmasked - 1.0) <= 1e-10);
        }
    }
}

TEST_CASE("eval-mode encode is a pure function") {
    EncoderConfig cfg{2, 16, 2, 32, 8, 60, 0.5};  // dropout_p set but inactive in eval
    EncoderParams params = init_params(cfg, 17);
    TokenSequence seq = make_seq({kClsId, 30, 31, 32, kSepId, kPadId, kPadId, kPadId});
    auto h1 = encode_batch(nullptr, params, {seq}, false);
    auto h2 = encode_batch(nullptr, params, {seq}, false);
    CHECK(h1.flat->data == h2.flat->data);
}

TEST_CASE("dropout masks depend only on the supplied stream") {
    EncoderConfig cfg{1, 16, 2, 32, 8, 60, 0.3};
    EncoderParams params = init_params(cfg, 19);
    TokenSequence seq = make_seq({kClsId, 30, 31, kSepId, kPadId, kPadId, kPadId, kPadId});
    Rng r1 = Rng::stream(7, "train/dropout/primary/step/0");
    Rng r2 = Rng::stream(7, "train/dropout/primary/step/0");
    Rng r3 = Rng::stream(7, "train/dropout/primary/step/1");
    auto h1 = encode_batch(nullptr, params, {seq}, true, &r1);
    auto h2 = encode_batch(nullptr, params, {seq}, true, &r2);
    auto h3 = encode_batch(nullptr, params, {seq}, true, &r3);
    CHECK(h1.flat->data == h2.flat->data);
    CHECK(h1.flat->data != h3.flat->data);
}

TEST_CASE("both task losses reach every shared parameter tensor") {
    EncoderConfig cfg{2, 16, 2, 32, 8, 60, 0.0};
    EncoderParams params = init_params(cfg, 23);
    LabelSpace s1{"taskA", {"x", "y", "z"}};
    LabelSpace s2{"taskB", {"p", "q"}};
    TaskHead h1 = init_head(cfg.d_model, s1, 23);
    TaskHead h2 = init_head(cfg.d_model, s2, 23);

    std::vector<TokenSequence> batch = {
        make_seq({kClsId, 10, 11, kSepId, kPadId, kPadId, kPadId, kPadId}),
        make_seq({kClsId, 12, kSepId, kPadId, kPadId, kPadId, kPadId, kPadId})};

    Tape tape;
    auto hidden = encode_batch(&tape, params, batch, false);
    auto pooled = pool_cls(&tape, hidden);
    auto l1 = cross_entropy(&tape, head_forward(&tape, h1, pooled), {0, 2});
    auto l2 = cross_entropy(&tape, head_forward(&tape, h2, pooled), {1, 0});
    auto total = combined_loss(&tape, l1, l2, 0.5);
    for (auto& t : params.tensors()) {
        t->ensure_grad();
        t->zero_grad();
    }
    tape.backward(total);
    for (auto& [name, t] : params.named()) {
        double norm = 0.0;
        for (double g : t->grad) norm += g * g;
        INFO("tensor ", name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("sequence length mismatch is a shape error") {
    EncoderConfig cfg{1, 16, 2, 32, 8, 60, 0.0};
    EncoderParams params = init_params(cfg, 29);
    TokenSequence shorty = make_seq({kClsId, kSepId, kPadId, kPadId});
    CHECK_THROWS_AS(encode_batch(nullptr, params, {shorty}, false), DimensionError);
}

TEST_CASE("micro gradcheck preset passes the 1e-4 gate") {
    auto rep = run_encoder_gradcheck("micro", 120, 1e-5, 3);
    CHECK(rep.max_rel_error < 1e-4);
    CHECK(rep.coords_checked == 120);
}

TEST_CASE("gradcheck negative control is caught") {
    auto rep = run_encoder_gradcheck("micro", 60, 1e-5, 3, /*negative_control=*/true);
    CHECK(rep.max_rel_error > 1e-4);
}
