#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "mtlforge/error.hpp"
#include "mtlforge/hpo.hpp"

using namespace mtlforge;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void check_in_bounds(const TrainConfig& cfg, bool with_lambda) {
    CHECK((cfg.batch_size == 32 || cfg.batch_size == 64 || cfg.batch_size == 128));
    CHECK(cfg.learning_rate >= 1e-6);
    CHECK(cfg.learning_rate <= 1e-3);
    CHECK(cfg.dropout_p >= 0.0);
    CHECK(cfg.dropout_p <= 1.0);
    if (with_lambda) {
        CHECK(cfg.lambda >= 0.0);
        CHECK(cfg.lambda <= 1.0);
    } else {
        CHECK(cfg.lambda == 1.0);
    }
}

TrialRecord make_trial(int id, int bs, double lr, double dropout, double objective) {
    TrialRecord t;
    t.trial_id = id;
    t.config.batch_size = bs;
    t.config.learning_rate = lr;
    t.config.dropout_p = dropout;
    t.config.lambda = 1.0;
    t.config.mode = TrainMode::kStl;
    t.objective = objective;
    t.status = "done";
    return t;
}

}  // namespace

TEST_CASE("empty history samples uniformly within the space") {
    SearchSpace space;
    space.include_lambda = false;
    double lr_min = 1.0, lr_max = 0.0;
    for (uint64_t s = 0; s < 200; ++s) {
        TrainConfig cfg = sample_config(space, {}, s);
        check_in_bounds(cfg, false);
        lr_min = std::min(lr_min, cfg.learning_rate);
        lr_max = std::max(lr_max, cfg.learning_rate);
    }
    // Log-uniform sampling should cover both decades.
    CHECK(lr_min < 1e-5);
    CHECK(lr_max > 1e-4);
}

TEST_CASE("sampling is deterministic per (history, seed)") {
    SearchSpace space;
    space.include_lambda = true;
    std::vector<TrialRecord> history;
    for (int i = 0; i < 12; ++i) {
        history.push_back(make_trial(i, 32, 1e-4 * (i + 1) / 6.0, 0.1 * (i % 5), 0.5 + 0.01 * i));
    }
    TrainConfig a = sample_config(space, history, 99);
    TrainConfig b = sample_config(space, history, 99);
    CHECK(a.batch_size == b.batch_size);
    CHECK(a.learning_rate == b.learning_rate);
    CHECK(a.dropout_p == b.dropout_p);
    CHECK(a.lambda == b.lambda);
}

TEST_CASE("a thousand proposals all respect the search bounds") {
    SearchSpace space;
    space.include_lambda = true;
    std::vector<TrialRecord> history;
    for (uint64_t s = 0; s < 1000; ++s) {
        TrainConfig cfg = sample_config(space, history, s);
        check_in_bounds(cfg, true);
        if (history.size() < 40) {
            TrialRecord t;
            t.trial_id = static_cast<int>(s);
            t.config = cfg;
            t.status = "done";
            t.objective = 0.5 + 0.3 * std::sin(static_cast<double>(s));
            history.push_back(t);
        }
    }
}

TEST_CASE("TPE concentrates proposals where the good trials live") {
    // History whose top quartile sits at lr ~= 1e-4.
    SearchSpace space;
    space.include_lambda = false;
    std::vector<TrialRecord> history;
    int id = 0;
    for (double lr : {0.9e-4, 1.0e-4, 1.1e-4, 1.05e-4, 0.95e-4}) {
        history.push_back(make_trial(id++, 64, lr, 0.1, 0.9));  // good
    }
    for (double lr : {1e-6, 3e-6, 1e-5, 2e-3 / 3, 1e-3, 5e-4, 2e-6, 8e-6, 3e-4, 7e-4, 9e-4,
                      4e-6, 6e-5 / 10, 2e-5, 1.5e-6}) {
        history.push_back(make_trial(id++, 32, lr, 0.5, 0.2));  // bad
    }
    int in_band = 0;
    for (uint64_t s = 0; s < 100; ++s) {
        TrainConfig cfg = sample_config(space, history, 1000 + s);
        if (cfg.learning_rate >= 3e-5 && cfg.learning_rate <= 3e-4) ++in_band;
    }
    CHECK(in_band >= 60);
}

TEST_CASE("ledger lines round-trip including failed trials") {
    TrialRecord t = make_trial(3, 64, 2.5e-4, 0.3, 0.875);
    TrialRecord back = TrialRecord::from_ledger_line(t.to_ledger_line());
    CHECK(back.trial_id == 3);
    CHECK(back.config.batch_size == 64);
    CHECK(back.config.learning_rate == doctest::Approx(2.5e-4).epsilon(1e-15));
    CHECK(back.objective == doctest::Approx(0.875).epsilon(1e-15));

    TrialRecord failed = make_trial(4, 32, 1e-5, 0.2, 0.0);
    failed.status = "failed";
    failed.objective = -std::numeric_limits<double>::infinity();
    TrialRecord fb = TrialRecord::from_ledger_line(failed.to_ledger_line());
    CHECK(fb.status == "failed");
    CHECK(std::isinf(fb.objective));
    CHECK(fb.objective < 0);
}

TEST_CASE("budget one returns that single trial") {
    std::remove("hpo_ledger_one.jsonl");
    SearchSpace space;
    auto res = run_search(
        space, 1, [](const TrainConfig& cfg) { return 1.0 - cfg.dropout_p; }, 5,
        "hpo_ledger_one.jsonl");
    CHECK(res.trials.size() == 1);
    CHECK(res.best_trial == 0);
    std::remove("hpo_ledger_one.jsonl");
}

TEST_CASE("rerunning a search reproduces the ledger byte for byte") {
    auto objective = [](const TrainConfig& cfg) {
        return 1.0 / (1.0 + std::fabs(std::log10(cfg.learning_rate) + 4.0)) - 0.1 * cfg.dropout_p;
    };
    std::remove("hpo_ledger_a.jsonl");
    std::remove("hpo_ledger_b.jsonl");
    SearchSpace space;
    run_search(space, 12, objective, 42, "hpo_ledger_a.jsonl");
    run_search(space, 12, objective, 42, "hpo_ledger_b.jsonl");
    CHECK(slurp("hpo_ledger_a.jsonl") == slurp("hpo_ledger_b.jsonl"));
    std::remove("hpo_ledger_a.jsonl");
    std::remove("hpo_ledger_b.jsonl");
}

TEST_CASE("resuming from a partial ledger matches an uninterrupted run") {
    auto objective = [](const TrainConfig& cfg) {
        return 0.5 + 0.3 * std::sin(1000.0 * cfg.learning_rate) - 0.05 * cfg.dropout_p;
    };
    std::remove("hpo_ledger_full.jsonl");
    std::remove("hpo_ledger_resume.jsonl");
    SearchSpace space;
    run_search(space, 10, objective, 7, "hpo_ledger_full.jsonl");

    run_search(space, 4, objective, 7, "hpo_ledger_resume.jsonl");  // interrupted after 4
    auto resumed = run_search(space, 10, objective, 7, "hpo_ledger_resume.jsonl");
    CHECK(slurp("hpo_ledger_full.jsonl") == slurp("hpo_ledger_resume.jsonl"));
    CHECK(resumed.trials.size() == 10);
    std::remove("hpo_ledger_full.jsonl");
    std::remove("hpo_ledger_resume.jsonl");
}

TEST_CASE("the running best objective is monotone over trials") {
    auto objective = [](const TrainConfig& cfg) { return cfg.dropout_p; };
    std::remove("hpo_ledger_mono.jsonl");
    SearchSpace space;
    auto res = run_search(space, 20, objective, 11, "hpo_ledger_mono.jsonl");
    double best = -1.0;
    std::vector<double> running;
    for (const auto& t : res.trials) {
        best = std::max(best, t.objective);
        running.push_back(best);
    }
    for (size_t i = 1; i < running.size(); ++i) CHECK(running[i] >= running[i - 1]);
    CHECK(res.best_objective == best);
    // Best-of-20 is at least best-of-3 under the same seed stream prefix.
    double best3 = -1.0;
    for (size_t i = 0; i < 3; ++i) best3 = std::max(best3, res.trials[i].objective);
    CHECK(res.best_objective >= best3);
    std::remove("hpo_ledger_mono.jsonl");
}

TEST_CASE("a failed trial is recorded and the search continues") {
    int calls = 0;
    auto objective = [&calls](const TrainConfig& cfg) -> double {
        if (++calls == 2) throw NumericError("loss diverged");
        return cfg.dropout_p;
    };
    std::remove("hpo_ledger_fail.jsonl");
    SearchSpace space;
    auto res = run_search(space, 5, objective, 13, "hpo_ledger_fail.jsonl");
    REQUIRE(res.trials.size() == 5);
    int failed = 0;
    for (const auto& t : res.trials) {
        if (t.status == "failed") {
            ++failed;
            CHECK(std::isinf(t.objective));
        }
    }
    CHECK(failed == 1);
    CHECK(res.best_trial >= 0);
    std::remove("hpo_ledger_fail.jsonl");
}
