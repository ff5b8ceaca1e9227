#include "mtlforge/hpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "mtlforge/error.hpp"

namespace mtlforge {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kUniformInitTrials = 8;
constexpr int kCandidates = 24;
constexpr double kGoodFraction = 0.25;

struct Dim {
    double lo, hi;
};

double kde_density(double x, const std::vector<double>& points, double bw, const Dim& dim) {
    // Gaussian KDE blended with a uniform floor so ratios stay finite.
    const double range = dim.hi - dim.lo;
    double k = 0.0;
    for (double p : points) {
        const double z = (x - p) / bw;
        k += std::exp(-0.5 * z * z) / (bw * std::sqrt(2.0 * M_PI));
    }
    k /= static_cast<double>(points.size());
    return 0.95 * k + 0.05 / range;
}

double bandwidth(const std::vector<double>& points, const Dim& dim) {
    const double range = dim.hi - dim.lo;
    if (points.size() < 2) return 0.1 * range;
    double mean = 0.0;
    for (double p : points) mean += p;
    mean /= static_cast<double>(points.size());
    double var = 0.0;
    for (double p : points) var += (p - mean) * (p - mean);
    var /= static_cast<double>(points.size() - 1);
    const double sigma = std::sqrt(var);
    const double scott = sigma * std::pow(static_cast<double>(points.size()), -0.2);
    return std::clamp(scott, 0.02 * range, 0.5 * range);
}

double categorical_pmf(int choice, const std::vector<int>& counts, int total) {
    const int k = static_cast<int>(counts.size());
    return (static_cast<double>(counts[static_cast<size_t>(choice)]) + 1.0) /
           (static_cast<double>(total) + static_cast<double>(k));
}

TrainConfig uniform_sample(const SearchSpace& space, Rng& rng) {
    TrainConfig cfg;
    cfg.batch_size = SearchSpace::kBatchChoices[rng.bounded(3)];
    cfg.learning_rate = std::pow(10.0, rng.uniform(SearchSpace::kLogLrLo, SearchSpace::kLogLrHi));
    cfg.dropout_p = rng.uniform();
    cfg.lambda = space.include_lambda ? rng.uniform() : 1.0;
    cfg.mode = space.include_lambda ? TrainMode::kMtl : TrainMode::kStl;
    return cfg;
}

}  // namespace

std::string TrialRecord::to_ledger_line() const {
    ordered_json j;
    j["trial"] = trial_id;
    j["status"] = status;
    // -inf is not representable in JSON; failed trials carry null.
    if (std::isfinite(objective)) {
        j["objective"] = objective;
    } else {
        j["objective"] = nullptr;
    }
    j["seed"] = seed;
    ordered_json c;
    c["batch_size"] = config.batch_size;
    c["learning_rate"] = config.learning_rate;
    c["dropout_p"] = config.dropout_p;
    c["lambda"] = config.lambda;
    c["mode"] = to_string(config.mode);
    j["config"] = c;
    return j.dump();
}

TrialRecord TrialRecord::from_ledger_line(const std::string& line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const std::exception& e) {
        throw ParseError(std::string("ledger: malformed line: ") + e.what());
    }
    TrialRecord r;
    r.trial_id = j.at("trial").get<int>();
    r.status = j.at("status").get<std::string>();
    r.objective = j.at("objective").is_null() ? -std::numeric_limits<double>::infinity()
                                              : j.at("objective").get<double>();
    r.seed = j.at("seed").get<uint64_t>();
    const auto& c = j.at("config");
    r.config.batch_size = c.at("batch_size").get<int>();
    r.config.learning_rate = c.at("learning_rate").get<double>();
    r.config.dropout_p = c.at("dropout_p").get<double>();
    r.config.lambda = c.at("lambda").get<double>();
    r.config.mode = train_mode_from_string(c.at("mode").get<std::string>());
    return r;
}

TrainConfig sample_config(const SearchSpace& space, const std::vector<TrialRecord>& history,
                          uint64_t rng_seed) {
    Rng rng = Rng::stream(rng_seed, "hpo/sample");

    std::vector<const TrialRecord*> finished;
    for (const auto& t : history) {
        if (t.status == "done" && std::isfinite(t.objective)) finished.push_back(&t);
    }
    if (static_cast<int>(finished.size()) < kUniformInitTrials) {
        return uniform_sample(space, rng);
    }

    // Split at the top-quartile objective (maximization). Stable so tied
    // objectives keep ledger order and resumed searches stay reproducible.
    std::vector<const TrialRecord*> sorted = finished;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const TrialRecord* a, const TrialRecord* b) {
                         return a->objective > b->objective;
                     });
    const size_t n_good = std::max<size_t>(
        1, static_cast<size_t>(std::ceil(kGoodFraction * static_cast<double>(sorted.size()))));
    std::vector<const TrialRecord*> good(sorted.begin(),
                                         sorted.begin() + static_cast<long>(n_good));
    std::vector<const TrialRecord*> bad(sorted.begin() + static_cast<long>(n_good), sorted.end());
    // Failed trials inform the bad model.
    for (const auto& t : history) {
        if (t.status == "failed") bad.push_back(&t);
    }
    if (bad.empty()) bad = good;

    const Dim lr_dim{SearchSpace::kLogLrLo, SearchSpace::kLogLrHi};
    const Dim unit_dim{0.0, 1.0};

    auto continuous = [](const std::vector<const TrialRecord*>& set, auto getter) {
        std::vector<double> out;
        out.reserve(set.size());
        for (const auto* t : set) out.push_back(getter(*t));
        return out;
    };
    auto log_lr = [](const TrialRecord& t) { return std::log10(t.config.learning_rate); };
    auto get_dropout = [](const TrialRecord& t) { return t.config.dropout_p; };
    auto get_lambda = [](const TrialRecord& t) { return t.config.lambda; };

    const auto good_lr = continuous(good, log_lr);
    const auto bad_lr = continuous(bad, log_lr);
    const auto good_do = continuous(good, get_dropout);
    const auto bad_do = continuous(bad, get_dropout);
    const auto good_la = continuous(good, get_lambda);
    const auto bad_la = continuous(bad, get_lambda);
    const double bw_good_lr = bandwidth(good_lr, lr_dim), bw_bad_lr = bandwidth(bad_lr, lr_dim);
    const double bw_good_do = bandwidth(good_do, unit_dim), bw_bad_do = bandwidth(bad_do, unit_dim);
    const double bw_good_la = bandwidth(good_la, unit_dim), bw_bad_la = bandwidth(bad_la, unit_dim);

    auto batch_index = [](int bs) {
        for (int i = 0; i < 3; ++i)
            if (SearchSpace::kBatchChoices[i] == bs) return i;
        throw ConfigError("ledger contains batch size outside {32,64,128}");
    };
    std::vector<int> good_bs(3, 0), bad_bs(3, 0);
    for (const auto* t : good) ++good_bs[static_cast<size_t>(batch_index(t->config.batch_size))];
    for (const auto* t : bad) ++bad_bs[static_cast<size_t>(batch_index(t->config.batch_size))];

    double best_score = -std::numeric_limits<double>::infinity();
    TrainConfig best;
    for (int c = 0; c < kCandidates; ++c) {
        TrainConfig cand;
        cand.mode = space.include_lambda ? TrainMode::kMtl : TrainMode::kStl;

        // Draw each dimension from the good model: pick a good point and
        // perturb it by the kernel bandwidth.
        {
            double cum = rng.uniform();
            int pick = 0;
            double mass = 0.0;
            for (int i = 0; i < 3; ++i) {
                mass += categorical_pmf(i, good_bs, static_cast<int>(good.size()));
                if (cum <= mass) {
                    pick = i;
                    break;
                }
                pick = i;
            }
            cand.batch_size = SearchSpace::kBatchChoices[pick];
        }
        const double lr_point = good_lr[rng.bounded(good_lr.size())];
        const double lr_log =
            std::clamp(lr_point + bw_good_lr * rng.normal(), lr_dim.lo, lr_dim.hi);
        cand.learning_rate = std::pow(10.0, lr_log);
        const double do_point = good_do[rng.bounded(good_do.size())];
        cand.dropout_p = std::clamp(do_point + bw_good_do * rng.normal(), 0.0, 1.0);
        if (space.include_lambda) {
            const double la_point = good_la[rng.bounded(good_la.size())];
            cand.lambda = std::clamp(la_point + bw_good_la * rng.normal(), 0.0, 1.0);
        } else {
            cand.lambda = 1.0;
        }

        double score = std::log(kde_density(lr_log, good_lr, bw_good_lr, lr_dim)) -
                       std::log(kde_density(lr_log, bad_lr, bw_bad_lr, lr_dim));
        score += std::log(kde_density(cand.dropout_p, good_do, bw_good_do, unit_dim)) -
                 std::log(kde_density(cand.dropout_p, bad_do, bw_bad_do, unit_dim));
        if (space.include_lambda) {
            score += std::log(kde_density(cand.lambda, good_la, bw_good_la, unit_dim)) -
                     std::log(kde_density(cand.lambda, bad_la, bw_bad_la, unit_dim));
        }
        const int bi = batch_index(cand.batch_size);
        score += std::log(categorical_pmf(bi, good_bs, static_cast<int>(good.size()))) -
                 std::log(categorical_pmf(bi, bad_bs, static_cast<int>(bad.size())));

        if (score > best_score) {
            best_score = score;
            best = cand;
        }
    }
    return best;
}

std::vector<TrialRecord> load_ledger(const std::string& path) {
    std::vector<TrialRecord> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(TrialRecord::from_ledger_line(line));
    }
    return out;
}

int worker_count_from_env() {
    const char* env = std::getenv("MTLFORGE_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

SearchResult run_search(const SearchSpace& space, int budget,
                        const std::function<double(const TrainConfig&)>& objective,
                        uint64_t master_seed, const std::string& ledger_path) {
    if (budget < 1) throw ConfigError("run_search: budget must be >= 1");

    std::vector<TrialRecord> history = load_ledger(ledger_path);
    int next_trial = 0;
    for (const auto& t : history) next_trial = std::max(next_trial, t.trial_id + 1);

    std::mutex mu;
    std::ofstream ledger;
    if (!ledger_path.empty()) {
        ledger.open(ledger_path, std::ios::binary | std::ios::app);
        if (!ledger) throw ValueError("run_search: cannot write ledger " + ledger_path);
    }

    const int workers = std::min(worker_count_from_env(), budget);

    auto run_one = [&](int trial_id, TrainConfig cfg) {
        uint64_t st = master_seed;
        TrialRecord rec;
        rec.trial_id = trial_id;
        rec.config = cfg;
        rec.seed = splitmix64(st);  // fixed training seed during search
        rec.config.seed = rec.seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            rec.objective = objective(rec.config);
            rec.status = "done";
        } catch (const NumericError&) {
            rec.objective = -std::numeric_limits<double>::infinity();
            rec.status = "failed";
        }
        rec.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return rec;
    };

    if (workers <= 1) {
        while (next_trial < budget) {
            const int id = next_trial++;
            uint64_t trial_seed_state = master_seed + static_cast<uint64_t>(id) + 1;
            TrainConfig cfg = sample_config(space, history, splitmix64(trial_seed_state));
            TrialRecord rec = run_one(id, cfg);
            history.push_back(rec);
            if (ledger.is_open()) {
                ledger << rec.to_ledger_line() << "\n";
                ledger.flush();
            }
        }
    } else {
        // Parallel trials: the sampler serializes on the ledger state it can
        // see; completion order (and thus the proposals of later trials) is
        // scheduler-dependent.
        std::vector<std::thread> pool;
        std::condition_variable cv;
        int in_flight = 0;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    int id;
                    TrainConfig cfg;
                    {
                        std::unique_lock<std::mutex> lock(mu);
                        if (next_trial >= budget) return;
                        id = next_trial++;
                        ++in_flight;
                        uint64_t trial_seed_state = master_seed + static_cast<uint64_t>(id) + 1;
                        cfg = sample_config(space, history, splitmix64(trial_seed_state));
                    }
                    TrialRecord rec = run_one(id, cfg);
                    {
                        std::unique_lock<std::mutex> lock(mu);
                        history.push_back(rec);
                        if (ledger.is_open()) {
                            ledger << rec.to_ledger_line() << "\n";
                            ledger.flush();
                        }
                        --in_flight;
                    }
                    cv.notify_all();
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    SearchResult res;
    res.trials = history;
    res.best_objective = -std::numeric_limits<double>::infinity();
    for (const auto& t : history) {
        if (t.status == "done" && t.objective > res.best_objective) {
            res.best_objective = t.objective;
            res.best_trial = t.trial_id;
            res.best_config = t.config;
        }
    }
    if (res.best_trial < 0) throw NumericError("run_search: every trial failed");
    return res;
}

}  // namespace mtlforge
