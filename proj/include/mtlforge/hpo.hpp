#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtlforge/trainer.hpp"

namespace mtlforge {

// Search bounds: batch size in {32,64,128}, learning rate log-uniform over
// [1e-6,1e-3], dropout uniform over [0,1], lambda uniform over [0,1] when the
// trial config is multitask.
struct SearchSpace {
    bool include_lambda = false;

    static constexpr int kBatchChoices[3] = {32, 64, 128};
    static constexpr double kLogLrLo = -6.0, kLogLrHi = -3.0;
};

struct TrialRecord {
    int trial_id = 0;
    TrainConfig config;
    uint64_t seed = 0;
    double objective = 0.0;  // val macro-F1; -inf for failed trials
    std::string status;      // "done" or "failed"
    double wall_time_s = 0.0;  // in-memory only; not serialized to the ledger

    std::string to_ledger_line() const;
    static TrialRecord from_ledger_line(const std::string& line);
};

// One proposal. The first 8 completed trials are sampled uniformly
// (log-uniform for the learning rate); afterwards a Tree-structured Parzen
// Estimator splits the history at the top-25% objective quantile, models
// good/bad densities per dimension, draws 24 candidates from the good model
// and keeps the one with the best good/bad density ratio. Deterministic per
// (history, rng_seed).
TrainConfig sample_config(const SearchSpace& space, const std::vector<TrialRecord>& history,
                          uint64_t rng_seed);

struct SearchResult {
    TrainConfig best_config;
    double best_objective = 0.0;
    int best_trial = -1;
    std::vector<TrialRecord> trials;
};

// Runs `budget` trials of `objective`, persisting each TrialRecord to the
// append-only ledger as it completes; resumes from an existing ledger.
// A NumericError from the objective marks the trial failed and the search
// continues. Worker count comes from MTLFORGE_THREADS (default 1); with one
// worker the ledger is bit-reproducible and resumable mid-search.
SearchResult run_search(const SearchSpace& space, int budget,
                        const std::function<double(const TrainConfig&)>& objective,
                        uint64_t master_seed, const std::string& ledger_path);

std::vector<TrialRecord> load_ledger(const std::string& path);

int worker_count_from_env();

}  // namespace mtlforge
