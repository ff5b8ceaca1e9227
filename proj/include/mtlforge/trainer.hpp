#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtlforge/checkpoint.hpp"
#include "mtlforge/data.hpp"
#include "mtlforge/encoder.hpp"
#include "mtlforge/heads.hpp"
#include "mtlforge/metrics.hpp"
#include "mtlforge/tokenizer.hpp"

namespace mtlforge {

enum class TrainMode { kStl, kMtl };
enum class ScheduleMode { kProportional, kPrimaryOnly, kJoint };

std::string to_string(TrainMode m);
std::string to_string(ScheduleMode s);
TrainMode train_mode_from_string(const std::string& s);
ScheduleMode schedule_from_string(const std::string& s);

struct TrainConfig {
    int batch_size = 32;            // one of {32, 64, 128}
    double learning_rate = 3e-4;    // [1e-6, 1e-3]
    double dropout_p = 0.1;         // [0, 1]; overrides EncoderConfig.dropout_p
    double lambda = 0.5;            // [0, 1]; weight on the primary loss
    int max_epochs = 50;
    int patience = 5;               // 0 stops after the first epoch
    uint64_t seed = 69556;
    TrainMode mode = TrainMode::kStl;
    ScheduleMode schedule = ScheduleMode::kProportional;
    double grad_clip = 1.0;         // global norm; <= 0 disables

    void validate() const;  // enforces the search-range invariants above
};

// Adam with bias correction; moments and step count are tracked per tensor so
// a head that sits out a step keeps its correction exact.
class AdamState {
public:
    AdamState(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(const std::vector<TensorPtr>& params, double lr);

private:
    struct Slot {
        std::vector<double> m, v;
        long long t = 0;
    };
    double beta1_, beta2_, eps_;
    std::unordered_map<const Tensor*, Slot> slots_;
};

// Scales gradients so their global norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(const std::vector<TensorPtr>& params, double max_norm);

struct EpochStats {
    int epoch = 0;
    std::map<std::string, double> train_loss;    // raw per-task CE, by role
    std::map<std::string, double> val_loss;
    std::map<std::string, double> val_macro_f1;
};

// Everything here is a pure function of (seed, config, data); wall time is
// deliberately kept out so serialized reports are byte-stable across runs.
struct RunReport {
    std::string mode;
    std::string schedule;
    uint64_t seed = 0;
    std::string rng_version;
    EncoderConfig encoder;
    TrainConfig config;
    std::string primary_dataset;
    std::string auxiliary_dataset;  // empty in STL mode
    std::map<std::string, std::vector<size_t>> split_sizes;  // role -> {train,val,test}
    std::map<std::string, std::string> decisions;
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    int epochs_run = 0;
    std::map<std::string, double> test_macro_f1;  // by role
    std::map<std::string, long long> steps;       // by role
    long long grad_clip_events = 0;
    uint64_t vocab_hash = 0;

    std::string cell() const;  // dataset@architecture id used for pairing
    std::string to_json_string() const;
    void save(const std::string& path) const;
};

// The slice of a report that system comparison needs.
struct ReportSummary {
    std::string mode;
    std::string cell;
    uint64_t seed = 0;
    double primary_test_f1 = 0.0;
};
ReportSummary load_report_summary(const std::string& path);

struct TrainOutput {
    Checkpoint checkpoint;
    RunReport report;
    double wall_time_s = 0.0;
};

struct EvalResult {
    ConfusionMatrix confusion;
    double macro_f1 = 0.0;
    double mean_loss = 0.0;
};

EvalResult evaluate_split(const EncoderParams& params, const TaskHead& head,
                          const std::vector<TokenSequence>& seqs,
                          const std::vector<int>& targets, int batch_size);

// Convenience: tokenize then evaluate.
EvalResult evaluate_dataset(const EncoderParams& params, const TaskHead& head,
                            const Vocabulary& vocab, const Dataset& ds, int batch_size);

// Single-task training: shared encoder plus one head, Adam, early stopping on
// validation macro-F1, best-epoch checkpointing.
TrainOutput train_stl(const DatasetSplits& task, const TrainConfig& cfg,
                      const EncoderConfig& enc_cfg, const Vocabulary& vocab);

// Multitask training over one shared encoder and two heads. Each step draws a
// batch from one task and applies the gradient of that task's lambda-weighted
// loss term; the scheduler interleaves tasks proportionally (auxiliary capped
// at 3x the primary step count per epoch). Schedule "joint" instead pairs one
// batch of each task per step under a single backward pass. Model selection
// and early stopping use primary-task validation macro-F1 only.
TrainOutput train_mtl(const DatasetSplits& primary, const DatasetSplits& auxiliary,
                      const TrainConfig& cfg, const EncoderConfig& enc_cfg,
                      const Vocabulary& vocab);

}  // namespace mtlforge
