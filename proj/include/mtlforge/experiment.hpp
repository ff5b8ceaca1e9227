#pragma once

#include <optional>
#include <string>

#include "mtlforge/data.hpp"
#include "mtlforge/encoder.hpp"
#include "mtlforge/tokenizer.hpp"
#include "mtlforge/trainer.hpp"

namespace mtlforge {

// Experiment definition: flat key=value file with [data] [encoder] [train]
// [split] [output] sections; CLI flags override file values. Unknown
// sections or keys are rejected.
struct ExperimentConfig {
    // [data]
    std::string primary_path;
    std::string primary_schema;
    std::string auxiliary_path;
    std::string auxiliary_schema;
    std::string auxiliary_train_path, auxiliary_val_path, auxiliary_test_path;
    std::string vocab_path;  // empty: build from the primary train split
    int vocab_max_size = 4000;
    int vocab_min_freq = 2;

    // [encoder] (vocab_size is derived from the vocabulary at run time)
    EncoderConfig encoder;

    // [train]
    TrainConfig train;

    // [split] (seed defaults to the training seed, one fresh split per run)
    double train_frac = 0.8;
    double val_frac = 0.1;
    std::optional<uint64_t> split_seed;

    // [output]
    std::string out_dir = "out";

    static ExperimentConfig load(const std::string& path);
    void validate() const;
};

struct PreparedRun {
    Vocabulary vocab;
    bool vocab_auto_built = false;
    DatasetSplits primary;
    std::optional<DatasetSplits> auxiliary;
};

// Loads datasets, splits them per the config seed, and loads or builds the
// vocabulary (auto mode builds from the primary train split only).
PreparedRun prepare_run(const ExperimentConfig& cfg);

}  // namespace mtlforge
