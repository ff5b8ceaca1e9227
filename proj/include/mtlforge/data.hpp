#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtlforge/label_space.hpp"

namespace mtlforge {

struct Example {
    std::string id;
    std::string text;
    std::string label;
};

// Immutable after load; safe for concurrent reads.
struct Dataset {
    std::string name;
    LabelSpace label_space;
    std::vector<Example> examples;

    size_t size() const { return examples.size(); }
};

struct SplitSpec {
    double train_frac = 0.8;
    double val_frac = 0.1;
    uint64_t seed = 0;
};

struct DatasetSplits {
    Dataset train, val, test;
};

// JSONL records {"id":...,"text":...,"label":...}; id defaults to the line
// number. Labels are validated against the schema; errors carry line numbers.
Dataset load_dataset(const std::string& path, const LabelSpace& schema,
                     const std::string& name = "");

// Canonical serialization: one record per line, field order id,text,label.
// load -> save round-trips byte-identically.
void save_dataset(const Dataset& ds, const std::string& path);
std::string serialize_dataset(const Dataset& ds);

// Label schemas for exactly the five published corpora, keyed by CLI name:
// phm2017, hmc2019, self2020, ill2021, goemotions.
const std::map<std::string, LabelSpace>& builtin_schemas();

// Schemas of the synthetic generator's two tasks.
const std::map<std::string, LabelSpace>& synth_schemas();

// Looks up builtin and synthetic schemas by CLI name.
const LabelSpace& schema_by_name(const std::string& name);

// Seeded Fisher-Yates shuffle, then sizes floor(train_frac*n),
// floor(val_frac*n), remainder. Disjoint and complete.
DatasetSplits split(const Dataset& ds, const SplitSpec& spec);

// Pre-defined official splits (no reshuffle); empty files are allowed with a
// warning on stderr.
DatasetSplits goemotions_splits(const std::string& train_path, const std::string& val_path,
                                const std::string& test_path);

// Synthetic correlated two-task generator. Produces paired datasets over the
// same texts: a 4-class health-mention style task and a 7-class emotion task.
// With probability `correlation` the emotion is the one canonically paired
// with the health class, otherwise uniform over all 7.
struct SynthPair {
    Dataset primary;
    Dataset auxiliary;
};
SynthPair synth_generate(int n, int vocab_words, uint64_t seed, double correlation);

// Canonical health-class -> emotion pairing used by the generator.
const std::map<std::string, std::string>& synth_canonical_emotions();

}  // namespace mtlforge
