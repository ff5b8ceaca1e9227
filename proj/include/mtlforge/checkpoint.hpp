#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtlforge/encoder.hpp"
#include "mtlforge/heads.hpp"

namespace mtlforge {

inline constexpr int kCheckpointVersion = 1;

// Single-file checkpoint: a key=value text manifest (keys sorted), one
// "tensor <name> <ndim> <dims...>" line per parameter sorted by name, then a
// raw blob of little-endian 64-bit floats in the same order. Round-trips are
// bit-exact.
struct Checkpoint {
    EncoderParams encoder;
    std::vector<TaskHead> heads;
    uint64_t vocab_hash = 0;
    uint64_t seed = 0;

    const TaskHead& head_for(const std::string& task_name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// expected_vocab_hash, when given, must match the manifest or the load is
// refused. Version mismatches and blob size mismatches are refused too.
Checkpoint load_checkpoint(const std::string& path,
                           std::optional<uint64_t> expected_vocab_hash = std::nullopt);

// Deterministic double formatting used in manifests and reports ("%.17g").
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace mtlforge
