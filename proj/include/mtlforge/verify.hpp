#pragma once

#include <cstdint>
#include <string>

#include "mtlforge/tensor.hpp"

namespace mtlforge {

// End-to-end gradient check over a freshly initialized encoder with two task
// heads and the lambda-combined loss, against central finite differences.
//
// Presets:
//   micro - 1 layer, d_model=16  (unit-test speed)
//   tiny  - 2 layers, d_model=64 (the verification gate configuration)
//
// negative_control deliberately corrupts one backward rule to prove the
// harness detects broken gradients.
GradCheckReport run_encoder_gradcheck(const std::string& preset, int sample, double h,
                                      uint64_t seed, bool negative_control = false);

}  // namespace mtlforge
