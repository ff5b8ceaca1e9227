#pragma once

#include <cstdint>
#include <vector>

#include "mtlforge/label_space.hpp"
#include "mtlforge/tensor.hpp"

namespace mtlforge {

// Task-specific output module: a single dense layer over the pooled CLS
// representation.
struct TaskHead {
    TensorPtr weight;  // [d_model x K]
    TensorPtr bias;    // [K]
    LabelSpace label_space;

    std::vector<std::pair<std::string, TensorPtr>> named() const;
    std::vector<TensorPtr> tensors() const;
};

// Weight ~ Normal(0, 0.02^2) truncated at 2 sigma, bias 0; drawn from the
// "init/head/<task>" stream so heads never perturb encoder initialization.
TaskHead init_head(int d_model, const LabelSpace& space, uint64_t seed);

// logits = pooled . W + b
TensorPtr head_forward(Tape* tape, const TaskHead& head, const TensorPtr& pooled);

// L = lambda * primary_loss + (1 - lambda) * auxiliary_loss.
TensorPtr combined_loss(Tape* tape, const TensorPtr& primary_loss,
                        const TensorPtr& auxiliary_loss, double lambda);

struct Prediction {
    std::vector<int> label_indices;
    std::vector<std::vector<double>> probabilities;  // per row, length K
};

// Argmax of softmax per row; ties break toward the lowest class index.
Prediction predict(const TaskHead& head, const TensorPtr& pooled);

}  // namespace mtlforge
