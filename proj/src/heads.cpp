#include "mtlforge/heads.hpp"

#include "mtlforge/error.hpp"
#include "mtlforge/rng.hpp"

namespace mtlforge {

std::vector<std::pair<std::string, TensorPtr>> TaskHead::named() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back(weight->name, weight);
    out.emplace_back(bias->name, bias);
    if (out[0].first > out[1].first) std::swap(out[0], out[1]);
    return out;
}

std::vector<TensorPtr> TaskHead::tensors() const {
    std::vector<TensorPtr> out;
    for (auto& [name, t] : named()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

TaskHead init_head(int d_model, const LabelSpace& space, uint64_t seed) {
    space.validate();
    if (d_model < 1) throw ConfigError("init_head: d_model must be positive");
    Rng rng = Rng::stream(seed, "init/head/" + space.task_name);

    TaskHead head;
    head.label_space = space;
    head.weight = Tensor::zeros({d_model, space.num_classes()}, true);
    for (auto& v : head.weight->data) v = 0.02 * rng.trunc_normal(2.0);
    head.weight->name = "head/" + space.task_name + "/weight";
    head.bias = Tensor::zeros({space.num_classes()}, true);
    head.bias->name = "head/" + space.task_name + "/bias";
    return head;
}

TensorPtr head_forward(Tape* tape, const TaskHead& head, const TensorPtr& pooled) {
    if (pooled->ndim() != 2 || pooled->shape[1] != head.weight->shape[0]) {
        throw DimensionError("head_forward: pooled " + shape_str(pooled->shape) +
                             " incompatible with head weight " + shape_str(head.weight->shape));
    }
    return add_rowvec(tape, matmul(tape, pooled, head.weight), head.bias);
}

TensorPtr combined_loss(Tape* tape, const TensorPtr& primary_loss,
                        const TensorPtr& auxiliary_loss, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) {
        throw ConfigError("combined_loss: lambda must lie in [0,1], got " + std::to_string(lambda));
    }
    if (primary_loss->size() != 1 || auxiliary_loss->size() != 1) {
        throw ContractError("combined_loss: losses must be scalars");
    }
    return add(tape, scale(tape, primary_loss, lambda),
               scale(tape, auxiliary_loss, 1.0 - lambda));
}

Prediction predict(const TaskHead& head, const TensorPtr& pooled) {
    auto logits = head_forward(nullptr, head, pooled);
    auto probs = softmax(nullptr, logits);
    const int b = probs->rows(), k = probs->cols();

    Prediction out;
    out.label_indices.reserve(static_cast<size_t>(b));
    out.probabilities.reserve(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        const double* row = probs->data.data() + static_cast<size_t>(i) * k;
        int best = 0;
        for (int j = 1; j < k; ++j) {
            if (row[j] > row[best]) best = j;  // strict: ties keep the lowest index
        }
        out.label_indices.push_back(best);
        out.probabilities.emplace_back(row, row + k);
    }
    return out;
}

}  // namespace mtlforge
