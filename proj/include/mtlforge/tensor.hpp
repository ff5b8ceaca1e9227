#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mtlforge/rng.hpp"

namespace mtlforge {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

std::string shape_str(const std::vector<int>& shape);

// Dense 64-bit float array, row-major, with an optional gradient buffer.
// Values are immutable once created except for gradient accumulation;
// a tensor and the tape that produced it belong to one thread.
class Tensor {
public:
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until a backward pass reaches it
    std::string name;          // parameter tensors carry a diagnostic name

    static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<int> shape, double value, bool requires_grad = false);
    static TensorPtr from(std::vector<int> shape, std::vector<double> values,
                          bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);

    int size() const { return static_cast<int>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    // 2-D accessors; 1-D tensors read as a single row.
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;

    void ensure_grad();
    void zero_grad();
    bool all_finite() const;
};

// Define-by-run tape. Operations append themselves in execution order, which
// is already topological; backward() replays them once in reverse.
class Tape {
public:
    void record(TensorPtr out, std::function<void()> backward_fn);

    // Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor
    // with requires_grad. The tape is consumed afterwards.
    void backward(const TensorPtr& loss);

    bool consumed() const noexcept { return consumed_; }
    size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        TensorPtr out;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// Forward primitives. Each records a backward rule on `tape` when the tape is
// non-null and at least one input requires grad; with tape == nullptr they are
// pure functions, which is how evaluation and finite-difference probes run.

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
// [m x n] + row vector [n], broadcast over rows.
TensorPtr add_rowvec(Tape* tape, const TensorPtr& a, const TensorPtr& v);
TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape* tape, const TensorPtr& a, double c);
TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(Tape* tape, const TensorPtr& a);
// Softmax along the last axis (1-D vector or rows of a 2-D matrix),
// computed with max subtraction.
TensorPtr softmax(Tape* tape, const TensorPtr& a);
TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gain,
                     const TensorPtr& bias, double eps);
TensorPtr gelu(Tape* tape, const TensorPtr& x);
TensorPtr sum(Tape* tape, const TensorPtr& x);
// Copy of the 2-D block a[r0:r0+nr, c0:c0+nc].
TensorPtr block(Tape* tape, const TensorPtr& a, int r0, int nr, int c0, int nc);
TensorPtr concat_cols(Tape* tape, const std::vector<TensorPtr>& parts);
TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& parts);
// out[i, :] = table[idx[i], :]; backward scatter-adds into table rows.
TensorPtr gather_rows(Tape* tape, const TensorPtr& table, std::vector<int> idx);
// Mean over the batch of -log softmax(logits)[target], via log-sum-exp.
TensorPtr cross_entropy(Tape* tape, const TensorPtr& logits,
                        const std::vector<int>& targets);

struct GradCheckReport {
    double max_rel_error = 0.0;
    int coords_checked = 0;
};

// Compares tape gradients of f against central finite differences on a
// sampled subset of parameter coordinates (min(sample, total), sampled
// without replacement). f is called with a tape for the analytic pass and
// with nullptr for each probe, and must be deterministic.
GradCheckReport grad_check(const std::function<TensorPtr(Tape*)>& f,
                           const std::vector<TensorPtr>& params, double h,
                           int sample, Rng& rng);

}  // namespace mtlforge
