#include "mtlforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mtlforge/error.hpp"

namespace mtlforge {

namespace {

int numel(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

void require_2d(const TensorPtr& t, const char* what) {
    if (t->ndim() > 2) {
        throw DimensionError(std::string(what) + ": expected a 1-D or 2-D tensor, got " +
                             shape_str(t->shape));
    }
}

// C[m x n] += A[m x k] * B[k x n]
void mm_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] += A[m x k] * B^T, B is [n x k]
void mm_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[m x n] += A^T * B, A is [k x m], B is [k x n]
void mm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<size_t>(p) * m;
        const double* brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

TensorPtr make_out(std::vector<int> shape, bool requires_grad) {
    auto t = Tensor::zeros(std::move(shape));
    t->requires_grad = requires_grad;
    return t;
}

bool any_grad(const TensorPtr& a) { return a->requires_grad; }
bool any_grad(const TensorPtr& a, const TensorPtr& b) {
    return a->requires_grad || b->requires_grad;
}

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

TensorPtr Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    int n = numel(shape);
    t->shape = std::move(shape);
    t->data.assign(static_cast<size_t>(n), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

TensorPtr Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    int n = numel(shape);
    if (static_cast<size_t>(n) != values.size()) {
        throw DimensionError("Tensor::from: shape " + shape_str(shape) + " needs " +
                             std::to_string(n) + " values, got " + std::to_string(values.size()));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

int Tensor::rows() const { return ndim() == 2 ? shape[0] : 1; }

int Tensor::cols() const {
    if (ndim() == 2) return shape[1];
    if (ndim() == 1) return shape[0];
    throw DimensionError("rows/cols on tensor of shape " + shape_str(shape));
}

double& Tensor::at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
double Tensor::at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tape::record(TensorPtr out, std::function<void()> backward_fn) {
    nodes_.push_back({std::move(out), std::move(backward_fn)});
}

void Tape::backward(const TensorPtr& loss) {
    if (consumed_) throw StateError("Tape::backward: tape already consumed");
    if (loss->size() != 1) {
        throw ContractError("Tape::backward: loss must be scalar, got shape " +
                            shape_str(loss->shape));
    }
    consumed_ = true;
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (!it->out->grad.empty()) it->backward_fn();
    }
    nodes_.clear();
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        throw DimensionError("add: shape mismatch " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }
    auto out = make_out(a->shape, any_grad(a, b));
    for (int i = 0; i < a->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (tape && out->requires_grad) {
        tape->record(out, [a, b, out] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i];
            }
        });
    }
    return out;
}

TensorPtr add_rowvec(Tape* tape, const TensorPtr& a, const TensorPtr& v) {
    require_2d(a, "add_rowvec");
    const int m = a->rows(), n = a->cols();
    if (v->ndim() != 1 || v->shape[0] != n) {
        throw DimensionError("add_rowvec: vector shape " + shape_str(v->shape) +
                             " does not match matrix " + shape_str(a->shape));
    }
    auto out = make_out(a->shape, any_grad(a, v));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->data[static_cast<size_t>(i) * n + j] =
                a->data[static_cast<size_t>(i) * n + j] + v->data[j];
    if (tape && out->requires_grad) {
        tape->record(out, [a, v, out, m, n] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
            }
            if (v->requires_grad) {
                v->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        v->grad[j] += out->grad[static_cast<size_t>(i) * n + j];
            }
        });
    }
    return out;
}

TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        throw DimensionError("mul: shape mismatch " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }
    auto out = make_out(a->shape, any_grad(a, b));
    for (int i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (tape && out->requires_grad) {
        tape->record(out, [a, b, out] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
            }
        });
    }
    return out;
}

TensorPtr scale(Tape* tape, const TensorPtr& a, double c) {
    auto out = make_out(a->shape, any_grad(a));
    for (int i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * c;
    if (tape && out->requires_grad) {
        tape->record(out, [a, out, c] {
            a->ensure_grad();
            for (int i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * c;
        });
    }
    return out;
}

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->ndim() != 2 || b->ndim() != 2 || a->shape[1] != b->shape[0]) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = make_out({m, n}, any_grad(a, b));
    mm_nn_acc(a->data.data(), b->data.data(), out->data.data(), m, k, n);
    if (tape && out->requires_grad) {
        tape->record(out, [a, b, out, m, k, n] {
            if (a->requires_grad) {
                a->ensure_grad();
                mm_nt_acc(out->grad.data(), b->data.data(), a->grad.data(), m, n, k);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                mm_tn_acc(a->data.data(), out->grad.data(), b->grad.data(), k, m, n);
            }
        });
    }
    return out;
}

TensorPtr transpose(Tape* tape, const TensorPtr& a) {
    require_2d(a, "transpose");
    const int m = a->rows(), n = a->cols();
    auto out = make_out({n, m}, any_grad(a));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->data[static_cast<size_t>(j) * m + i] = a->data[static_cast<size_t>(i) * n + j];
    if (tape && out->requires_grad) {
        tape->record(out, [a, out, m, n] {
            a->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    a->grad[static_cast<size_t>(i) * n + j] +=
                        out->grad[static_cast<size_t>(j) * m + i];
        });
    }
    return out;
}

TensorPtr softmax(Tape* tape, const TensorPtr& a) {
    require_2d(a, "softmax");
    const int m = a->rows(), n = a->cols();
    auto out = make_out(a->shape, any_grad(a));
    for (int i = 0; i < m; ++i) {
        const double* row = a->data.data() + static_cast<size_t>(i) * n;
        double* orow = out->data.data() + static_cast<size_t>(i) * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= z;
    }
    if (tape && out->requires_grad) {
        tape->record(out, [a, out, m, n] {
            a->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double* y = out->data.data() + static_cast<size_t>(i) * n;
                const double* gy = out->grad.data() + static_cast<size_t>(i) * n;
                double* gx = a->grad.data() + static_cast<size_t>(i) * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
                for (int j = 0; j < n; ++j) gx[j] += (gy[j] - dot) * y[j];
            }
        });
    }
    return out;
}

TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gain,
                     const TensorPtr& bias, double eps) {
    require_2d(x, "layer_norm");
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    const int m = x->rows(), d = x->cols();
    if (gain->ndim() != 1 || gain->shape[0] != d || bias->ndim() != 1 || bias->shape[0] != d) {
        throw DimensionError("layer_norm: gain/bias must be [d], d=" + std::to_string(d));
    }
    auto out = make_out(x->shape, x->requires_grad || gain->requires_grad || bias->requires_grad);
    auto xhat = std::make_shared<std::vector<double>>(x->data.size());
    auto inv_std = std::make_shared<std::vector<double>>(m);
    for (int i = 0; i < m; ++i) {
        const double* row = x->data.data() + static_cast<size_t>(i) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += row[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = row[j] - mean;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        double* xh = xhat->data() + static_cast<size_t>(i) * d;
        double* orow = out->data.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            xh[j] = (row[j] - mean) * is;
            orow[j] = gain->data[j] * xh[j] + bias->data[j];
        }
    }
    if (tape && out->requires_grad) {
        tape->record(out, [x, gain, bias, out, xhat, inv_std, m, d] {
            for (int i = 0; i < m; ++i) {
                const double* gy = out->grad.data() + static_cast<size_t>(i) * d;
                const double* xh = xhat->data() + static_cast<size_t>(i) * d;
                if (gain->requires_grad) {
                    gain->ensure_grad();
                    for (int j = 0; j < d; ++j) gain->grad[j] += gy[j] * xh[j];
                }
                if (bias->requires_grad) {
                    bias->ensure_grad();
                    for (int j = 0; j < d; ++j) bias->grad[j] += gy[j];
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    double* gx = x->grad.data() + static_cast<size_t>(i) * d;
                    const double is = (*inv_std)[i];
                    // d/dx of (x - mean)/sqrt(var + eps), folded per row.
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double gh = gy[j] * gain->data[j];
                        sum_g += gh;
                        sum_gx += gh * xh[j];
                    }
                    for (int j = 0; j < d; ++j) {
                        const double gh = gy[j] * gain->data[j];
                        gx[j] += is * (gh - sum_g / d - xh[j] * sum_gx / d);
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr gelu(Tape* tape, const TensorPtr& x) {
    auto out = make_out(x->shape, any_grad(x));
    for (int i = 0; i < x->size(); ++i) {
        const double v = x->data[i];
        const double u = kGeluK * (v + kGeluC * v * v * v);
        out->data[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    if (tape && out->requires_grad) {
        tape->record(out, [x, out] {
            x->ensure_grad();
            for (int i = 0; i < x->size(); ++i) {
                const double v = x->data[i];
                const double u = kGeluK * (v + kGeluC * v * v * v);
                const double t = std::tanh(u);
                const double du = kGeluK * (1.0 + 3.0 * kGeluC * v * v);
                const double dgelu = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                x->grad[i] += out->grad[i] * dgelu;
            }
        });
    }
    return out;
}

TensorPtr sum(Tape* tape, const TensorPtr& x) {
    auto out = make_out({1}, any_grad(x));
    double acc = 0.0;
    for (double v : x->data) acc += v;
    out->data[0] = acc;
    if (tape && out->requires_grad) {
        tape->record(out, [x, out] {
            x->ensure_grad();
            const double g = out->grad[0];
            for (int i = 0; i < x->size(); ++i) x->grad[i] += g;
        });
    }
    return out;
}

TensorPtr block(Tape* tape, const TensorPtr& a, int r0, int nr, int c0, int nc) {
    require_2d(a, "block");
    const int m = a->rows(), n = a->cols();
    if (r0 < 0 || nr <= 0 || r0 + nr > m || c0 < 0 || nc <= 0 || c0 + nc > n) {
        throw DimensionError("block: region out of range for " + shape_str(a->shape));
    }
    auto out = make_out({nr, nc}, any_grad(a));
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nc; ++j)
            out->data[static_cast<size_t>(i) * nc + j] =
                a->data[static_cast<size_t>(r0 + i) * n + (c0 + j)];
    if (tape && out->requires_grad) {
        tape->record(out, [a, out, r0, c0, nr, nc, n] {
            a->ensure_grad();
            for (int i = 0; i < nr; ++i)
                for (int j = 0; j < nc; ++j)
                    a->grad[static_cast<size_t>(r0 + i) * n + (c0 + j)] +=
                        out->grad[static_cast<size_t>(i) * nc + j];
        });
    }
    return out;
}

TensorPtr concat_cols(Tape* tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    const int m = parts[0]->rows();
    int total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (p->rows() != m) {
            throw DimensionError("concat_cols: row mismatch " + shape_str(p->shape));
        }
        total += p->cols();
        rg = rg || p->requires_grad;
    }
    auto out = make_out({m, total}, rg);
    int off = 0;
    for (const auto& p : parts) {
        const int n = p->cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                out->data[static_cast<size_t>(i) * total + off + j] =
                    p->data[static_cast<size_t>(i) * n + j];
        off += n;
    }
    if (tape && rg) {
        tape->record(out, [parts, out, m, total] {
            int off = 0;
            for (const auto& p : parts) {
                const int n = p->cols();
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j)
                            p->grad[static_cast<size_t>(i) * n + j] +=
                                out->grad[static_cast<size_t>(i) * total + off + j];
                }
                off += n;
            }
        });
    }
    return out;
}

TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no parts");
    const int n = parts[0]->cols();
    int total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        if (p->cols() != n) {
            throw DimensionError("concat_rows: column mismatch " + shape_str(p->shape));
        }
        total += p->rows();
        rg = rg || p->requires_grad;
    }
    auto out = make_out({total, n}, rg);
    int off = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(),
                  out->data.begin() + static_cast<size_t>(off) * n);
        off += p->rows();
    }
    if (tape && rg) {
        tape->record(out, [parts, out, n] {
            int off = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    const size_t base = static_cast<size_t>(off) * n;
                    for (int i = 0; i < p->size(); ++i) p->grad[i] += out->grad[base + i];
                }
                off += p->rows();
            }
        });
    }
    return out;
}

TensorPtr gather_rows(Tape* tape, const TensorPtr& table, std::vector<int> idx) {
    require_2d(table, "gather_rows");
    const int rows = table->rows(), d = table->cols();
    for (int i : idx) {
        if (i < 0 || i >= rows) {
            throw DimensionError("gather_rows: index " + std::to_string(i) +
                                 " out of range for " + shape_str(table->shape));
        }
    }
    const int m = static_cast<int>(idx.size());
    auto out = make_out({m, d}, any_grad(table));
    for (int i = 0; i < m; ++i) {
        const double* src = table->data.data() + static_cast<size_t>(idx[i]) * d;
        std::copy(src, src + d, out->data.data() + static_cast<size_t>(i) * d);
    }
    if (tape && out->requires_grad) {
        auto indices = std::make_shared<std::vector<int>>(std::move(idx));
        tape->record(out, [table, out, indices, d] {
            table->ensure_grad();
            for (size_t i = 0; i < indices->size(); ++i) {
                double* dst = table->grad.data() + static_cast<size_t>((*indices)[i]) * d;
                const double* g = out->grad.data() + i * d;
                for (int j = 0; j < d; ++j) dst[j] += g[j];
            }
        });
    }
    return out;
}

TensorPtr cross_entropy(Tape* tape, const TensorPtr& logits, const std::vector<int>& targets) {
    require_2d(logits, "cross_entropy");
    const int b = logits->rows(), k = logits->cols();
    if (static_cast<int>(targets.size()) != b) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                             " targets for batch of " + std::to_string(b));
    }
    for (size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] < 0 || targets[i] >= k) {
            throw ValueError("cross_entropy: target " + std::to_string(targets[i]) + " at row " +
                             std::to_string(i) + " outside [0," + std::to_string(k) + ")");
        }
    }
    auto out = make_out({1}, any_grad(logits));
    auto probs = std::make_shared<std::vector<double>>(logits->data.size());
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        const double* row = logits->data.data() + static_cast<size_t>(i) * k;
        double* prow = probs->data() + static_cast<size_t>(i) * k;
        double mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < k; ++j) {
            prow[j] = std::exp(row[j] - mx);
            z += prow[j];
        }
        for (int j = 0; j < k; ++j) prow[j] /= z;
        total += mx + std::log(z) - row[targets[i]];
    }
    out->data[0] = total / b;
    if (tape && out->requires_grad) {
        auto tgt = std::make_shared<std::vector<int>>(targets);
        tape->record(out, [logits, out, probs, tgt, b, k] {
            logits->ensure_grad();
            const double g = out->grad[0] / b;
            for (int i = 0; i < b; ++i) {
                const double* prow = probs->data() + static_cast<size_t>(i) * k;
                double* grow = logits->grad.data() + static_cast<size_t>(i) * k;
                for (int j = 0; j < k; ++j) grow[j] += g * prow[j];
                grow[(*tgt)[i]] -= g;
            }
        });
    }
    return out;
}

GradCheckReport grad_check(const std::function<TensorPtr(Tape*)>& f,
                           const std::vector<TensorPtr>& params, double h, int sample,
                           Rng& rng) {
    if (h < 1e-7 || h > 1e-3) {
        throw ConfigError("grad_check: step h must lie in [1e-7, 1e-3]");
    }
    for (const auto& p : params) {
        if (!p->all_finite()) throw NumericError("grad_check: non-finite parameter " + p->name);
    }

    Tape tape;
    for (const auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    auto loss = f(&tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }

    long long total = 0;
    for (const auto& p : params) total += p->size();
    long long want = std::min<long long>(std::max(sample, 1), total);

    // Partial Fisher-Yates over flat coordinate space: distinct probes.
    std::vector<long long> coords(static_cast<size_t>(total));
    std::iota(coords.begin(), coords.end(), 0);
    for (long long i = 0; i < want; ++i) {
        long long j = i + static_cast<long long>(rng.bounded(static_cast<uint64_t>(total - i)));
        std::swap(coords[i], coords[j]);
    }

    auto eval_scalar = [&]() {
        auto v = f(nullptr);
        if (!std::isfinite(v->data[0])) {
            throw NumericError("grad_check: non-finite function value at probe point");
        }
        return v->data[0];
    };

    GradCheckReport report;
    report.coords_checked = static_cast<int>(want);
    for (long long ci = 0; ci < want; ++ci) {
        long long flat = coords[ci];
        size_t pi = 0;
        while (flat >= params[pi]->size()) {
            flat -= params[pi]->size();
            ++pi;
        }
        double& slot = params[pi]->data[static_cast<size_t>(flat)];
        const double orig = slot;
        slot = orig + h;
        const double fp = eval_scalar();
        slot = orig - h;
        const double fm = eval_scalar();
        slot = orig;
        const double g_fd = (fp - fm) / (2.0 * h);
        const double g_an = analytic[pi][static_cast<size_t>(flat)];
        const double rel = std::fabs(g_an - g_fd) /
                           std::max({1.0, std::fabs(g_an), std::fabs(g_fd)});
        report.max_rel_error = std::max(report.max_rel_error, rel);
    }
    return report;
}

}  // namespace mtlforge
