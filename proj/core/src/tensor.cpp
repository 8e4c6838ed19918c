#include "sve/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "sve/error.hpp"

namespace sve {
namespace {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

void check_positive_dims(const Shape& s) {
    for (std::size_t d : s) {
        if (d == 0) throw DimensionError("tensor shape has a zero dimension: " + shape_str(s));
    }
}

using NodePtr = std::shared_ptr<Tensor::Node>;

NodePtr make_node(Shape shape, std::vector<double> value, bool requires_grad) {
    auto n = std::make_shared<Tensor::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

NodePtr result_node(Shape shape, std::size_t numel, const std::vector<NodePtr>& parents) {
    auto n = std::make_shared<Tensor::Node>();
    n->shape = std::move(shape);
    n->value.assign(numel, 0.0);
    n->parents = parents;
    for (const auto& p : parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    return n;
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

// C (m x n) += op(A) (m x k) * op(B) (k x n); row-major.
void gemm_acc(std::vector<double>& c, const std::vector<double>& a, const std::vector<double>& b,
              std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = trans_a ? a[l * m + i] : a[i * k + l];
            if (av == 0.0) continue;
            const double* brow = trans_b ? &b[l] : &b[l * n];
            double* crow = &c[i * n];
            if (trans_b) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j * k];
            } else {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() > 2) {
        throw DimensionError(std::string(what) + ": expected a matrix or vector, got shape " +
                             shape_str(t.shape()));
    }
}

} // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

// --- Tensor basics -----------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    check_positive_dims(shape);
    const std::size_t n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    check_positive_dims(shape);
    const std::size_t n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    check_positive_dims(shape);
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("from_data: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape));
    }
    return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value) {
    return Tensor(make_node(Shape{1}, std::vector<double>{value}, false));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.node()->value[i * n + i] = 1.0;
    return t;
}

const Shape& Tensor::shape() const {
    if (!node_) throw Error("use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::size_t Tensor::rows() const {
    const Shape& s = shape();
    if (s.size() == 1) return s[0];
    if (s.size() == 2) return s[0];
    throw DimensionError("rows(): tensor is not a matrix: " + shape_str(s));
}

std::size_t Tensor::cols() const {
    const Shape& s = shape();
    if (s.size() == 1) return 1;
    if (s.size() == 2) return s[1];
    throw DimensionError("cols(): tensor is not a matrix: " + shape_str(s));
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::data() const {
    if (!node_) throw Error("use of undefined tensor");
    return node_->value;
}

std::vector<double>& Tensor::mutable_data() {
    if (!node_) throw Error("use of undefined tensor");
    return node_->value;
}

double Tensor::value() const {
    if (size() != 1) throw DimensionError("value(): tensor is not scalar: " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return node_->value[r * cols() + c];
}

const std::vector<double>& Tensor::grad() const {
    if (!node_ || node_->grad.size() != node_->value.size()) {
        throw Error("grad(): no gradient has been accumulated on this tensor");
    }
    return node_->grad;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::detached_copy(bool requires_grad) const {
    return from_data(shape(), data(), requires_grad);
}

void Tensor::backward() const {
    if (!node_) throw Error("backward(): undefined tensor");
    if (size() != 1) throw DimensionError("backward(): loss must be scalar, got " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS for a reverse-topological schedule.
    std::vector<Tensor::Node*> order;
    std::unordered_set<Tensor::Node*> visited;
    std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Tensor::Node* p = n->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop(**it);
    }
}

// --- Elementwise helpers ------------------------------------------------

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          double (*fwd)(double, double),
                          // dval/da and dval/db given operand values
                          double (*dda)(double, double), double (*ddb)(double, double)) {
    const bool sa = is_scalar(a), sb = is_scalar(b);
    if (!sa && !sb && a.shape() != b.shape()) {
        throw DimensionError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    const Tensor& big = sa ? b : a;
    auto out = result_node(big.shape(), big.size(), {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < out->value.size(); ++i) {
        out->value[i] = fwd(av[sa ? 0 : i], bv[sb ? 0 : i]);
    }
    if (out->requires_grad) {
        out->backprop = [sa, sb, dda, ddb](Tensor::Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) pa.ensure_grad();
            if (pb.requires_grad) pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double g = self.grad[i];
                const double x = pa.value[sa ? 0 : i];
                const double y = pb.value[sb ? 0 : i];
                if (pa.requires_grad) pa.grad[sa ? 0 : i] += g * dda(x, y);
                if (pb.requires_grad) pb.grad[sb ? 0 : i] += g * ddb(x, y);
            }
        };
    }
    return Tensor(out);
}

Tensor unary_elementwise(const Tensor& a, double (*fwd)(double), double (*deriv)(double)) {
    auto out = result_node(a.shape(), a.size(), {a.node()});
    const auto& av = a.data();
    for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = fwd(av[i]);
    if (out->requires_grad) {
        out->backprop = [deriv](Tensor::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                p.grad[i] += self.grad[i] * deriv(p.value[i]);
            }
        };
    }
    return Tensor(out);
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }

Tensor add_scalar(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }

Tensor relu(const Tensor& a) {
    return unary_elementwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_fwd(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * x * (1.0 + t);
}

double gelu_deriv(double x) {
    const double inner = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(inner);
    const double sech2 = 1.0 - t * t;
    const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * dinner;
}
} // namespace

Tensor gelu_tanh(const Tensor& a) { return unary_elementwise(a, gelu_fwd, gelu_deriv); }

Tensor clamp_min(const Tensor& a, double threshold) {
    auto out = result_node(a.shape(), a.size(), {a.node()});
    const auto& av = a.data();
    for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = std::max(av[i], threshold);
    if (out->requires_grad) {
        out->backprop = [threshold](Tensor::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                if (p.value[i] > threshold) p.grad[i] += self.grad[i];
            }
        };
    }
    return Tensor(out);
}

// --- Matrix ops ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
    }
    auto out = result_node({m, n}, m * n, {a.node(), b.node()});
    gemm_acc(out->value, a.data(), b.data(), m, k, n, false, false);
    if (out->requires_grad) {
        out->backprop = [m, k, n](Tensor::Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                gemm_acc(pa.grad, self.grad, pb.value, m, n, k, false, true); // G * B^T
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                gemm_acc(pb.grad, pa.value, self.grad, k, m, n, true, false); // A^T * G
            }
        };
    }
    return Tensor(out);
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    auto out = result_node({n, m}, m * n, {a.node()});
    const auto& av = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out->value[j * m + i] = av[i * n + j];
    if (out->requires_grad) {
        out->backprop = [m, n](Tensor::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
        };
    }
    return Tensor(out);
}

Tensor row_scale(const Tensor& v, const Tensor& m) {
    require_matrix(m, "row_scale");
    const std::size_t r = m.rows(), c = m.cols();
    if (v.size() != r) {
        throw DimensionError("row_scale: vector length " + std::to_string(v.size()) +
                             " does not match matrix rows " + std::to_string(r));
    }
    auto out = result_node(m.shape(), m.size(), {v.node(), m.node()});
    const auto& vv = v.data();
    const auto& mv = m.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out->value[i * c + j] = vv[i] * mv[i * c + j];
    if (out->requires_grad) {
        out->backprop = [r, c](Tensor::Node& self) {
            auto& pv = *self.parents[0];
            auto& pm = *self.parents[1];
            if (pv.requires_grad) {
                pv.ensure_grad();
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j] * pm.value[i * c + j];
                    pv.grad[i] += acc;
                }
            }
            if (pm.requires_grad) {
                pm.ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) pm.grad[i * c + j] += pv.value[i] * self.grad[i * c + j];
            }
        };
    }
    return Tensor(out);
}

Tensor add_col_broadcast(const Tensor& m, const Tensor& v) {
    require_matrix(m, "add_col_broadcast");
    const std::size_t r = m.rows(), c = m.cols();
    if (v.size() != r) {
        throw DimensionError("add_col_broadcast: vector length " + std::to_string(v.size()) +
                             " does not match matrix rows " + std::to_string(r));
    }
    auto out = result_node(m.shape(), m.size(), {m.node(), v.node()});
    const auto& mv = m.data();
    const auto& vv = v.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out->value[i * c + j] = mv[i * c + j] + vv[i];
    if (out->requires_grad) {
        out->backprop = [r, c](Tensor::Node& self) {
            auto& pm = *self.parents[0];
            auto& pv = *self.parents[1];
            if (pm.requires_grad) {
                pm.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) pm.grad[i] += self.grad[i];
            }
            if (pv.requires_grad) {
                pv.ensure_grad();
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j];
                    pv.grad[i] += acc;
                }
            }
        };
    }
    return Tensor(out);
}

Tensor softmax_rows(const Tensor& m) {
    require_matrix(m, "softmax_rows");
    const std::size_t r = m.rows(), c = m.cols();
    auto out = result_node(m.shape(), m.size(), {m.node()});
    const auto& mv = m.data();
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = &mv[i * c];
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double e = std::exp(row[j] - mx);
            out->value[i * c + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < c; ++j) out->value[i * c + j] /= sum;
    }
    if (out->requires_grad) {
        out->backprop = [r, c](Tensor::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                const double* s = &self.value[i * c];
                const double* g = &self.grad[i * c];
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += g[j] * s[j];
                for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += s[j] * (g[j] - dot);
            }
        };
    }
    return Tensor(out);
}

Tensor layer_norm_cols(const Tensor& m, const Tensor& gain, const Tensor& bias, double eps) {
    require_matrix(m, "layer_norm_cols");
    const std::size_t r = m.rows(), c = m.cols();
    if (gain.size() != r || bias.size() != r) {
        throw DimensionError("layer_norm_cols: gain/bias length must equal rows " + std::to_string(r));
    }
    auto out = result_node(m.shape(), m.size(), {m.node(), gain.node(), bias.node()});
    const auto& xv = m.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    // Cache normalized columns and inverse stddev for backward.
    auto xhat = std::make_shared<std::vector<double>>(m.size());
    auto inv_std = std::make_shared<std::vector<double>>(c);
    for (std::size_t j = 0; j < c; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < r; ++i) mean += xv[i * c + j];
        mean /= static_cast<double>(r);
        double var = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            const double d = xv[i * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(r);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[j] = is;
        for (std::size_t i = 0; i < r; ++i) {
            const double xh = (xv[i * c + j] - mean) * is;
            (*xhat)[i * c + j] = xh;
            out->value[i * c + j] = gv[i] * xh + bv[i];
        }
    }
    if (out->requires_grad) {
        out->backprop = [r, c, xhat, inv_std](Tensor::Node& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            if (pg.requires_grad) {
                pg.ensure_grad();
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j] * (*xhat)[i * c + j];
                    pg.grad[i] += acc;
                }
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j];
                    pb.grad[i] += acc;
                }
            }
            if (px.requires_grad) {
                px.ensure_grad();
                const double rn = static_cast<double>(r);
                for (std::size_t j = 0; j < c; ++j) {
                    double mean_w = 0.0, mean_wx = 0.0;
                    for (std::size_t i = 0; i < r; ++i) {
                        const double w = pg.value[i] * self.grad[i * c + j];
                        mean_w += w;
                        mean_wx += w * (*xhat)[i * c + j];
                    }
                    mean_w /= rn;
                    mean_wx /= rn;
                    const double is = (*inv_std)[j];
                    for (std::size_t i = 0; i < r; ++i) {
                        const double w = pg.value[i] * self.grad[i * c + j];
                        px.grad[i * c + j] += is * (w - mean_w - (*xhat)[i * c + j] * mean_wx);
                    }
                }
            }
        };
    }
    return Tensor(out);
}

Tensor row_slice(const Tensor& m, std::size_t start, std::size_t count) {
    require_matrix(m, "row_slice");
    const std::size_t r = m.rows(), c = m.cols();
    if (start + count > r) throw IndexError("row_slice: range exceeds rows");
    auto out = result_node({count, c}, count * c, {m.node()});
    const auto& mv = m.data();
    std::copy(mv.begin() + static_cast<std::ptrdiff_t>(start * c),
              mv.begin() + static_cast<std::ptrdiff_t>((start + count) * c), out->value.begin());
    if (out->requires_grad) {
        out->backprop = [start, c](Tensor::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[start * c + i] += self.grad[i];
        };
    }
    return Tensor(out);
}

Tensor col_slice(const Tensor& m, std::size_t start, std::size_t count) {
    require_matrix(m, "col_slice");
    const std::size_t r = m.rows(), c = m.cols();
    if (start + count > c) throw IndexError("col_slice: range exceeds columns");
    auto out = result_node({r, count}, r * count, {m.node()});
    const auto& mv = m.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) out->value[i * count + j] = mv[i * c + start + j];
    if (out->requires_grad) {
        out->backprop = [r, c, start, count](Tensor::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < count; ++j) p.grad[i * c + start + j] += self.grad[i * count + j];
        };
    }
    return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    const std::size_t c = parts[0].cols();
    std::size_t total = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
        total += p.rows();
        parents.push_back(p.node());
    }
    auto out = result_node({total, c}, total * c, parents);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out->value.begin() + static_cast<std::ptrdiff_t>(off));
        off += p.size();
    }
    if (out->requires_grad) {
        out->backprop = [](Tensor::Node& self) {
            std::size_t off = 0;
            for (auto& pp : self.parents) {
                if (pp->requires_grad) {
                    pp->ensure_grad();
                    for (std::size_t i = 0; i < pp->value.size(); ++i) pp->grad[i] += self.grad[off + i];
                }
                off += pp->value.size();
            }
        };
    }
    return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    const std::size_t r = parts[0].rows();
    std::size_t total = 0;
    std::vector<NodePtr> parents;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
        widths.push_back(p.cols());
        total += p.cols();
        parents.push_back(p.node());
    }
    auto out = result_node({r, total}, r * total, parents);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& pv = parts[k].data();
        const std::size_t w = widths[k];
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) out->value[i * total + off + j] = pv[i * w + j];
        off += w;
    }
    if (out->requires_grad) {
        out->backprop = [r, total, widths](Tensor::Node& self) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                auto& pp = *self.parents[k];
                const std::size_t w = widths[k];
                if (pp.requires_grad) {
                    pp.ensure_grad();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < w; ++j) pp.grad[i * w + j] += self.grad[i * total + off + j];
                }
                off += w;
            }
        };
    }
    return Tensor(out);
}

Tensor reorder(const Tensor& a, Shape out_shape, std::vector<std::size_t> src_index) {
    check_positive_dims(out_shape);
    if (shape_numel(out_shape) != src_index.size()) {
        throw DimensionError("reorder: index map does not fill output shape");
    }
    for (std::size_t s : src_index) {
        if (s >= a.size()) throw IndexError("reorder: source index out of range");
    }
    auto map = std::make_shared<std::vector<std::size_t>>(std::move(src_index));
    auto out = result_node(std::move(out_shape), map->size(), {a.node()});
    const auto& av = a.data();
    for (std::size_t i = 0; i < map->size(); ++i) out->value[i] = av[(*map)[i]];
    if (out->requires_grad) {
        out->backprop = [map](Tensor::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < map->size(); ++i) p.grad[(*map)[i]] += self.grad[i];
        };
    }
    return Tensor(out);
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
    if (rate == 0.0) return a;
    auto mask = std::make_shared<std::vector<double>>(a.size());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < a.size(); ++i) {
        (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    auto out = result_node(a.shape(), a.size(), {a.node()});
    const auto& av = a.data();
    for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * (*mask)[i];
    if (out->requires_grad) {
        out->backprop = [mask](Tensor::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * (*mask)[i];
        };
    }
    return Tensor(out);
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_matrix(logits, "softmax_cross_entropy");
    const std::size_t b = logits.rows(), c = logits.cols();
    if (labels.size() != b) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                             " labels for batch of " + std::to_string(b));
    }
    for (std::size_t i = 0; i < b; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw IndexError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                             " out of range [0," + std::to_string(c) + ") at row " + std::to_string(i));
        }
    }
    auto out = result_node({1}, 1, {logits.node()});
    auto probs = std::make_shared<std::vector<double>>(b * c);
    const auto& lv = logits.data();
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* row = &lv[i * c];
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double e = std::exp(row[j] - mx);
            (*probs)[i * c + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= sum;
        total += -(row[labels[i]] - mx - std::log(sum));
    }
    out->value[0] = total / static_cast<double>(b);
    if (!std::isfinite(out->value[0])) {
        throw NumericError("softmax_cross_entropy: non-finite loss");
    }
    if (out->requires_grad) {
        auto labels_copy = std::make_shared<std::vector<int>>(labels);
        out->backprop = [b, c, probs, labels_copy](Tensor::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            const double g = self.grad[0] / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    double d = (*probs)[i * c + j];
                    if (static_cast<std::size_t>((*labels_copy)[i]) == j) d -= 1.0;
                    p.grad[i * c + j] += g * d;
                }
            }
        };
    }
    return Tensor(out);
}

Tensor gaussian(Rng& rng, Shape shape, double mean, double std) {
    if (std < 0.0) throw ConfigError("gaussian: std must be >= 0");
    check_positive_dims(shape);
    const std::size_t n = shape_numel(shape);
    return Tensor::from_data(std::move(shape), rng.normal_vec(n, mean, std));
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double h, std::size_t n_probe, Rng& rng) {
    if (h <= 0.0) throw ConfigError("grad_check: h must be positive");
    for (auto p : params) p.zero_grad();
    Tensor loss = f();
    if (!loss.all_finite()) throw NumericError("grad_check: f produced a non-finite value");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    std::size_t total = 0;
    for (const auto& p : params) {
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));
        total += p.size();
    }
    if (total == 0) return 0.0;

    std::vector<std::size_t> picks;
    if (n_probe >= total) {
        picks.resize(total);
        std::iota(picks.begin(), picks.end(), std::size_t{0});
    } else {
        // Partial Fisher-Yates over the flattened coordinate space.
        std::vector<std::size_t> pool(total);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < n_probe; ++i) {
            const std::size_t j = i + rng.uniform_index(total - i);
            std::swap(pool[i], pool[j]);
            picks.push_back(pool[i]);
        }
    }

    double worst = 0.0;
    for (std::size_t flat : picks) {
        std::size_t pi = 0;
        std::size_t off = flat;
        while (off >= params[pi].size()) {
            off -= params[pi].size();
            ++pi;
        }
        Tensor param = params[pi];
        double& slot = param.mutable_data()[off];
        const double saved = slot;
        slot = saved + h;
        const double f_plus = f().value();
        slot = saved - h;
        const double f_minus = f().value();
        slot = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
            throw NumericError("grad_check: non-finite probe evaluation");
        }
        const double numeric = (f_plus - f_minus) / (2.0 * h);
        const double a = analytic[pi][off];
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
    return worst;
}

} // namespace sve
