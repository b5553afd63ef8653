#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "bic/errors.hpp"
#include "bic/rng.hpp"

namespace bic {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor with a reverse-mode tape. Nodes own their inputs
// through shared_ptr parents; backward closures live on the node and run in
// reverse topological order. Values are immutable once an op has consumed
// them, except gradient accumulation during backward().
template <typename S>
struct TensorT : std::enable_shared_from_this<TensorT<S>> {
    Shape shape;
    std::vector<S> values;
    std::vector<S> grad;  // empty until backward reaches this node
    bool requires_grad = false;

    std::vector<std::shared_ptr<TensorT<S>>> parents;
    std::function<void()> backward_fn;

    TensorT(Shape s, std::vector<S> v, bool rg) : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
        if (static_cast<std::int64_t>(values.size()) != numel(shape))
            throw shape_error("tensor data length " + std::to_string(values.size()) +
                              " does not match shape " + shape_str(shape));
    }

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return shape.at(0); }
    int cols() const { return shape.at(1); }

    S& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols() + j]; }
    S at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols() + j]; }

    S item() const {
        if (size() != 1) throw shape_error("item() on tensor of shape " + shape_str(shape));
        return values[0];
    }

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), S(0));
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
    }
};

template <typename S>
using TensorPtrT = std::shared_ptr<TensorT<S>>;

template <typename S>
TensorPtrT<S> tensor_of(Shape shape, std::vector<S> values, bool requires_grad = false) {
    return std::make_shared<TensorT<S>>(std::move(shape), std::move(values), requires_grad);
}

template <typename S>
TensorPtrT<S> zeros(const Shape& shape, bool requires_grad = false) {
    return tensor_of<S>(shape, std::vector<S>(static_cast<std::size_t>(numel(shape)), S(0)), requires_grad);
}

template <typename S>
TensorPtrT<S> full(const Shape& shape, S v, bool requires_grad = false) {
    return tensor_of<S>(shape, std::vector<S>(static_cast<std::size_t>(numel(shape)), v), requires_grad);
}

template <typename S>
TensorPtrT<S> scalar(S v) {
    return tensor_of<S>({1}, {v});
}

namespace detail {

template <typename S>
TensorPtrT<S> make_result(Shape shape, std::vector<S> values,
                          std::vector<TensorPtrT<S>> parents) {
    auto out = tensor_of<S>(std::move(shape), std::move(values));
    for (const auto& p : parents)
        if (p->requires_grad) out->requires_grad = true;
    if (out->requires_grad) out->parents = std::move(parents);
    return out;
}

// Attach the closure only when gradients can flow.
template <typename S, typename F>
void set_backward(const TensorPtrT<S>& out, F&& fn) {
    if (out->requires_grad) out->backward_fn = std::forward<F>(fn);
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

// ---- elementwise ----

template <typename S>
TensorPtrT<S> add(const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
    detail::check_same_shape(a->shape, b->shape, "add");
    std::vector<S> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] + b->values[i];
    auto out = detail::make_result<S>(a->shape, std::move(v), {a, b});
    detail::set_backward(out, [out = out.get(), a, b] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i];
        }
    });
    return out;
}

template <typename S>
TensorPtrT<S> sub(const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
    detail::check_same_shape(a->shape, b->shape, "sub");
    std::vector<S> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] - b->values[i];
    auto out = detail::make_result<S>(a->shape, std::move(v), {a, b});
    detail::set_backward(out, [out = out.get(), a, b] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] -= out->grad[i];
        }
    });
    return out;
}

template <typename S>
TensorPtrT<S> mul(const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
    detail::check_same_shape(a->shape, b->shape, "mul");
    std::vector<S> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * b->values[i];
    auto out = detail::make_result<S>(a->shape, std::move(v), {a, b});
    detail::set_backward(out, [out = out.get(), a, b] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * b->values[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i] * a->values[i];
        }
    });
    return out;
}

template <typename S>
TensorPtrT<S> scale(const TensorPtrT<S>& a, S c) {
    std::vector<S> v(a->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->values[i] * c;
    auto out = detail::make_result<S>(a->shape, std::move(v), {a});
    detail::set_backward(out, [out = out.get(), a, c] {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * c;
    });
    return out;
}

// ---- matrix products ----

// C = A(n,k) * B(k,m)
template <typename S>
TensorPtrT<S> matmul(const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->cols() != b->rows())
        throw shape_error("matmul: incompatible shapes " + shape_str(a->shape) + " x " + shape_str(b->shape));
    const int n = a->rows(), k = a->cols(), m = b->cols();
    std::vector<S> v(static_cast<std::size_t>(n) * m, S(0));
    for (int i = 0; i < n; ++i) {
        const S* ar = a->values.data() + static_cast<std::size_t>(i) * k;
        S* vr = v.data() + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const S aip = ar[p];
            const S* br = b->values.data() + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) vr[j] += aip * br[j];
        }
    }
    auto out = detail::make_result<S>({n, m}, std::move(v), {a, b});
    detail::set_backward(out, [out = out.get(), a, b, n, k, m] {
        if (a->requires_grad) {
            a->ensure_grad();
            // dA = G * B^T
            for (int i = 0; i < n; ++i) {
                const S* gr = out->grad.data() + static_cast<std::size_t>(i) * m;
                S* dar = a->grad.data() + static_cast<std::size_t>(i) * k;
                for (int p = 0; p < k; ++p) {
                    const S* br = b->values.data() + static_cast<std::size_t>(p) * m;
                    S acc = 0;
                    for (int j = 0; j < m; ++j) acc += gr[j] * br[j];
                    dar[p] += acc;
                }
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            // dB = A^T * G
            for (int p = 0; p < k; ++p) {
                S* dbr = b->grad.data() + static_cast<std::size_t>(p) * m;
                for (int i = 0; i < n; ++i) {
                    const S aip = a->values[static_cast<std::size_t>(i) * k + p];
                    const S* gr = out->grad.data() + static_cast<std::size_t>(i) * m;
                    for (int j = 0; j < m; ++j) dbr[j] += aip * gr[j];
                }
            }
        }
    });
    return out;
}

// C = A(n,k) * B(m,k)^T; keeps attention scores contiguous without a transpose op
template <typename S>
TensorPtrT<S> matmul_nt(const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->cols() != b->cols())
        throw shape_error("matmul_nt: incompatible shapes " + shape_str(a->shape) + " x " +
                          shape_str(b->shape) + "^T");
    const int n = a->rows(), k = a->cols(), m = b->rows();
    std::vector<S> v(static_cast<std::size_t>(n) * m);
    for (int i = 0; i < n; ++i) {
        const S* ar = a->values.data() + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < m; ++j) {
            const S* br = b->values.data() + static_cast<std::size_t>(j) * k;
            S acc = 0;
            for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
            v[static_cast<std::size_t>(i) * m + j] = acc;
        }
    }
    auto out = detail::make_result<S>({n, m}, std::move(v), {a, b});
    detail::set_backward(out, [out = out.get(), a, b, n, k, m] {
        if (a->requires_grad) {
            a->ensure_grad();
            // dA = G * B
            for (int i = 0; i < n; ++i) {
                const S* gr = out->grad.data() + static_cast<std::size_t>(i) * m;
                S* dar = a->grad.data() + static_cast<std::size_t>(i) * k;
                for (int j = 0; j < m; ++j) {
                    const S gij = gr[j];
                    const S* br = b->values.data() + static_cast<std::size_t>(j) * k;
                    for (int p = 0; p < k; ++p) dar[p] += gij * br[p];
                }
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            // dB = G^T * A
            for (int j = 0; j < m; ++j) {
                S* dbr = b->grad.data() + static_cast<std::size_t>(j) * k;
                for (int i = 0; i < n; ++i) {
                    const S gij = out->grad[static_cast<std::size_t>(i) * m + j];
                    const S* ar = a->values.data() + static_cast<std::size_t>(i) * k;
                    for (int p = 0; p < k; ++p) dbr[p] += gij * ar[p];
                }
            }
        }
    });
    return out;
}

// y = x(n) * W(n,m), the vector-through-linear form
template <typename S>
TensorPtrT<S> vecmat(const TensorPtrT<S>& x, const TensorPtrT<S>& w) {
    if (x->rank() != 1 || w->rank() != 2 || x->shape[0] != w->rows())
        throw shape_error("vecmat: incompatible shapes " + shape_str(x->shape) + " x " + shape_str(w->shape));
    const int n = w->rows(), m = w->cols();
    std::vector<S> v(static_cast<std::size_t>(m), S(0));
    for (int p = 0; p < n; ++p) {
        const S xp = x->values[p];
        const S* wr = w->values.data() + static_cast<std::size_t>(p) * m;
        for (int j = 0; j < m; ++j) v[j] += xp * wr[j];
    }
    auto out = detail::make_result<S>({m}, std::move(v), {x, w});
    detail::set_backward(out, [out = out.get(), x, w, n, m] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (int p = 0; p < n; ++p) {
                const S* wr = w->values.data() + static_cast<std::size_t>(p) * m;
                S acc = 0;
                for (int j = 0; j < m; ++j) acc += out->grad[j] * wr[j];
                x->grad[p] += acc;
            }
        }
        if (w->requires_grad) {
            w->ensure_grad();
            for (int p = 0; p < n; ++p) {
                const S xp = x->values[p];
                S* dwr = w->grad.data() + static_cast<std::size_t>(p) * m;
                for (int j = 0; j < m; ++j) dwr[j] += xp * out->grad[j];
            }
        }
    });
    return out;
}

template <typename S>
TensorPtrT<S> dot(const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
    if (a->rank() != 1 || b->rank() != 1)
        throw shape_error("dot: expects rank-1 operands");
    detail::check_same_shape(a->shape, b->shape, "dot");
    S acc = 0;
    for (std::size_t i = 0; i < a->values.size(); ++i) acc += a->values[i] * b->values[i];
    auto out = detail::make_result<S>({1}, {acc}, {a, b});
    detail::set_backward(out, [out = out.get(), a, b] {
        const S g = out->grad[0];
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g * b->values[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += g * a->values[i];
        }
    });
    return out;
}

// ---- structure ----

template <typename S>
TensorPtrT<S> reshape(const TensorPtrT<S>& x, Shape shape) {
    if (numel(shape) != x->size())
        throw shape_error("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(shape));
    auto out = detail::make_result<S>(std::move(shape), x->values, {x});
    detail::set_backward(out, [out = out.get(), x] {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i];
    });
    return out;
}

template <typename S>
TensorPtrT<S> concat_vecs(const std::vector<TensorPtrT<S>>& parts) {
    if (parts.empty()) throw shape_error("concat_vecs: empty input");
    std::vector<S> v;
    for (const auto& p : parts) {
        if (p->rank() != 1) throw shape_error("concat_vecs: expects rank-1 parts");
        v.insert(v.end(), p->values.begin(), p->values.end());
    }
    const int total = static_cast<int>(v.size());
    auto out = detail::make_result<S>({total}, std::move(v), parts);
    detail::set_backward(out, [out = out.get(), parts] {
        std::size_t off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += out->grad[off + i];
            }
            off += p->values.size();
        }
    });
    return out;
}

// [x; M] -> (n+1, m) with x as row 0
template <typename S>
TensorPtrT<S> prepend_row(const TensorPtrT<S>& x, const TensorPtrT<S>& m) {
    if (x->rank() != 1 || m->rank() != 2 || x->shape[0] != m->cols())
        throw shape_error("prepend_row: incompatible " + shape_str(x->shape) + " and " + shape_str(m->shape));
    const int rows = m->rows() + 1, cols = m->cols();
    std::vector<S> v;
    v.reserve(static_cast<std::size_t>(rows) * cols);
    v.insert(v.end(), x->values.begin(), x->values.end());
    v.insert(v.end(), m->values.begin(), m->values.end());
    auto out = detail::make_result<S>({rows, cols}, std::move(v), {x, m});
    detail::set_backward(out, [out = out.get(), x, m, cols] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (int j = 0; j < cols; ++j) x->grad[j] += out->grad[j];
        }
        if (m->requires_grad) {
            m->ensure_grad();
            for (std::size_t i = 0; i < m->grad.size(); ++i) m->grad[i] += out->grad[cols + i];
        }
    });
    return out;
}

template <typename S>
TensorPtrT<S> row(const TensorPtrT<S>& m, int i) {
    if (m->rank() != 2 || i < 0 || i >= m->rows())
        throw shape_error("row: index " + std::to_string(i) + " out of " + shape_str(m->shape));
    const int cols = m->cols();
    std::vector<S> v(m->values.begin() + static_cast<std::size_t>(i) * cols,
                     m->values.begin() + static_cast<std::size_t>(i + 1) * cols);
    auto out = detail::make_result<S>({cols}, std::move(v), {m});
    detail::set_backward(out, [out = out.get(), m, i, cols] {
        m->ensure_grad();
        for (int j = 0; j < cols; ++j) m->grad[static_cast<std::size_t>(i) * cols + j] += out->grad[j];
    });
    return out;
}

template <typename S>
TensorPtrT<S> slice_rows(const TensorPtrT<S>& m, int start, int len) {
    if (m->rank() != 2 || start < 0 || len <= 0 || start + len > m->rows())
        throw shape_error("slice_rows: [" + std::to_string(start) + "," + std::to_string(start + len) +
                          ") out of " + shape_str(m->shape));
    const int c = m->cols();
    std::vector<S> v(m->values.begin() + static_cast<std::size_t>(start) * c,
                     m->values.begin() + static_cast<std::size_t>(start + len) * c);
    auto out = detail::make_result<S>({len, c}, std::move(v), {m});
    detail::set_backward(out, [out = out.get(), m, start, c] {
        m->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i)
            m->grad[static_cast<std::size_t>(start) * c + i] += out->grad[i];
    });
    return out;
}

template <typename S>
TensorPtrT<S> slice_vec(const TensorPtrT<S>& x, int start, int len) {
    if (x->rank() != 1 || start < 0 || len <= 0 || start + len > x->shape[0])
        throw shape_error("slice_vec: [" + std::to_string(start) + "," + std::to_string(start + len) +
                          ") out of " + shape_str(x->shape));
    std::vector<S> v(x->values.begin() + start, x->values.begin() + start + len);
    auto out = detail::make_result<S>({len}, std::move(v), {x});
    detail::set_backward(out, [out = out.get(), x, start] {
        x->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) x->grad[start + i] += out->grad[i];
    });
    return out;
}

template <typename S>
TensorPtrT<S> element(const TensorPtrT<S>& x, int i) {
    if (i < 0 || i >= x->size()) throw shape_error("element: index out of range");
    auto out = detail::make_result<S>({1}, {x->values[i]}, {x});
    detail::set_backward(out, [out = out.get(), x, i] {
        x->ensure_grad();
        x->grad[i] += out->grad[0];
    });
    return out;
}

// x * s with a differentiable scalar (shape {1}) multiplier
template <typename S>
TensorPtrT<S> scale_by(const TensorPtrT<S>& x, const TensorPtrT<S>& s) {
    if (s->size() != 1) throw shape_error("scale_by: multiplier must be scalar, got " + shape_str(s->shape));
    const S sv = s->values[0];
    std::vector<S> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x->values[i] * sv;
    auto out = detail::make_result<S>(x->shape, std::move(v), {x, s});
    detail::set_backward(out, [out = out.get(), x, s, sv] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i] * sv;
        }
        if (s->requires_grad) {
            s->ensure_grad();
            S acc = 0;
            for (std::size_t i = 0; i < x->values.size(); ++i) acc += out->grad[i] * x->values[i];
            s->grad[0] += acc;
        }
    });
    return out;
}

template <typename S>
TensorPtrT<S> slice_cols(const TensorPtrT<S>& m, int start, int len) {
    if (m->rank() != 2 || start < 0 || len <= 0 || start + len > m->cols())
        throw shape_error("slice_cols: [" + std::to_string(start) + "," + std::to_string(start + len) +
                          ") out of " + shape_str(m->shape));
    const int n = m->rows(), c = m->cols();
    std::vector<S> v(static_cast<std::size_t>(n) * len);
    for (int i = 0; i < n; ++i)
        std::copy_n(m->values.data() + static_cast<std::size_t>(i) * c + start, len,
                    v.data() + static_cast<std::size_t>(i) * len);
    auto out = detail::make_result<S>({n, len}, std::move(v), {m});
    detail::set_backward(out, [out = out.get(), m, start, len, n, c] {
        m->ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < len; ++j)
                m->grad[static_cast<std::size_t>(i) * c + start + j] +=
                    out->grad[static_cast<std::size_t>(i) * len + j];
    });
    return out;
}

template <typename S>
TensorPtrT<S> concat_cols(const std::vector<TensorPtrT<S>>& parts) {
    if (parts.empty()) throw shape_error("concat_cols: empty input");
    const int n = parts[0]->rows();
    int total = 0;
    for (const auto& p : parts) {
        if (p->rank() != 2 || p->rows() != n) throw shape_error("concat_cols: row mismatch");
        total += p->cols();
    }
    std::vector<S> v(static_cast<std::size_t>(n) * total);
    int off = 0;
    for (const auto& p : parts) {
        const int c = p->cols();
        for (int i = 0; i < n; ++i)
            std::copy_n(p->values.data() + static_cast<std::size_t>(i) * c, c,
                        v.data() + static_cast<std::size_t>(i) * total + off);
        off += c;
    }
    auto out = detail::make_result<S>({n, total}, std::move(v), parts);
    detail::set_backward(out, [out = out.get(), parts, n, total] {
        int off = 0;
        for (const auto& p : parts) {
            const int c = p->cols();
            if (p->requires_grad) {
                p->ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < c; ++j)
                        p->grad[static_cast<std::size_t>(i) * c + j] +=
                            out->grad[static_cast<std::size_t>(i) * total + off + j];
            }
            off += c;
        }
    });
    return out;
}

// X(n,m) + b(m) on every row
template <typename S>
TensorPtrT<S> add_bias_rows(const TensorPtrT<S>& x, const TensorPtrT<S>& b) {
    if (x->rank() != 2 || b->rank() != 1 || b->shape[0] != x->cols())
        throw shape_error("add_bias_rows: incompatible " + shape_str(x->shape) + " and " + shape_str(b->shape));
    const int n = x->rows(), m = x->cols();
    std::vector<S> v(x->values.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            v[static_cast<std::size_t>(i) * m + j] = x->values[static_cast<std::size_t>(i) * m + j] + b->values[j];
    auto out = detail::make_result<S>(x->shape, std::move(v), {x, b});
    detail::set_backward(out, [out = out.get(), x, b, n, m] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) b->grad[j] += out->grad[static_cast<std::size_t>(i) * m + j];
        }
    });
    return out;
}

// ---- nonlinearities ----

template <typename S>
TensorPtrT<S> relu(const TensorPtrT<S>& x) {
    std::vector<S> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x->values[i] > S(0) ? x->values[i] : S(0);
    auto out = detail::make_result<S>(x->shape, std::move(v), {x});
    detail::set_backward(out, [out = out.get(), x] {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i)
            if (x->values[i] > S(0)) x->grad[i] += out->grad[i];
    });
    return out;
}

template <typename S>
TensorPtrT<S> leaky_relu(const TensorPtrT<S>& x, S slope) {
    std::vector<S> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x->values[i] > S(0) ? x->values[i] : slope * x->values[i];
    auto out = detail::make_result<S>(x->shape, std::move(v), {x});
    detail::set_backward(out, [out = out.get(), x, slope] {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i)
            x->grad[i] += out->grad[i] * (x->values[i] > S(0) ? S(1) : slope);
    });
    return out;
}

template <typename S>
TensorPtrT<S> sigmoid(const TensorPtrT<S>& x) {
    std::vector<S> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = S(1) / (S(1) + std::exp(-x->values[i]));
    auto out = detail::make_result<S>(x->shape, std::move(v), {x});
    detail::set_backward(out, [out = out.get(), x] {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i)
            x->grad[i] += out->grad[i] * out->values[i] * (S(1) - out->values[i]);
    });
    return out;
}

// ---- softmax ----

namespace detail {

// softmax over one stride-1 slice; masked entries get exactly 0
template <typename S>
void softmax_slice(const S* in, S* out, int n, const std::uint8_t* mask) {
    S maxv = -std::numeric_limits<S>::infinity();
    for (int i = 0; i < n; ++i)
        if (!mask || mask[i]) maxv = std::max(maxv, in[i]);
    S sum = 0;
    for (int i = 0; i < n; ++i) {
        if (!mask || mask[i]) {
            out[i] = std::exp(in[i] - maxv);
            sum += out[i];
        } else {
            out[i] = S(0);
        }
    }
    for (int i = 0; i < n; ++i) out[i] /= sum;
}

// din += y .* (g - sum(g .* y)) over one slice; zero outputs contribute nothing
template <typename S>
void softmax_slice_backward(const S* y, const S* g, S* din, int n) {
    S dsum = 0;
    for (int i = 0; i < n; ++i) dsum += g[i] * y[i];
    for (int i = 0; i < n; ++i) din[i] += y[i] * (g[i] - dsum);
}

}  // namespace detail

// Subtract-max stabilized softmax along `axis` of a rank-1 or rank-2 tensor.
template <typename S>
TensorPtrT<S> softmax(const TensorPtrT<S>& x, int axis = -1) {
    if (x->rank() == 1) {
        std::vector<S> v(x->values.size());
        detail::softmax_slice<S>(x->values.data(), v.data(), static_cast<int>(v.size()), nullptr);
        auto out = detail::make_result<S>(x->shape, std::move(v), {x});
        detail::set_backward(out, [out = out.get(), x] {
            x->ensure_grad();
            detail::softmax_slice_backward<S>(out->values.data(), out->grad.data(), x->grad.data(),
                                              static_cast<int>(x->grad.size()));
        });
        return out;
    }
    if (x->rank() != 2) throw shape_error("softmax: expects rank-1 or rank-2");
    if (axis < 0) axis = 1;
    if (axis != 0 && axis != 1) throw shape_error("softmax: invalid axis " + std::to_string(axis));
    const int n = x->rows(), m = x->cols();
    std::vector<S> v(x->values.size());
    if (axis == 1) {
        for (int i = 0; i < n; ++i)
            detail::softmax_slice<S>(x->values.data() + static_cast<std::size_t>(i) * m,
                                     v.data() + static_cast<std::size_t>(i) * m, m, nullptr);
    } else {
        std::vector<S> col(n), colo(n);
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < n; ++i) col[i] = x->at(i, j);
            detail::softmax_slice<S>(col.data(), colo.data(), n, nullptr);
            for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * m + j] = colo[i];
        }
    }
    auto out = detail::make_result<S>(x->shape, std::move(v), {x});
    detail::set_backward(out, [out = out.get(), x, axis, n, m] {
        x->ensure_grad();
        if (axis == 1) {
            for (int i = 0; i < n; ++i)
                detail::softmax_slice_backward<S>(out->values.data() + static_cast<std::size_t>(i) * m,
                                                  out->grad.data() + static_cast<std::size_t>(i) * m,
                                                  x->grad.data() + static_cast<std::size_t>(i) * m, m);
        } else {
            std::vector<S> y(n), g(n), d(n);
            for (int j = 0; j < m; ++j) {
                for (int i = 0; i < n; ++i) {
                    y[i] = out->values[static_cast<std::size_t>(i) * m + j];
                    g[i] = out->grad[static_cast<std::size_t>(i) * m + j];
                    d[i] = S(0);
                }
                detail::softmax_slice_backward<S>(y.data(), g.data(), d.data(), n);
                for (int i = 0; i < n; ++i) x->grad[static_cast<std::size_t>(i) * m + j] += d[i];
            }
        }
    });
    return out;
}

// Row softmax where masked columns receive exactly zero weight. At least one
// column must be unmasked.
template <typename S>
TensorPtrT<S> masked_softmax_rows(const TensorPtrT<S>& x, const std::vector<std::uint8_t>& col_mask) {
    if (x->rank() != 2 || static_cast<int>(col_mask.size()) != x->cols())
        throw shape_error("masked_softmax_rows: mask length does not match " + shape_str(x->shape));
    if (std::find(col_mask.begin(), col_mask.end(), std::uint8_t(1)) == col_mask.end())
        throw shape_error("masked_softmax_rows: all columns masked");
    const int n = x->rows(), m = x->cols();
    std::vector<S> v(x->values.size());
    for (int i = 0; i < n; ++i)
        detail::softmax_slice<S>(x->values.data() + static_cast<std::size_t>(i) * m,
                                 v.data() + static_cast<std::size_t>(i) * m, m, col_mask.data());
    auto out = detail::make_result<S>(x->shape, std::move(v), {x});
    detail::set_backward(out, [out = out.get(), x, n, m] {
        x->ensure_grad();
        for (int i = 0; i < n; ++i)
            detail::softmax_slice_backward<S>(out->values.data() + static_cast<std::size_t>(i) * m,
                                              out->grad.data() + static_cast<std::size_t>(i) * m,
                                              x->grad.data() + static_cast<std::size_t>(i) * m, m);
    });
    return out;
}

// ---- normalization, dropout ----

template <typename S>
TensorPtrT<S> layer_norm_rows(const TensorPtrT<S>& x, const TensorPtrT<S>& gamma,
                              const TensorPtrT<S>& beta, S eps = S(1e-5)) {
    if (x->rank() != 2 || gamma->rank() != 1 || beta->rank() != 1 || gamma->shape[0] != x->cols() ||
        beta->shape[0] != x->cols())
        throw shape_error("layer_norm_rows: incompatible shapes");
    const int n = x->rows(), m = x->cols();
    std::vector<S> v(x->values.size());
    auto nhat = std::make_shared<std::vector<S>>(x->values.size());
    auto rstd = std::make_shared<std::vector<S>>(n);
    for (int i = 0; i < n; ++i) {
        const S* xr = x->values.data() + static_cast<std::size_t>(i) * m;
        S mean = 0;
        for (int j = 0; j < m; ++j) mean += xr[j];
        mean /= S(m);
        S var = 0;
        for (int j = 0; j < m; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= S(m);
        const S r = S(1) / std::sqrt(var + eps);
        (*rstd)[i] = r;
        for (int j = 0; j < m; ++j) {
            const S nh = (xr[j] - mean) * r;
            (*nhat)[static_cast<std::size_t>(i) * m + j] = nh;
            v[static_cast<std::size_t>(i) * m + j] = nh * gamma->values[j] + beta->values[j];
        }
    }
    auto out = detail::make_result<S>(x->shape, std::move(v), {x, gamma, beta});
    detail::set_backward(out, [out = out.get(), x, gamma, beta, nhat, rstd, n, m] {
        for (int i = 0; i < n; ++i) {
            const S* g = out->grad.data() + static_cast<std::size_t>(i) * m;
            const S* nh = nhat->data() + static_cast<std::size_t>(i) * m;
            if (beta->requires_grad) {
                beta->ensure_grad();
                for (int j = 0; j < m; ++j) beta->grad[j] += g[j];
            }
            if (gamma->requires_grad) {
                gamma->ensure_grad();
                for (int j = 0; j < m; ++j) gamma->grad[j] += g[j] * nh[j];
            }
            if (x->requires_grad) {
                x->ensure_grad();
                S dn_mean = 0, dnnh_mean = 0;
                for (int j = 0; j < m; ++j) {
                    const S dn = g[j] * gamma->values[j];
                    dn_mean += dn;
                    dnnh_mean += dn * nh[j];
                }
                dn_mean /= S(m);
                dnnh_mean /= S(m);
                S* dx = x->grad.data() + static_cast<std::size_t>(i) * m;
                for (int j = 0; j < m; ++j) {
                    const S dn = g[j] * gamma->values[j];
                    dx[j] += (dn - dn_mean - nh[j] * dnnh_mean) * (*rstd)[i];
                }
            }
        }
    });
    return out;
}

// Inverted dropout: kept entries are scaled by 1/(1-p) at train time so
// inference needs no rescaling. Identity when !training or p == 0.
template <typename S>
TensorPtrT<S> dropout(const TensorPtrT<S>& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw config_error("dropout: p must be in [0,1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    const S inv_keep = S(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<std::uint8_t>>(x->values.size());
    std::vector<S> v(x->values.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const bool keep = rng.uniform() >= p;
        (*mask)[i] = keep;
        v[i] = keep ? x->values[i] * inv_keep : S(0);
    }
    auto out = detail::make_result<S>(x->shape, std::move(v), {x});
    detail::set_backward(out, [out = out.get(), x, mask, inv_keep] {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i)
            if ((*mask)[i]) x->grad[i] += out->grad[i] * inv_keep;
    });
    return out;
}

// ---- pooling ----

// Max over a k x k grid of contiguous bands; band b covers
// floor(b*n/k) .. floor((b+1)*n/k)-1. Any n >= k is legal.
template <typename S>
TensorPtrT<S> maxpool_fixed(const TensorPtrT<S>& m, int k) {
    if (m->rank() != 2 || m->rows() != m->cols())
        throw shape_error("maxpool_fixed: expects a square matrix, got " + shape_str(m->shape));
    const int n = m->rows();
    if (k <= 0 || k > n)
        throw shape_error("maxpool_fixed: pool size " + std::to_string(k) + " exceeds matrix size " +
                          std::to_string(n));
    auto band = [n, k](int b) { return static_cast<int>(static_cast<std::int64_t>(b) * n / k); };
    std::vector<S> v(static_cast<std::size_t>(k) * k);
    auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(k) * k);
    for (int bi = 0; bi < k; ++bi) {
        for (int bj = 0; bj < k; ++bj) {
            S best = -std::numeric_limits<S>::infinity();
            int best_idx = -1;
            for (int i = band(bi); i < band(bi + 1); ++i) {
                for (int j = band(bj); j < band(bj + 1); ++j) {
                    const S val = m->at(i, j);
                    if (val > best) {
                        best = val;
                        best_idx = i * n + j;
                    }
                }
            }
            v[static_cast<std::size_t>(bi) * k + bj] = best;
            (*argmax)[static_cast<std::size_t>(bi) * k + bj] = best_idx;
        }
    }
    auto out = detail::make_result<S>({k, k}, std::move(v), {m});
    detail::set_backward(out, [out = out.get(), m, argmax] {
        m->ensure_grad();
        for (std::size_t c = 0; c < argmax->size(); ++c) m->grad[(*argmax)[c]] += out->grad[c];
    });
    return out;
}

// ---- reductions ----

template <typename S>
TensorPtrT<S> sum_all(const TensorPtrT<S>& x) {
    S acc = std::accumulate(x->values.begin(), x->values.end(), S(0));
    auto out = detail::make_result<S>({1}, {acc}, {x});
    detail::set_backward(out, [out = out.get(), x] {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[0];
    });
    return out;
}

template <typename S>
TensorPtrT<S> mean_all(const TensorPtrT<S>& x) {
    const S inv = S(1) / S(x->size());
    S acc = std::accumulate(x->values.begin(), x->values.end(), S(0)) * inv;
    auto out = detail::make_result<S>({1}, {acc}, {x});
    detail::set_backward(out, [out = out.get(), x, inv] {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[0] * inv;
    });
    return out;
}

template <typename S>
TensorPtrT<S> sum_squares(const TensorPtrT<S>& x) {
    S acc = 0;
    for (S v : x->values) acc += v * v;
    auto out = detail::make_result<S>({1}, {acc}, {x});
    detail::set_backward(out, [out = out.get(), x] {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += S(2) * x->values[i] * out->grad[0];
    });
    return out;
}

// ---- classification loss ----

// -log softmax(logits)[target], computed via logsumexp for stability
template <typename S>
TensorPtrT<S> cross_entropy_with_logits(const TensorPtrT<S>& logits, int target) {
    if (logits->rank() != 1) throw shape_error("cross_entropy_with_logits: expects rank-1 logits");
    const int c = logits->shape[0];
    if (target < 0 || target >= c)
        throw shape_error("cross_entropy_with_logits: target " + std::to_string(target) + " out of range");
    S maxv = *std::max_element(logits->values.begin(), logits->values.end());
    S sum = 0;
    for (S v : logits->values) sum += std::exp(v - maxv);
    const S lse = maxv + std::log(sum);
    auto out = detail::make_result<S>({1}, {lse - logits->values[target]}, {logits});
    detail::set_backward(out, [out = out.get(), logits, target, maxv, sum, c] {
        logits->ensure_grad();
        const S g = out->grad[0];
        for (int i = 0; i < c; ++i) {
            const S p = std::exp(logits->values[i] - maxv) / sum;
            logits->grad[i] += g * (p - (i == target ? S(1) : S(0)));
        }
    });
    return out;
}

// ---- backward driver ----

// Reverse-mode sweep from a scalar root. Every tensor reachable through
// parents that requires a gradient ends up with a populated grad buffer.
template <typename S>
void backward(const TensorPtrT<S>& root) {
    if (root->size() != 1) throw shape_error("backward: root must be scalar, got " + shape_str(root->shape));
    if (!root->requires_grad) return;

    // iterative post-order DFS
    std::vector<TensorT<S>*> order;
    std::unordered_set<TensorT<S>*> visited;
    std::vector<std::pair<TensorT<S>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorT<S>* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
        (*it)->ensure_grad();  // reachable leaves with no incoming gradient get zeros
    }
}

template <typename S>
bool all_finite(const TensorPtrT<S>& t) {
    for (S v : t->values)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace bic
