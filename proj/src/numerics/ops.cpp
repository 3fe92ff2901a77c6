#include "p2lhap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace p2lhap {

namespace {

template <typename T>
void same_tape(Var<T> a, Var<T> b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

template <typename T>
void require_same_shape(Var<T> a, Var<T> b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* c = C + i * n;
    const T* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[p];
      const T* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* a = A + i * k;
    T* c = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* b = B + j * k;
      T s{0};
      for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
      c[j] += s;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* a = A + p * m;
    const T* b = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[i];
      T* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// View of a tensor as [outer, axis_len, inner] around `axis`.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <typename T>
void add_into(BasicTensor<T>* dst, const BasicTensor<T>& src) {
  if (!dst) return;
  T* d = dst->raw();
  const T* s = src.raw();
  for (std::size_t i = 0, n = src.size(); i < n; ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape<T>& t, const BasicTensor<T>& g) {
    add_into(t.grad_slot(a), g);
    add_into(t.grad_slot(b), g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  same_tape(a, b, "sub");
  require_same_shape(a, b, "sub");
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape<T>& t, const BasicTensor<T>& g) {
    add_into(t.grad_slot(a), g);
    if (auto* gb = t.grad_slot(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> add_broadcast(Var<T> a, Var<T> b) {
  same_tape(a, b, "add_broadcast");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.begin(), sb.end(), sa.end() - sb.size())) {
    throw DimensionError("add_broadcast: " + shape_string(sb) + " is not a suffix of " + shape_string(sa));
  }
  const std::size_t block = b.size();
  BasicTensor<T> out = a.value();
  const T* bv = b.value().raw();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % block];
  return a.tape().record("add_broadcast", std::move(out), {a, b},
                         [a, b, block](Tape<T>& t, const BasicTensor<T>& g) {
                           add_into(t.grad_slot(a), g);
                           if (auto* gb = t.grad_slot(b)) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % block] += g[i];
                           }
                         });
}

template <typename T>
Var<T> scale(Var<T> a, double s) {
  const T f = static_cast<T>(s);
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v *= f;
  return a.tape().record("scale", std::move(out), {a}, [a, f](Tape<T>& t, const BasicTensor<T>& g) {
    if (auto* ga = t.grad_slot(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += f * g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  same_tape(a, b, "mul");
  require_same_shape(a, b, "mul");
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape<T>& t, const BasicTensor<T>& g) {
    if (auto* ga = t.grad_slot(a)) {
      const auto& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (auto* gb = t.grad_slot(b)) {
      const auto& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> mul_constant(Var<T> a, const BasicTensor<T>& c) {
  if (a.shape() != c.shape()) {
    throw DimensionError("mul_constant: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(c.shape()));
  }
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return a.tape().record("mul_constant", std::move(out), {a}, [a, c](Tape<T>& t, const BasicTensor<T>& g) {
    if (auto* ga = t.grad_slot(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * c[i];
    }
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_tape(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sb.size() != 2 || sa.back() != sb[0]) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(sa) + " and " +
                         shape_string(sb));
  }
  const std::size_t k = sb[0], n = sb[1], m = a.size() / k;
  Shape so = sa;
  so.back() = n;
  BasicTensor<T> out(so);
  gemm_nn(a.value().raw(), b.value().raw(), out.raw(), m, k, n);
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& t, const BasicTensor<T>& g) {
    if (auto* ga = t.grad_slot(a)) gemm_nt(g.raw(), b.value().raw(), ga->raw(), m, n, k);
    if (auto* gb = t.grad_slot(b)) gemm_tn(a.value().raw(), g.raw(), gb->raw(), k, m, n);
  });
}

template <typename T>
Var<T> matmul_bt(Var<T> a, Var<T> b) {
  same_tape(a, b, "matmul_bt");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sb.size() != 2 || sa.back() != sb[1]) {
    throw DimensionError("matmul_bt: inner dimensions disagree for " + shape_string(sa) + " and " +
                         shape_string(sb) + "^T");
  }
  const std::size_t k = sb[1], n = sb[0], m = a.size() / k;
  Shape so = sa;
  so.back() = n;
  BasicTensor<T> out(so);
  gemm_nt(a.value().raw(), b.value().raw(), out.raw(), m, k, n);
  return a.tape().record("matmul_bt", std::move(out), {a, b},
                         [a, b, m, k, n](Tape<T>& t, const BasicTensor<T>& g) {
                           if (auto* ga = t.grad_slot(a)) gemm_nn(g.raw(), b.value().raw(), ga->raw(), m, n, k);
                           if (auto* gb = t.grad_slot(b)) gemm_tn(g.raw(), a.value().raw(), gb->raw(), n, m, k);
                         });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b) {
  same_tape(a, b, "bmm");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1]) {
    throw DimensionError("bmm: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
  }
  const std::size_t batch = sa[0], m = sa[1], k = sa[2], n = sb[2];
  BasicTensor<T> out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nn(a.value().raw() + i * m * k, b.value().raw() + i * k * n, out.raw() + i * m * n, m, k, n);
  }
  return a.tape().record("bmm", std::move(out), {a, b},
                         [a, b, batch, m, k, n](Tape<T>& t, const BasicTensor<T>& g) {
                           auto* ga = t.grad_slot(a);
                           auto* gb = t.grad_slot(b);
                           for (std::size_t i = 0; i < batch; ++i) {
                             const T* gi = g.raw() + i * m * n;
                             if (ga) gemm_nt(gi, b.value().raw() + i * k * n, ga->raw() + i * m * k, m, n, k);
                             if (gb) gemm_tn(a.value().raw() + i * m * k, gi, gb->raw() + i * k * n, k, m, n);
                           }
                         });
}

template <typename T>
Var<T> bmm_bt(Var<T> a, Var<T> b) {
  same_tape(a, b, "bmm_bt");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[2]) {
    throw DimensionError("bmm_bt: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb) +
                         "^T");
  }
  const std::size_t batch = sa[0], m = sa[1], k = sa[2], n = sb[1];
  BasicTensor<T> out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nt(a.value().raw() + i * m * k, b.value().raw() + i * n * k, out.raw() + i * m * n, m, k, n);
  }
  return a.tape().record("bmm_bt", std::move(out), {a, b},
                         [a, b, batch, m, k, n](Tape<T>& t, const BasicTensor<T>& g) {
                           auto* ga = t.grad_slot(a);
                           auto* gb = t.grad_slot(b);
                           for (std::size_t i = 0; i < batch; ++i) {
                             const T* gi = g.raw() + i * m * n;
                             if (ga) gemm_nn(gi, b.value().raw() + i * n * k, ga->raw() + i * m * k, m, n, k);
                             if (gb) gemm_tn(gi, a.value().raw() + i * m * k, gb->raw() + i * n * k, n, m, k);
                           }
                         });
}

namespace {

// Offsets into the source tensor for every element of the permuted output,
// in output row-major order.
std::vector<std::size_t> permutation_offsets(const Shape& in_shape, const std::vector<std::size_t>& axes,
                                             Shape& out_shape) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  out_shape.resize(rank);
  std::vector<std::size_t> strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    strides[i] = in_strides[axes[i]];
  }
  const std::size_t total = shape_size(in_shape);
  std::vector<std::size_t> offsets(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t e = 0; e < total; ++e) {
    offsets[e] = off;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      off += strides[d];
      if (idx[d] < out_shape[d]) break;
      off -= strides[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return offsets;
}

}  // namespace

template <typename T>
Var<T> permute(Var<T> a, const std::vector<std::size_t>& axes) {
  const Shape& sa = a.shape();
  std::vector<bool> seen(sa.size(), false);
  if (axes.size() != sa.size()) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for shape " + shape_string(sa));
  }
  for (std::size_t ax : axes) {
    if (ax >= sa.size() || seen[ax]) throw DimensionError("permute: invalid axis order for " + shape_string(sa));
    seen[ax] = true;
  }
  Shape so;
  auto offsets = permutation_offsets(sa, axes, so);
  BasicTensor<T> out(so);
  const T* src = a.value().raw();
  for (std::size_t e = 0; e < offsets.size(); ++e) out[e] = src[offsets[e]];
  return a.tape().record("permute", std::move(out), {a},
                         [a, offsets = std::move(offsets)](Tape<T>& t, const BasicTensor<T>& g) {
                           if (auto* ga = t.grad_slot(a)) {
                             T* d = ga->raw();
                             for (std::size_t e = 0; e < offsets.size(); ++e) d[offsets[e]] += g[e];
                           }
                         });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  if (a.shape().size() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_string(a.shape()));
  return permute(a, {1, 0});
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  BasicTensor<T> out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a},
                         [a](Tape<T>& t, const BasicTensor<T>& g) { add_into(t.grad_slot(a), g); });
}

template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisView v = axis_view(a.shape(), axis, "slice");
  if (start + length > v.len) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds axis " + std::to_string(axis) + " of " + shape_string(a.shape()));
  }
  Shape so = a.shape();
  so[axis] = length;
  BasicTensor<T> out(so);
  const T* src = a.value().raw();
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(src + (o * v.len + start) * v.inner, length * v.inner, out.raw() + o * length * v.inner);
  }
  return a.tape().record("slice", std::move(out), {a}, [a, v, start, length](Tape<T>& t, const BasicTensor<T>& g) {
    if (auto* ga = t.grad_slot(a)) {
      for (std::size_t o = 0; o < v.outer; ++o) {
        T* d = ga->raw() + (o * v.len + start) * v.inner;
        const T* s = g.raw() + o * length * v.inner;
        for (std::size_t i = 0; i < length * v.inner; ++i) d[i] += s[i];
      }
    }
  });
}

template <typename T>
Var<T> softmax(Var<T> a, std::size_t axis) {
  const AxisView v = axis_view(a.shape(), axis, "softmax");
  BasicTensor<T> out(a.shape());
  const T* x = a.value().raw();
  T* y = out.raw();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.len * v.inner + in;
      T mx = x[base];
      for (std::size_t j = 1; j < v.len; ++j) mx = std::max(mx, x[base + j * v.inner]);
      T total{0};
      for (std::size_t j = 0; j < v.len; ++j) {
        const T e = std::exp(x[base + j * v.inner] - mx);
        y[base + j * v.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < v.len; ++j) y[base + j * v.inner] /= total;
    }
  }
  BasicTensor<T> saved = out;
  return a.tape().record("softmax", std::move(out), {a}, [a, v, y = std::move(saved)](Tape<T>& t, const BasicTensor<T>& g) {
    auto* ga = t.grad_slot(a);
    if (!ga) return;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.len * v.inner + in;
        T dot{0};
        for (std::size_t j = 0; j < v.len; ++j) dot += g[base + j * v.inner] * y[base + j * v.inner];
        for (std::size_t j = 0; j < v.len; ++j) {
          const std::size_t idx = base + j * v.inner;
          (*ga)[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v = std::max(v, T{0});
  return a.tape().record("relu", std::move(out), {a}, [a](Tape<T>& t, const BasicTensor<T>& g) {
    if (auto* ga = t.grad_slot(a)) {
      const auto& x = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > T{0}) (*ga)[i] += g[i];
      }
    }
  });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  constexpr T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v = T{0.5} * v * (T{1} + std::erf(v * inv_sqrt2));
  return a.tape().record("gelu", std::move(out), {a}, [a](Tape<T>& t, const BasicTensor<T>& g) {
    auto* ga = t.grad_slot(a);
    if (!ga) return;
    const T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    const auto& x = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T xi = x[i];
      const T cdf = T{0.5} * (T{1} + std::erf(xi * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * xi * xi);
      (*ga)[i] += g[i] * (cdf + xi * pdf);
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s{0};
  for (T v : a.value().data()) s += v;
  return a.tape().record("sum", BasicTensor<T>::scalar(s), {a}, [a](Tape<T>& t, const BasicTensor<T>& g) {
    if (auto* ga = t.grad_slot(a)) {
      for (auto& v : ga->data()) v += g[0];
    }
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  if (a.size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>& stats, NormMode mode,
                 std::size_t axis) {
  same_tape(x, gamma, "batchnorm");
  same_tape(x, beta, "batchnorm");
  const AxisView v = axis_view(x.shape(), axis, "batchnorm");
  const std::size_t features = v.len;
  const std::size_t count = v.outer * v.inner;
  if (features == 0 || count == 0) throw DimensionError("batchnorm: zero-extent input " + shape_string(x.shape()));
  if (gamma.shape() != Shape{features} || beta.shape() != Shape{features}) {
    throw DimensionError("batchnorm: affine parameters must be [" + std::to_string(features) + "], got " +
                         shape_string(gamma.shape()) + " and " + shape_string(beta.shape()));
  }
  if (stats.running_mean.shape() != Shape{features} || stats.running_var.shape() != Shape{features}) {
    throw DimensionError("batchnorm: running statistics do not match " + std::to_string(features) + " features");
  }

  const bool batch_stats = mode != NormMode::kEval;
  const T* xv = x.value().raw();
  auto at = [&](std::size_t f, std::size_t o, std::size_t in) { return (o * features + f) * v.inner + in; };

  BasicTensor<T> mu({features}), inv_std({features});
  for (std::size_t f = 0; f < features; ++f) {
    if (batch_stats) {
      T m{0};
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t in = 0; in < v.inner; ++in) m += xv[at(f, o, in)];
      m /= static_cast<T>(count);
      T var{0};
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t in = 0; in < v.inner; ++in) {
          const T d = xv[at(f, o, in)] - m;
          var += d * d;
        }
      var /= static_cast<T>(count);
      mu[f] = m;
      inv_std[f] = T{1} / std::sqrt(var + static_cast<T>(kBatchNormEps));
      if (mode == NormMode::kTrain) {
        const T unbiased = count > 1 ? var * static_cast<T>(count) / static_cast<T>(count - 1) : var;
        const T mom = static_cast<T>(kBatchNormMomentum);
        stats.running_mean[f] = (T{1} - mom) * stats.running_mean[f] + mom * m;
        stats.running_var[f] = (T{1} - mom) * stats.running_var[f] + mom * unbiased;
      }
    } else {
      mu[f] = stats.running_mean[f];
      inv_std[f] = T{1} / std::sqrt(stats.running_var[f] + static_cast<T>(kBatchNormEps));
    }
  }

  BasicTensor<T> xhat(x.shape());
  BasicTensor<T> out(x.shape());
  const T* gv = gamma.value().raw();
  const T* bv = beta.value().raw();
  for (std::size_t f = 0; f < features; ++f)
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t i = at(f, o, in);
        xhat[i] = (xv[i] - mu[f]) * inv_std[f];
        out[i] = gv[f] * xhat[i] + bv[f];
      }

  return x.tape().record(
      "batchnorm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, v, features, count, batch_stats, inv_std = std::move(inv_std), xhat = std::move(xhat)](
          Tape<T>& t, const BasicTensor<T>& g) {
        auto at = [&](std::size_t f, std::size_t o, std::size_t in) { return (o * features + f) * v.inner + in; };
        auto* gx = t.grad_slot(x);
        auto* gg = t.grad_slot(gamma);
        auto* gb = t.grad_slot(beta);
        const T* gv = gamma.value().raw();
        for (std::size_t f = 0; f < features; ++f) {
          T sum_g{0}, sum_gx{0};
          for (std::size_t o = 0; o < v.outer; ++o)
            for (std::size_t in = 0; in < v.inner; ++in) {
              const std::size_t i = at(f, o, in);
              sum_g += g[i];
              sum_gx += g[i] * xhat[i];
            }
          if (gg) (*gg)[f] += sum_gx;
          if (gb) (*gb)[f] += sum_g;
          if (!gx) continue;
          const T scale_f = gv[f] * inv_std[f];
          if (!batch_stats) {
            for (std::size_t o = 0; o < v.outer; ++o)
              for (std::size_t in = 0; in < v.inner; ++in) {
                const std::size_t i = at(f, o, in);
                (*gx)[i] += scale_f * g[i];
              }
            continue;
          }
          const T n = static_cast<T>(count);
          for (std::size_t o = 0; o < v.outer; ++o)
            for (std::size_t in = 0; in < v.inner; ++in) {
              const std::size_t i = at(f, o, in);
              (*gx)[i] += scale_f * (g[i] - sum_g / n - xhat[i] * sum_gx / n);
            }
        }
      });
}

#define P2LHAP_INSTANTIATE_OPS(T)                                                                    \
  template Var<T> add(Var<T>, Var<T>);                                                               \
  template Var<T> sub(Var<T>, Var<T>);                                                               \
  template Var<T> add_broadcast(Var<T>, Var<T>);                                                     \
  template Var<T> scale(Var<T>, double);                                                             \
  template Var<T> mul(Var<T>, Var<T>);                                                               \
  template Var<T> mul_constant(Var<T>, const BasicTensor<T>&);                                       \
  template Var<T> matmul(Var<T>, Var<T>);                                                            \
  template Var<T> matmul_bt(Var<T>, Var<T>);                                                         \
  template Var<T> bmm(Var<T>, Var<T>);                                                               \
  template Var<T> bmm_bt(Var<T>, Var<T>);                                                            \
  template Var<T> transpose(Var<T>);                                                                 \
  template Var<T> permute(Var<T>, const std::vector<std::size_t>&);                                  \
  template Var<T> reshape(Var<T>, Shape);                                                            \
  template Var<T> slice(Var<T>, std::size_t, std::size_t, std::size_t);                              \
  template Var<T> softmax(Var<T>, std::size_t);                                                      \
  template Var<T> relu(Var<T>);                                                                      \
  template Var<T> gelu(Var<T>);                                                                      \
  template Var<T> sum(Var<T>);                                                                       \
  template Var<T> mean(Var<T>);                                                                      \
  template Var<T> batchnorm(Var<T>, Var<T>, Var<T>, BatchNormStats<T>&, NormMode, std::size_t);

P2LHAP_INSTANTIATE_OPS(float)
P2LHAP_INSTANTIATE_OPS(double)

#undef P2LHAP_INSTANTIATE_OPS

}  // namespace p2lhap
