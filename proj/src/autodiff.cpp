#include "robofi/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace robofi::ad {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  if (n <= 1) return 0;
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % n);
}

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
CMatMap<T> as_mat(const Node<T>& n, std::size_t rows, std::size_t cols) {
  return CMatMap<T>(n.value.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MatMap<T> grad_mat(Node<T>& n, std::size_t rows, std::size_t cols) {
  return MatMap<T>(n.ensure_grad().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
std::pair<std::size_t, std::size_t> matrix_dims(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 1) return {1, s[0]};
  return {1, 1};
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::ShapeMismatch, op + ": " + shape_string(a) + " vs " + shape_string(b));
}

/// Builds the output node. Gradient bookkeeping is attached only when grad
/// mode is on and some input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor<T>* t : inputs) needs = needs || t->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor<T>* t : inputs) node->parents.push_back(t->node_ptr());
    node->backward_fn = std::move(fn);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
bool wants(const Node<T>& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::constant(Shape shape, std::vector<T> values) {
  if (shape_size(shape) != values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "constant " + shape_string(shape) + " given " + std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  Tensor t = constant(std::move(shape), std::vector<T>(n, T(0)));
  t.node_->requires_grad = requires_grad;
  return t;
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  return matrix_dims<T>(node_->shape).first;
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return matrix_dims<T>(node_->shape).second;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw Error(ErrorCode::NonScalarOutput, "item() on " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rank() != 2 || b.rows() != k || a.rank() == 0) shape_error("matmul", a.shape(), b.shape());
  std::vector<T> out(m * n);
  MatMap<T>(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() =
      as_mat(*a.node(), m, k) * as_mat(*b.node(), k, n);
  Shape shape = a.rank() == 1 ? Shape{n} : Shape{m, n};
  return make_result<T>(std::move(shape), std::move(out), {&a, &b}, [m, k, n](Node<T>& self) {
    const auto dc = CMatMap<T>(self.grad.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) grad_mat(pa, m, k).noalias() += dc * as_mat(pb, k, n).transpose();
    if (pb.requires_grad) grad_mat(pb, k, n).noalias() += as_mat(pa, m, k).transpose() * dc;
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) {
    std::vector<T> out(a.values().begin(), a.values().end());
    const auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
      for (std::size_t p = 0; p < 2; ++p) {
        if (!wants(self, p)) continue;
        auto& g = self.parents[p]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    });
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  if (b.size() != cols || (b.rank() > 1 && b.rows() != 1)) shape_error("add", a.shape(), b.shape());
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [rows, cols](Node<T>& self) {
    if (wants(self, 0)) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
      }
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<T> out(a.size());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (T& x : out) x *= factor;
  return make_result<T>(a.shape(), std::move(out), {&a}, [factor](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<T> out(a.size());
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = av[r * cols + c];
  }
  return make_result<T>(Shape{cols, rows}, std::move(out), {&a}, [rows, cols](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c * rows + r];
    }
  });
}

template <typename T>
Tensor<T> concat_last_dim(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of zero tensors");
  const std::size_t rows = parts[0].rows();
  const std::size_t rank = parts[0].rank();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows || p.rank() != rank) shape_error("concat_last_dim", parts[0].shape(), p.shape());
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto v = parts[i].values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * widths[i]), widths[i],
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += widths[i];
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = rank == 1 ? Shape{total} : Shape{rows, total};
  node->value = std::move(out);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parts) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node_ptr());
    node->backward_fn = [rows, total, widths](Node<T>& self) {
      std::size_t off = 0;
      for (std::size_t i = 0; i < widths.size(); ++i) {
        if (self.parents[i]->requires_grad) {
          auto& g = self.parents[i]->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < widths[i]; ++c) g[r * widths[i] + c] += self.grad[r * total + off + c];
          }
        }
        off += widths[i];
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> concat_last_dim(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> parts[] = {a, b};
  return concat_last_dim<T>(std::span<const Tensor<T>>(parts));
}

template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& a, int axis) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (axis != 0 && axis != 1) throw Error(ErrorCode::ShapeMismatch, "mean_over_axis: axis must be 0 or 1");
  const auto av = a.values();
  if (axis == 0) {
    std::vector<T> out(cols, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out[c] += av[r * cols + c];
    }
    for (T& x : out) x /= static_cast<T>(rows);
    return make_result<T>(Shape{cols}, std::move(out), {&a}, [rows, cols](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      const T inv = T(1) / static_cast<T>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c] * inv;
      }
    });
  }
  std::vector<T> out(rows, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += av[r * cols + c];
    out[r] /= static_cast<T>(cols);
  }
  return make_result<T>(Shape{rows}, std::move(out), {&a}, [rows, cols](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const T inv = T(1) / static_cast<T>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r] * inv;
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T x : a.values()) total += x;
  return make_result<T>(Shape{}, std::vector<T>{total}, {&a}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (T& x : g) x += self.grad[0];
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  const std::size_t cols = a.cols();
  if (a.rank() != 2 || begin + count > a.rows()) {
    throw Error(ErrorCode::ShapeMismatch,
                "slice_rows [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " + shape_string(a.shape()));
  }
  const auto av = a.values();
  std::vector<T> out(av.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                     av.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return make_result<T>(Shape{count, cols}, std::move(out), {&a}, [begin, cols](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * cols + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (T& x : out) x = x > T(0) ? x : T(0);
  return make_result<T>(a.shape(), std::move(out), {&a}, [](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.value[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  std::vector<T> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * av[i] * (T(1) + std::erf(av[i] * inv_sqrt2));
  return make_result<T>(a.shape(), std::move(out), {&a}, [](Node<T>& self) {
    constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = p.value[i];
      const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
      g[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

template <typename T>
Tensor<T> softmax_last_dim(const Tensor<T>& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<T> out(a.size());
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * cols;
    T* y = out.data() + r * cols;
    const T mx = *std::max_element(x, x + cols);
    T z = T(0);
    for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  return make_result<T>(a.shape(), std::move(out), {&a}, [rows, cols](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * cols;
      const T* dy = self.grad.data() + r * cols;
      T dot = T(0);
      for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (dy[c] - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.size() != cols || bias.size() != cols) shape_error("layer_norm", x.shape(), gain.shape());
  const auto xv = x.values(), gv = gain.values(), bv = bias.values();
  std::vector<T> out(x.size());
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * cols;
    T mu = T(0);
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(cols);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (row[c] - mu) * rs;
      (*xhat)[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x, &gain, &bias}, [rows, cols, xhat, rstd](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pg = *self.parents[1];
    Node<T>& pb = *self.parents[2];
    if (pg.requires_grad || pb.requires_grad) {
      auto& gg = pg.ensure_grad();
      auto& gb = pb.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          gg[c] += self.grad[r * cols + c] * (*xhat)[r * cols + c];
          gb[c] += self.grad[r * cols + c];
        }
      }
    }
    if (!px.requires_grad) return;
    auto& gx = px.ensure_grad();
    std::vector<T> dxhat(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      T mean_d = T(0), mean_dx = T(0);
      for (std::size_t c = 0; c < cols; ++c) {
        dxhat[c] = self.grad[r * cols + c] * pg.value[c];
        mean_d += dxhat[c];
        mean_dx += dxhat[c] * (*xhat)[r * cols + c];
      }
      mean_d /= static_cast<T>(cols);
      mean_dx /= static_cast<T>(cols);
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += (*rstd)[r] * (dxhat[c] - mean_d - (*xhat)[r * cols + c] * mean_dx);
      }
    }
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, Rng& rng, bool train) {
  if (!(p >= T(0) && p < T(1))) {
    throw Error(ErrorCode::ProbabilityOutOfRange, "dropout probability " + std::to_string(p) + " not in [0, 1)");
  }
  if (!train || p == T(0)) return x;
  const T keep_scale = T(1) / (T(1) - p);
  auto mask = std::make_shared<std::vector<T>>(x.size());
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < static_cast<double>(p) ? T(0) : keep_scale;
    out[i] = xv[i] * (*mask)[i];
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, [mask](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t target) {
  const std::size_t n = logits.size();
  if (logits.rows() != 1 || target >= n) {
    throw Error(ErrorCode::ShapeMismatch, "cross_entropy: target " + std::to_string(target) + " for logits " +
                                              shape_string(logits.shape()));
  }
  const auto x = logits.values();
  const T mx = *std::max_element(x.begin(), x.end());
  T z = T(0);
  for (T v : x) z += std::exp(v - mx);
  const T lse = mx + std::log(z);
  return make_result<T>(Shape{}, std::vector<T>{lse - x[target]}, {&logits}, [target, lse](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T prob = std::exp(p.value[i] - lse);
      g[i] += self.grad[0] * (prob - (i == target ? T(1) : T(0)));
    }
  });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, Tensor<T>* weights) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != k.cols() || k.rows() != v.rows() ||
      q.cols() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "attention: Q" + shape_string(q.shape()) + " K" + shape_string(k.shape()) +
                                              " V" + shape_string(v.shape()));
  }
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(q.cols()));
  Tensor<T> w = softmax_last_dim(scale(matmul(q, transpose(k)), inv_sqrt_dk));
  if (weights) *weights = w;
  return matmul(w, v);
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const MhaWeights<T>& w) {
  const std::size_t heads = w.wq.size();
  const std::size_t L = x.cols();
  if (heads == 0 || L % heads != 0) {
    throw Error(ErrorCode::HeadDivisibility,
                "embedding size " + std::to_string(L) + " not divisible by " + std::to_string(heads) + " heads");
  }
  if (w.wk.size() != heads || w.wv.size() != heads) {
    throw Error(ErrorCode::ShapeMismatch, "per-head weight lists differ in length");
  }
  const Shape head_shape{L, L / heads};
  for (std::size_t i = 0; i < heads; ++i) {
    if (w.wq[i].shape() != head_shape || w.wk[i].shape() != head_shape || w.wv[i].shape() != head_shape) {
      shape_error("multi_head_attention head weights", head_shape, w.wq[i].shape());
    }
  }
  if (w.wo.shape() != Shape{L, L}) shape_error("multi_head_attention W_O", Shape{L, L}, w.wo.shape());
  std::vector<Tensor<T>> lambdas;
  lambdas.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    lambdas.push_back(attention(matmul(x, w.wq[i]), matmul(x, w.wk[i]), matmul(x, w.wv[i])));
  }
  return matmul(concat_last_dim<T>(std::span<const Tensor<T>>(lambdas)), w.wo);
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw Error(ErrorCode::NonScalarOutput, "backward needs a scalar loss");
  }
  Node<T>* root = loss.node();
  if (root->consumed) throw Error(ErrorCode::GraphConsumed, "graph already consumed by a previous backward()");
  if (!root->requires_grad) return;

  // Iterative post-order DFS -> topological order (parents before children).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && !seen.contains(parent)) {
        if (parent->consumed) throw Error(ErrorCode::GraphConsumed, "graph already consumed by a previous backward()");
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
  for (Node<T>* n : order) {
    if (n->is_leaf()) continue;
    n->consumed = true;
    n->backward_fn = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

GradCheckResult grad_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> params, double eps,
                           const std::function<void()>& tamper) {
  const Tensor<double> loss = f();
  if (loss.size() != 1) throw Error(ErrorCode::NonScalarOutput, "grad_check needs a scalar-valued function");
  for (auto& p : params) p.zero_grad();
  backward(loss);
  if (tamper) tamper();

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>& p = params[pi];
    const std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                      : std::vector<double>(p.size(), 0.0);
    auto values = p.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f().item();
      values[i] = saved - eps;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = pi;
        result.worst_index = i;
      }
      ++result.coordinates;
    }
  }
  return result;
}

#define ROBOFI_AD_INSTANTIATE(T)                                                                          \
  template class Tensor<T>;                                                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                                          \
  template Tensor<T> transpose(const Tensor<T>&);                                                         \
  template Tensor<T> concat_last_dim(std::span<const Tensor<T>>);                                         \
  template Tensor<T> concat_last_dim(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mean_over_axis(const Tensor<T>&, int);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                               \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                              \
  template Tensor<T> relu(const Tensor<T>&);                                                              \
  template Tensor<T> gelu(const Tensor<T>&);                                                              \
  template Tensor<T> softmax_last_dim(const Tensor<T>&);                                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                 \
  template Tensor<T> dropout(const Tensor<T>&, T, Rng&, bool);                                            \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::size_t);                                        \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*);         \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const MhaWeights<T>&);                        \
  template void backward(const Tensor<T>&);

ROBOFI_AD_INSTANTIATE(float)
ROBOFI_AD_INSTANTIATE(double)

#undef ROBOFI_AD_INSTANTIATE

}  // namespace robofi::ad
