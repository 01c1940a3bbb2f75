#pragma once

// Minimal reverse-mode automatic differentiation over dense rank-0/1/2
// tensors. Every op records a closure that maps the output gradient onto its
// inputs; backward() walks the graph in reverse topological order.
//
// Rank-1 tensors behave as 1 x n row vectors wherever a matrix is expected.
// Instantiated for float (training) and double (gradient checks).

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "robofi/error.hpp"

namespace robofi::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_string(const Shape& s);

/// splitmix64 finalizer; derives independent stream seeds from (seed, stream).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded 64-bit generator. Draw conversions are done here (not by <random>
/// distributions) so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t next_u64() {
    ++position_;
    return engine_();
  }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, one value per call).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<T> values);
  static Tensor parameter(Shape shape, std::vector<T> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  /// Matrix view: rank 2 -> (d0, d1); rank 1 -> (1, n); rank 0 -> (1, 1).
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> values() const { return node_->value; }
  /// Mutable storage for initialization and optimizer steps (leaves only).
  std::span<T> data() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_data() { return node_->ensure_grad(); }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();

  T item() const;
  T at(std::size_t i) const { return node_->value[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Graph recording switch for the current thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// Same-shape sum, or `b` broadcast as a row vector over the rows of `a`.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> concat_last_dim(std::span<const Tensor<T>> parts);
template <typename T> Tensor<T> concat_last_dim(const Tensor<T>& a, const Tensor<T>& b);
/// axis 0 averages rows (result length cols), axis 1 averages columns.
template <typename T> Tensor<T> mean_over_axis(const Tensor<T>& a, int axis);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
/// Exact erf-based GeLU.
template <typename T> Tensor<T> gelu(const Tensor<T>& a);
template <typename T> Tensor<T> softmax_last_dim(const Tensor<T>& a);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));
/// Inverted dropout; identity when !train or p == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, T p, Rng& rng, bool train);
/// -log softmax(logits)[target]; logits is a length-C vector (or 1 x C).
template <typename T> Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t target);

/// softmax(Q K^T / sqrt(d_k)) V. `weights` receives the attention matrix when non-null.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, Tensor<T>* weights = nullptr);

template <typename T>
struct MhaWeights {
  std::vector<Tensor<T>> wq, wk, wv;  // per head, L x L/M
  Tensor<T> wo;                       // L x L
};

/// concat_i attention(X Wq_i, X Wk_i, X Wv_i) . W_O
template <typename T> Tensor<T> multi_head_attention(const Tensor<T>& x, const MhaWeights<T>& w);

/// Populates grad on every reachable requires_grad leaf (accumulating).
/// The graph is released afterwards; a second call throws GraphConsumed.
template <typename T> void backward(const Tensor<T>& loss);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Central-difference check of backward() for every coordinate of `params`.
/// Error per coordinate: |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// `tamper` runs after backward and before comparison (fault injection).
GradCheckResult grad_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> params,
                           double eps = 1e-5, const std::function<void()>& tamper = {});

}  // namespace robofi::ad
