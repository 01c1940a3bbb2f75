#include <cmath>
#include <vector>

#include "doctest.h"
#include "robofi/autodiff.hpp"

using namespace robofi;
using namespace robofi::ad;
using T = Tensor<double>;

namespace {

T rand_param(Shape s, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_size(s));
  for (double& x : v) x = rng.normal() * scale;
  return T::parameter(std::move(s), std::move(v));
}

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const T& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat o(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) o[i][j] += a[i][k] * b[k][j];
  return o;
}

// Scores, softmax and weighted sum written out longhand.
Mat brute_attention(const Mat& q, const Mat& k, const Mat& v) {
  const std::size_t n = q.size(), dk = q[0].size(), dv = v[0].size();
  Mat out(n, std::vector<double>(dv, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(k.size());
    double mx = -1e300;
    for (std::size_t j = 0; j < k.size(); ++j) {
      double d = 0;
      for (std::size_t t = 0; t < dk; ++t) d += q[i][t] * k[j][t];
      s[j] = d / std::sqrt(double(dk));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (double& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < k.size(); ++j)
      for (std::size_t t = 0; t < dv; ++t) out[i][t] += s[j] / z * v[j][t];
  }
  return out;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("softmax, activations, cross entropy closed forms") {
    const auto s = softmax_last_dim(T::constant({3}, {0, 0, 0}));
    for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(gelu(T::constant({1}, {0.0})).item() == 0.0);
    CHECK(relu(T::constant({1}, {-5.0})).item() == 0.0);
    CHECK(gelu(T::constant({1}, {1.0})).item() == doctest::Approx(0.5 * (1 + std::erf(1 / std::sqrt(2.0)))));

    const double ce = cross_entropy(T::constant({2}, {10, -10}), 0).item();
    CHECK(ce == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
    CHECK(ce == doctest::Approx(2.06e-9).epsilon(0.01));
    double prev = 1e9;
    for (double z : {0.0, 1.0, 2.0, 5.0, 10.0}) {
      const double l = cross_entropy(T::constant({2}, {z, -z}), 0).item();
      CHECK(l < prev);
      prev = l;
    }
  }

  TEST_CASE("dropout") {
    Rng rng(1);
    const auto x = T::constant({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(dropout(x, 0.0, rng, true).values()[4] == 5.0);
    const auto eval = dropout(x, 0.5, rng, false);
    for (std::size_t i = 0; i < 6; ++i) CHECK(eval.values()[i] == x.values()[i]);
    const auto big = T::constant({10000}, std::vector<double>(10000, 1.0));
    const auto d = dropout(big, 0.4, rng, true);
    double mean = 0;
    for (double v : d.values()) {
      CHECK((v == 0.0 || v == doctest::Approx(1 / 0.6)));
      mean += v;
    }
    CHECK(mean / 10000 == doctest::Approx(1.0).epsilon(0.03));
  }

  TEST_CASE("backward of sum(x^2)/2 is x") {
    Rng rng(2);
    auto x = rand_param({4, 3}, rng);
    backward(scale(sum(mul(x, x)), 0.5));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(x.values()[i]));
  }

  TEST_CASE("linear layer + cross entropy matches (softmax - onehot) x input") {
    Rng rng(3);
    auto w = rand_param({5, 4}, rng);
    const auto in = T::constant({5}, {0.3, -1.2, 0.7, 2.0, -0.4});
    const auto logits = matmul(in, w);
    const std::size_t target = 2;
    std::vector<double> p(logits.values().begin(), logits.values().end());
    double mx = *std::max_element(p.begin(), p.end()), z = 0;
    for (double& v : p) z += (v = std::exp(v - mx));
    for (double& v : p) v /= z;
    backward(cross_entropy(logits, target));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        const double expect = (p[j] - (j == target ? 1.0 : 0.0)) * in.values()[i];
        CHECK(w.grad()[i * 4 + j] == doctest::Approx(expect).epsilon(1e-12));
      }
  }

  TEST_CASE("a consumed graph cannot be replayed") {
    Rng rng(4);
    auto x = rand_param({3}, rng);
    const auto loss = sum(mul(x, x));
    backward(loss);
    try {
      backward(loss);
      FAIL("expected GraphConsumed");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GraphConsumed);
    }
    CHECK_THROWS_AS(backward(mul(x, x)), Error);  // not a scalar
  }

  TEST_CASE("shape errors") {
    const auto a = T::constant({2, 3}, std::vector<double>(6, 1.0));
    CHECK_THROWS_AS(matmul(a, a), Error);
    CHECK_THROWS_AS(add(a, T::constant({2}, {1, 2})), Error);
  }

  TEST_CASE("no-grad mode records nothing") {
    Rng rng(5);
    auto x = rand_param({2, 2}, rng);
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    const auto y = matmul(x, x);
    CHECK(y.node()->parents.empty());
  }

  TEST_CASE("grad_check on a linear layer") {
    Rng rng(6);
    std::vector<T> params{rand_param({6, 4}, rng), rand_param({4}, rng)};
    const auto in = T::constant({3, 6}, [&] {
      std::vector<double> v(18);
      for (double& x : v) x = rng.normal();
      return v;
    }());
    auto f = [&] { return sum(mul(add(matmul(in, params[0]), params[1]), add(matmul(in, params[0]), params[1]))); };
    const auto r = grad_check(f, params, 1e-5);
    CHECK(r.coordinates == 28);
    CHECK(r.max_rel_error < 1e-7);
  }

  TEST_CASE("grad_check catches a corrupted gradient") {
    Rng rng(7);
    std::vector<T> params{rand_param({4, 3}, rng)};
    const auto in = T::constant({2, 4}, {1, 2, 3, 4, -1, 0.5, 2, 1});
    auto f = [&] { return cross_entropy(mean_over_axis(matmul(in, params[0]), 0), 1); };
    CHECK(grad_check(f, params).max_rel_error < 1e-7);
    const auto bad = grad_check(f, params, 1e-5, [&] { params[0].grad_data()[5] *= 1.1; });
    CHECK(bad.max_rel_error > 1e-2);
    CHECK(bad.worst_index == 5);
  }

  TEST_CASE("grad_check through layer norm, gelu, softmax, concat, slicing") {
    Rng rng(8);
    std::vector<T> params{rand_param({3, 4}, rng), rand_param({4}, rng), rand_param({4}, rng), rand_param({4, 2}, rng)};
    auto f = [&] {
      auto h = layer_norm(params[0], params[1], params[2]);
      h = gelu(h);
      auto s = softmax_last_dim(transpose(h));
      auto c = concat_last_dim(slice_rows(params[0], 1, 2), matmul(slice_rows(h, 0, 2), params[3]));
      return add(sum(mul(c, c)), sum(mul(s, s)));
    };
    CHECK(grad_check(f, params).max_rel_error < 1e-6);
  }

  TEST_CASE("attention special cases") {
    Rng rng(9);
    // One key: all weight on it.
    const auto v1 = T::constant({1, 3}, {1, 2, 3});
    const auto o1 = attention(T::constant({1, 2}, {0.3, 0.1}), T::constant({1, 2}, {5, 5}), v1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(o1.values()[i] == doctest::Approx(v1.values()[i]));

    // All scores zero: uniform weights, output is the column mean of V.
    const auto q0 = T::constant({2, 2}, {1, 0, 1, 0});
    const auto k0 = T::constant({3, 2}, {0, 1, 0, 2, 0, -1});
    const auto v0 = T::constant({3, 2}, {1, 2, 3, 4, 5, 9});
    const auto o0 = attention(q0, k0, v0);
    CHECK(o0.at(0, 0) == doctest::Approx(3.0));
    CHECK(o0.at(1, 1) == doctest::Approx(5.0));

    // Q = K = I, V = I, d_k = 2: each row is softmax([1/sqrt2, 0]) in its own order.
    const auto I = T::constant({2, 2}, {1, 0, 0, 1});
    T w;
    const auto oi = attention(I, I, I, &w);
    const double a = std::exp(1 / std::sqrt(2.0)), hi = a / (a + 1), lo = 1 / (a + 1);
    CHECK(oi.at(0, 0) == doctest::Approx(hi).epsilon(1e-15));
    CHECK(oi.at(0, 1) == doctest::Approx(lo).epsilon(1e-15));
    CHECK(oi.at(1, 0) == doctest::Approx(lo).epsilon(1e-15));
    CHECK(w.at(1, 1) == doctest::Approx(hi).epsilon(1e-15));
  }

  TEST_CASE("multi-head attention matches per-head recomputation") {
    Rng rng(10);
    const std::size_t n = 3, L = 4, M = 2;
    const auto x = rand_param({n, L}, rng);
    MhaWeights<double> w;
    for (std::size_t h = 0; h < M; ++h) {
      w.wq.push_back(rand_param({L, L / M}, rng));
      w.wk.push_back(rand_param({L, L / M}, rng));
      w.wv.push_back(rand_param({L, L / M}, rng));
    }
    w.wo = rand_param({L, L}, rng);
    const auto out = multi_head_attention(x, w);
    REQUIRE(out.rows() == n);
    REQUIRE(out.cols() == L);

    Mat cat(n);
    for (std::size_t h = 0; h < M; ++h) {
      const auto head = brute_attention(mm(to_mat(x), to_mat(w.wq[h])), mm(to_mat(x), to_mat(w.wk[h])),
                                        mm(to_mat(x), to_mat(w.wv[h])));
      for (std::size_t i = 0; i < n; ++i) cat[i].insert(cat[i].end(), head[i].begin(), head[i].end());
    }
    const Mat expect = mm(cat, to_mat(w.wo));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < L; ++j) CHECK(out.at(i, j) == doctest::Approx(expect[i][j]).epsilon(1e-12));

    // One head is attention followed by W_O.
    MhaWeights<double> one{{rand_param({L, L}, rng)}, {rand_param({L, L}, rng)}, {rand_param({L, L}, rng)},
                           rand_param({L, L}, rng)};
    const auto o1 = multi_head_attention(x, one);
    const auto ref = matmul(attention(matmul(x, one.wq[0]), matmul(x, one.wk[0]), matmul(x, one.wv[0])), one.wo);
    for (std::size_t i = 0; i < o1.size(); ++i) CHECK(o1.values()[i] == doctest::Approx(ref.values()[i]));

    std::vector<T> params{w.wq[0], w.wk[1], w.wv[0], w.wo};
    CHECK(grad_check([&] { return sum(mul(multi_head_attention(x, w), multi_head_attention(x, w))); }, params)
              .max_rel_error < 1e-6);
  }

  TEST_CASE("rng streams are reproducible") {
    Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
    Rng c(1);
    for (int i = 0; i < 1000; ++i) CHECK(c.below(7) < 7);
  }
}
