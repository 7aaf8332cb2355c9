#include <cmath>
#include <doctest.h>

#include "tsde/autodiff.hpp"
#include "tsde/rng.hpp"

using namespace tsde;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Central-difference check of d(sum(f(inputs)))/d(inputs[which]) against the
// analytic gradient, probing every element.
void check_gradient(const std::function<ad::Var(const std::vector<ad::Var>&)>& f,
                    std::vector<Tensor> inputs, double tol = 1e-7, double h = 1e-6) {
  std::vector<ad::Var> vars;
  for (auto& t : inputs) vars.push_back(ad::param(t));
  ad::Var out = ad::sum_all(f(vars));
  ad::backward(out);

  for (size_t which = 0; which < inputs.size(); ++which) {
    for (int64_t i = 0; i < inputs[which].numel(); ++i) {
      auto eval = [&](double delta) {
        std::vector<ad::Var> vs;
        for (size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == which) t[i] += delta;
          vs.push_back(ad::constant(t));
        }
        return ad::sum_all(f(vs))->val[0];
      };
      const double fd = (eval(h) - eval(-h)) / (2 * h);
      const double an = vars[which]->grad[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      INFO("input ", which, " element ", i, " fd=", fd, " analytic=", an);
      CHECK(std::abs(fd - an) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);

  check_gradient([](const std::vector<ad::Var>& v) { return ad::add(v[0], v[1]); }, {a, b});
  check_gradient([](const std::vector<ad::Var>& v) { return ad::sub(v[0], v[1]); }, {a, b});
  check_gradient([](const std::vector<ad::Var>& v) { return ad::mul(v[0], v[1]); }, {a, b}, 1e-6);
  check_gradient([](const std::vector<ad::Var>& v) { return ad::scale(v[0], -2.5); }, {a});
  check_gradient([](const std::vector<ad::Var>& v) { return ad::silu(v[0]); }, {a}, 1e-5);
  check_gradient([](const std::vector<ad::Var>& v) { return ad::gelu(v[0]); }, {a}, 1e-5);
  check_gradient([](const std::vector<ad::Var>& v) { return ad::tanh_op(v[0]); }, {a}, 1e-5);
  check_gradient([](const std::vector<ad::Var>& v) { return ad::sigmoid(v[0]); }, {a}, 1e-5);
  check_gradient([](const std::vector<ad::Var>& v) { return ad::exp_op(v[0]); }, {a}, 1e-5);
}

TEST_CASE("relu gradient away from the kink") {
  Tensor a({4}, {-1.5, -0.3, 0.4, 2.0});
  check_gradient([](const std::vector<ad::Var>& v) { return ad::relu(v[0]); }, {a});
}

TEST_CASE("matmul and bias gradients") {
  Rng rng(11);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor w = random_tensor({3, 5}, rng);
  Tensor b = random_tensor({5}, rng);
  check_gradient(
      [](const std::vector<ad::Var>& v) {
        return ad::add_rowvec(ad::matmul(v[0], v[1]), v[2]);
      },
      {x, w, b}, 1e-6);
}

TEST_CASE("bmm, transpose and permute gradients") {
  Rng rng(13);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({2, 4, 5}, rng);
  check_gradient([](const std::vector<ad::Var>& v) { return ad::bmm(v[0], v[1]); }, {a, b}, 1e-6);
  check_gradient([](const std::vector<ad::Var>& v) { return ad::transpose12(v[0]); }, {a});
  check_gradient(
      [](const std::vector<ad::Var>& v) {
        return ad::mul(ad::permute(v[0], {1, 0, 2}), ad::permute(v[0], {1, 0, 2}));
      },
      {a}, 1e-6);
}

TEST_CASE("permute round trip restores layout") {
  Rng rng(3);
  Tensor a = random_tensor({2, 3, 4}, rng);
  ad::Var v = ad::constant(a);
  ad::Var back = ad::permute(ad::permute(v, {2, 0, 1}), {1, 2, 0});
  REQUIRE(back->val.same_shape(a));
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(back->val[i] == a[i]);
}

TEST_CASE("softmax rows sum to one and gradients check out") {
  Rng rng(17);
  Tensor a = random_tensor({5, 6}, rng, 2.0);
  ad::Var s = ad::softmax_last(ad::constant(a));
  for (int64_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (int64_t c = 0; c < 6; ++c) sum += s->val.at(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Probe through a nonlinear scalarization so the gradient is nontrivial.
  Tensor probe = random_tensor({5, 6}, rng);
  check_gradient(
      [&](const std::vector<ad::Var>& v) {
        return ad::mul(ad::softmax_last(v[0]), ad::constant(probe));
      },
      {a}, 1e-5);
}

TEST_CASE("layernorm gradients") {
  Rng rng(19);
  Tensor x = random_tensor({4, 6}, rng, 1.3);
  Tensor g = random_tensor({6}, rng);
  Tensor b = random_tensor({6}, rng);
  Tensor probe = random_tensor({4, 6}, rng);
  check_gradient(
      [&](const std::vector<ad::Var>& v) {
        return ad::mul(ad::layernorm(v[0], v[1], v[2]), ad::constant(probe));
      },
      {x, g, b}, 1e-5);
}

TEST_CASE("concat and slice are inverses with correct gradients") {
  Rng rng(23);
  Tensor a = random_tensor({3, 2}, rng);
  Tensor b = random_tensor({3, 5}, rng);
  ad::Var ca = ad::constant(a), cb = ad::constant(b);
  ad::Var cat = ad::concat_last({ca, cb});
  REQUIRE(cat->val.dim(1) == 7);
  ad::Var back = ad::slice_last(cat, 2, 7);
  for (int64_t i = 0; i < b.numel(); ++i) CHECK(back->val[i] == b[i]);

  Tensor probe = random_tensor({3, 7}, rng);
  check_gradient(
      [&](const std::vector<ad::Var>& v) {
        return ad::mul(ad::concat_last({v[0], v[1]}), ad::constant(probe));
      },
      {a, b}, 1e-6);
  check_gradient([](const std::vector<ad::Var>& v) { return ad::slice_last(v[0], 1, 4); }, {b});
}

TEST_CASE("rows lookup scatters gradients into the table") {
  Rng rng(29);
  Tensor table = random_tensor({5, 3}, rng);
  check_gradient(
      [](const std::vector<ad::Var>& v) { return ad::rows(v[0], {4, 0, 0, 2}); }, {table});

  ad::Var t = ad::param(table);
  ad::Var picked = ad::rows(t, {1, 1, 1});
  ad::backward(ad::sum_all(picked));
  // Row 1 is hit three times, the rest never.
  for (int64_t c = 0; c < 3; ++c) {
    CHECK(t->grad.at(1, c) == 3.0);
    CHECK(t->grad.at(0, c) == 0.0);
  }
}

TEST_CASE("shared subgraphs accumulate gradients once per use") {
  Tensor x({1}, {3.0});
  ad::Var v = ad::param(x);
  ad::Var y = ad::add(ad::mul(v, v), v);  // x^2 + x, dy/dx = 2x + 1
  ad::backward(ad::sum_all(y));
  CHECK(v->grad[0] == doctest::Approx(7.0));
}

TEST_CASE("shape mismatches throw") {
  ad::Var a = ad::constant(Tensor::zeros({2, 3}));
  ad::Var b = ad::constant(Tensor::zeros({3, 2}));
  CHECK_THROWS_AS((void)ad::add(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)ad::matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS((void)ad::slice_last(a, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(ad::backward(a), std::invalid_argument);
}
