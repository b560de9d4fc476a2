#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "distilrank/errors.hpp"
#include "distilrank/optim.hpp"
#include "distilrank/rng.hpp"
#include "distilrank/tensor.hpp"
#include "oracles.hpp"

using namespace distilrank;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double scl = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.next_normal() * scl;
  return t;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  Tensor x = Tensor::from({1, 2}, {0.0, 0.0});
  Tensor p = softmax_rows(x);
  CHECK(p.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.data()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax rows are valid distributions") {
  Rng rng(11);
  Tensor x = random_tensor({7, 9}, rng, 3.0);
  Tensor p = softmax_rows(x);
  for (int64_t i = 0; i < 7; ++i) {
    double sum = 0;
    for (int64_t j = 0; j < 9; ++j) {
      const double v = p.data()[i * 9 + j];
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("masked softmax zeroes excluded columns and renormalizes") {
  Tensor x = Tensor::from({2, 4}, {1, 2, 3, 4, 4, 3, 2, 1});
  std::vector<uint8_t> keep = {1, 1, 0, 1};
  Tensor p = masked_softmax_rows(x, keep, 2);
  for (int64_t i = 0; i < 2; ++i) {
    CHECK(p.data()[i * 4 + 2] == 0.0);
    double sum = 0;
    for (int64_t j = 0; j < 4; ++j) sum += p.data()[i * 4 + j];
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("kl divergence identity and positivity") {
  Tensor p = Tensor::from({1, 3}, {0.2, 0.3, 0.5});
  CHECK(kl_div_rows(p, p).item() == doctest::Approx(0.0).epsilon(1e-15));

  Tensor q = Tensor::from({1, 3}, {0.5, 0.3, 0.2});
  CHECK(kl_div_rows(p, q).item() > 0.0);

  Tensor bad = Tensor::from({1, 3}, {0.5, 0.3, 0.3});
  CHECK_THROWS_AS((void)kl_div_rows(p, bad), DomainError);
}

TEST_CASE("matmul against identity") {
  Rng rng(3);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor c = matmul(a, eye);
  for (int64_t i = 0; i < 9; ++i) CHECK(c.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-15));
  CHECK_THROWS_AS((void)matmul(a, Tensor::zeros({4, 3})), ShapeError);
}

TEST_CASE("layer norm closed form on [1,2,3]") {
  Tensor x = Tensor::from({1, 3}, {1, 2, 3});
  Tensor gain = Tensor::full({3}, 1.0);
  Tensor bias = Tensor::zeros({3});
  Tensor y = layer_norm_rows(x, gain, bias, 0.0);
  // mean 2, population variance 2/3
  const double inv = 1.0 / std::sqrt(2.0 / 3.0);
  CHECK(y.data()[0] == doctest::Approx(-inv).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.data()[2] == doctest::Approx(inv).epsilon(1e-12));
}

TEST_CASE("backward of sum of squares") {
  Tensor x = Tensor::from({1, 3}, {1, 2, 3}, /*requires_grad=*/true);
  Tensor loss = sum_all(mul(x, x));
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));

  // Repeated backward accumulates until zeroed.
  Tensor loss2 = sum_all(mul(x, x));
  loss2.backward();
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::from({1, 2}, {1, 2}, true);
  CHECK_THROWS_AS(mul(x, x).backward(), UsageError);
}

TEST_CASE("softmax + cross entropy matches finite differences") {
  Rng rng(17);
  Tensor logits = random_tensor({4, 8}, rng, 2.0);
  std::vector<int64_t> targets = {1, 0, 7, 3};
  auto res = oracles::finite_difference_check(
      {logits}, [&] { return cross_entropy_logits(logits, targets); });
  CHECK(res.checked == 32);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("gradient check across every differentiable op") {
  Rng rng(29);
  const double tol = 1e-4;

  SUBCASE("add sub mul affine") {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    auto res = oracles::finite_difference_check({a, b}, [&] {
      return sum_all(mul(affine(add(a, b), 1.5, -0.25), sub(a, b)));
    });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("matmul transpose broadcast") {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    Tensor bias = random_tensor({2}, rng);
    auto res = oracles::finite_difference_check({a, b, bias}, [&] {
      return mse_loss(add_row_broadcast(matmul(a, b), bias),
                      transpose(Tensor::zeros({2, 3})));
    });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("softmax") {
    Tensor a = random_tensor({3, 5}, rng, 2.0);
    Tensor target = softmax_rows(random_tensor({3, 5}, rng));
    auto res = oracles::finite_difference_check(
        {a}, [&] { return mse_loss(softmax_rows(a), target); });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("masked softmax") {
    Tensor a = random_tensor({4, 5}, rng, 2.0);
    std::vector<uint8_t> keep = {1, 0, 1, 1, 0, /**/ 1, 1, 1, 0, 1};
    Tensor target = Tensor::zeros({4, 5});
    auto res = oracles::finite_difference_check(
        {a}, [&] { return mse_loss(masked_softmax_rows(a, keep, 2), target); });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("layer norm") {
    Tensor x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    Tensor target = random_tensor({3, 6}, rng);
    auto res = oracles::finite_difference_check(
        {x, g, b}, [&] { return mse_loss(layer_norm_rows(x, g, b), target); });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("gelu sigmoid") {
    Tensor x = random_tensor({2, 7}, rng);
    auto res = oracles::finite_difference_check(
        {x}, [&] { return sum_all(mul(gelu(x), sigmoid(x))); });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("gather and concat") {
    Tensor table = random_tensor({6, 3}, rng);
    Tensor other = random_tensor({4, 2}, rng);
    std::vector<int64_t> idx = {5, 0, 0, 2};
    auto res = oracles::finite_difference_check({table, other}, [&] {
      return mse_loss(concat_cols(gather_rows(table, idx), other), Tensor::zeros({4, 5}));
    });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("split and merge heads") {
    Tensor x = random_tensor({6, 8}, rng);  // batch 2, seq 3, 2 heads x 4
    auto res = oracles::finite_difference_check({x}, [&] {
      return mse_loss(merge_heads(split_heads(x, 2, 3, 2), 2, 3, 2), Tensor::zeros({6, 8}));
    });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("attention scores and apply") {
    Tensor q = random_tensor({6, 4}, rng), k = random_tensor({6, 4}, rng),
           v = random_tensor({6, 4}, rng);
    auto res = oracles::finite_difference_check({q, k, v}, [&] {
      Tensor scores = attention_scores(q, k, 2, 3, 0.5);
      return mse_loss(attention_apply(softmax_rows(scores), v, 2, 3), Tensor::zeros({6, 4}));
    });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("kl divergence both sides") {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    auto res = oracles::finite_difference_check(
        {a, b}, [&] { return kl_div_rows(softmax_rows(a), softmax_rows(b)); });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("bce with logits") {
    Tensor z = random_tensor({5, 1}, rng, 2.0);
    std::vector<double> labels = {1, 0, 1, 1, 0};
    auto res = oracles::finite_difference_check({z}, [&] { return bce_with_logits(z, labels); });
    CHECK(res.max_rel_err < tol);
  }
  SUBCASE("masked row mse") {
    Tensor a = random_tensor({4, 3}, rng), b = random_tensor({4, 3}, rng);
    std::vector<uint8_t> keep = {1, 0, 1, 1};
    auto res = oracles::finite_difference_check(
        {a, b}, [&] { return masked_row_mse(a, b, keep); });
    CHECK(res.max_rel_err < tol);
  }
}

TEST_CASE("adamw first step moves by about lr") {
  Tensor p = Tensor::from({1}, {1.0}, true);
  Optimizer opt({OptimizerKind::AdamW, 0.1, 0.0}, {p});
  p.zero_grad();
  Tensor loss = sum_all(p);  // grad 1
  loss.backward();
  opt.step();
  CHECK(p.data()[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
  for (auto kind : {OptimizerKind::Adam, OptimizerKind::AdamW}) {
    Tensor p = Tensor::from({2}, {0.5, -0.25}, true);
    Optimizer opt({kind, 0.1, 0.0}, {p});
    p.zero_grad();
    opt.step();
    CHECK(p.data()[0] == 0.5);
    CHECK(p.data()[1] == -0.25);
  }
}

TEST_CASE("adamw decoupled decay shrinks by (1 - lr*wd) per step") {
  Tensor p = Tensor::from({1}, {2.0}, true);
  const double lr = 0.1, wd = 0.01;
  Optimizer opt({OptimizerKind::AdamW, lr, wd}, {p});
  double expect = 2.0;
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    opt.step();
    expect *= 1.0 - lr * wd;
    CHECK(p.data()[0] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("adam folds decay into the gradient (parameter still moves at zero grad)") {
  Tensor p = Tensor::from({1}, {2.0}, true);
  Optimizer opt({OptimizerKind::Adam, 0.1, 0.01}, {p});
  p.zero_grad();
  opt.step();
  CHECK(p.data()[0] < 2.0);
}

TEST_CASE("optimizer step without gradients is a usage error") {
  Tensor p = Tensor::from({1}, {1.0}, true);
  Optimizer opt({OptimizerKind::Adam, 0.1, 0.0}, {p});
  CHECK_THROWS_AS(opt.step(), UsageError);
}

TEST_CASE("optimizers are bitwise deterministic") {
  auto run = [] {
    Rng rng(5);
    Tensor p = random_tensor({4, 4}, rng);
    p.set_requires_grad(true);
    Optimizer opt({OptimizerKind::AdamW, 3e-4, 0.01}, {p});
    for (int step = 0; step < 20; ++step) {
      p.zero_grad();
      Tensor loss = mse_loss(matmul(p, p), Tensor::full({4, 4}, 0.5));
      loss.backward();
      opt.step();
    }
    return std::vector<double>(p.data().begin(), p.data().end());
  };
  auto a = run();
  auto b = run();
  CHECK(a == b);
}
