#include <doctest.h>

#include "etg/adam.hpp"
#include "etg/gradcheck.hpp"

#include <cmath>

using namespace etg;

TEST_CASE("adam first step moves by about the learning rate") {
  Tensor p = Tensor::parameter(Matrix::Zero(1, 1));
  Adam opt({p});
  // loss = p, gradient 1
  backward(p + Tensor::scalar(0.0));
  REQUIRE(opt.step());
  CHECK(std::abs(std::abs(p.value()(0, 0)) - 0.005) < 1e-6);
  CHECK(p.value()(0, 0) < 0.0);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam leaves parameters untouched on zero gradient") {
  Tensor p = Tensor::parameter(Matrix::Constant(2, 2, 3.0));
  Adam opt({p});
  opt.zero_grad();
  REQUIRE(opt.step());
  CHECK((p.value().array() == 3.0).all());
}

TEST_CASE("two identical unit-gradient steps accumulate to about -0.010") {
  Tensor p = Tensor::parameter(Matrix::Zero(1, 1));
  Adam opt({p});
  for (int i = 0; i < 2; ++i) {
    opt.zero_grad();
    backward(mul(p, Tensor::scalar(1.0)));
    REQUIRE(opt.step());
  }
  CHECK(opt.step_count() == 2);
  CHECK(p.value()(0, 0) == doctest::Approx(-0.010).epsilon(1e-3));
}

TEST_CASE("non-finite gradient skips the step and is flagged") {
  Tensor p = Tensor::parameter(Matrix::Constant(1, 1, 2.0));
  Adam opt({p});
  numerics_log().reset();
  opt.zero_grad();
  backward(log(p - Tensor::scalar(2.0)));  // log(0): -inf value, inf grad
  CHECK_FALSE(opt.step());
  CHECK(p.value()(0, 0) == 2.0);
  CHECK(opt.step_count() == 0);
  CHECK(numerics_log().skipped_optimizer_steps == 1);
}

TEST_CASE("learning rate zero never changes parameters") {
  Tensor p = Tensor::parameter(Matrix::Constant(3, 1, 1.5));
  AdamConfig cfg;
  cfg.lr = 0.0;
  Adam opt({p}, cfg);
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    backward(sum(square(p)));
    REQUIRE(opt.step());
  }
  CHECK((p.value().array() == 1.5).all());
}
