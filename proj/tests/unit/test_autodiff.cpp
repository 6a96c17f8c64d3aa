#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mira/ops.hpp"
#include "mira/tensor.hpp"

using namespace mira;
using ad::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  Tensor t = Tensor::from_vector(std::move(v), true);
  if (shape.size() == 2) t = Tensor::from_matrix(shape[0], shape[1], t.data(), true);
  return t;
}

}  // namespace

TEST_CASE("primitive forward values") {
  const Tensor z = Tensor::from_vector({0.0, 0.0});
  const Tensor s = ad::softmax_rows(Tensor::from_matrix(1, 2, {0.0, 0.0}));
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.at(1) == doctest::Approx(0.5).epsilon(1e-15));

  CHECK(ad::sigmoid_(Tensor::scalar(0.0)).value() == 0.5);

  const Tensor eye = Tensor::from_matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  const Tensor a = Tensor::from_matrix(2, 2, {1.0, 2.0, 3.0, 4.0});
  const Tensor prod = ad::matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) CHECK(prod.at(i) == a.at(i));
}

TEST_CASE("shape mismatches are rejected with shapes named") {
  const Tensor a = Tensor::from_matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from_matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS((void)ad::matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)ad::add(a, Tensor::from_vector({1.0})), std::invalid_argument);
}

TEST_CASE("y = x*x at x=3 gives dy/dx = 6") {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = ad::mul(x, x);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("sum of a softmax row has zero gradient") {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  Tensor z = Tensor::from_matrix(1, 3, {0.3, -1.2, 2.0}, true);
  Tensor y = ad::sum(ad::softmax_rows(z));
  tape.backward(y);
  for (double g : z.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("Huber gradient: quadratic inside delta, linear outside") {
  for (const auto& [x0, want] : {std::pair{0.5, 0.5}, std::pair{2.0, 1.0}}) {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    Tensor x = Tensor::from_vector({x0}, true);
    Tensor y = ad::huber_mean(x, {0.0}, 1.0, {1});
    tape.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("hand-derived three-op chain matches the product rule") {
  // y = sum(tanh(x) * x): dy/dx_i = tanh(x_i) + x_i * (1 - tanh(x_i)^2)
  ad::Tape tape;
  ad::TapeScope scope(tape);
  Tensor x = Tensor::from_vector({0.7, -1.3, 0.0}, true);
  Tensor y = ad::sum(ad::mul(ad::tanh_(x), x));
  tape.backward(y);
  for (std::size_t i = 0; i < 3; ++i) {
    const double th = std::tanh(x.at(i));
    CHECK(x.grad()[i] == doctest::Approx(th + x.at(i) * (1.0 - th * th)).epsilon(1e-14));
  }
}

TEST_CASE("repeated backward accumulates; gradients are deterministic") {
  auto run = [](int backwards) {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    Tensor x = Tensor::from_vector({1.5, -0.5}, true);
    Tensor y = ad::sum(ad::mul(x, x));
    for (int i = 0; i < backwards; ++i) tape.backward(y);
    return x.grad();
  };
  const auto once = run(1);
  const auto twice = run(2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(twice[i]) > std::abs(once[i]));
  CHECK(run(1) == once);  // bit-identical across runs
  CHECK(run(2) == twice);
}

TEST_CASE("finite_difference_check on analytic cases") {
  Tensor x = Tensor::scalar(3.0, true);
  const auto quad = ad::finite_difference_check([&] { return ad::mul(x, x); }, {x}, 1e-5);
  CHECK(quad.max_rel_error < 1e-8);

  Tensor c = Tensor::scalar(1.0, true);
  const auto flat =
      ad::finite_difference_check([&] { return Tensor::scalar(0.0); }, {c}, 1e-5);
  CHECK(flat.max_rel_error == 0.0);
}

TEST_CASE("every primitive passes the finite-difference oracle") {
  std::mt19937_64 rng(1234);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor bt = random_tensor({2, 4}, rng);
  Tensor at = random_tensor({4, 3}, rng);
  Tensor v4 = random_tensor({4}, rng);
  Tensor v4b = random_tensor({4}, rng);
  Tensor m34 = random_tensor({3, 4}, rng);
  Tensor g = Tensor::scalar(0.7, true);

  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 0, 1, 1, 1, 1, 1, 0};
  const std::vector<double> weights{0.3, -0.2, 0.5, 1.1};

  struct Case {
    const char* name;
    std::function<Tensor()> f;
    std::vector<Tensor> params;
  };
  const std::vector<Case> cases{
      {"matmul", [&] { return ad::sum(ad::matmul(a, b)); }, {a, b}},
      {"matmul_nt", [&] { return ad::sum(ad::matmul_nt(a, bt)); }, {a, bt}},
      {"matmul_tn", [&] { return ad::sum(ad::matmul_tn(at, b)); }, {at, b}},
      {"matvec", [&] { return ad::sum(ad::matvec(a, v4)); }, {a, v4}},
      {"add", [&] { return ad::sum(ad::mul(ad::add(v4, v4b), v4)); }, {v4, v4b}},
      {"sub", [&] { return ad::sum(ad::mul(ad::sub(v4, v4b), v4)); }, {v4, v4b}},
      {"mul", [&] { return ad::sum(ad::mul(v4, v4b)); }, {v4, v4b}},
      {"add_bias", [&] { return ad::sum(ad::tanh_(ad::add_bias(m34, v4))); }, {m34, v4}},
      {"scale", [&] { return ad::sum(ad::mul(ad::scale(v4, 2.5), v4)); }, {v4}},
      {"affine", [&] { return ad::sum(ad::mul(ad::affine(v4, 1.5, -0.25), v4)); }, {v4}},
      {"scale_by", [&] { return ad::sum(ad::scale_by(v4, g)); }, {v4, g}},
      {"exp", [&] { return ad::sum(ad::exp_(ad::scale(v4, 0.3))); }, {v4}},
      {"tanh", [&] { return ad::sum(ad::mul(ad::tanh_(v4), v4)); }, {v4}},
      {"sigmoid", [&] { return ad::sum(ad::mul(ad::sigmoid_(v4), v4)); }, {v4}},
      {"mean", [&] { return ad::mean(ad::mul(m34, m34)); }, {m34}},
      {"softmax_rows",
       [&] { return ad::sum(ad::mul(ad::softmax_rows(m34), m34)); },
       {m34}},
      {"softmax_rows_masked",
       [&] { return ad::sum(ad::mul(ad::softmax_rows(m34, &mask), m34)); },
       {m34}},
      {"masked_fill",
       [&] { return ad::sum(ad::mul(ad::masked_fill(m34, mask, 0.0), m34)); },
       {m34}},
      {"dot_const", [&] { return ad::dot_const(ad::tanh_(v4), weights); }, {v4}},
      {"linear_combination",
       [&] { return ad::sum(ad::mul(ad::linear_combination({v4, v4b}, {0.4, -1.2}), v4)); },
       {v4, v4b}},
      {"rows_slice", [&] { return ad::sum(ad::mul(ad::rows_slice(m34, 1, 3),
                                                  ad::rows_slice(m34, 0, 2))); },
       {m34}},
      {"row", [&] { return ad::sum(ad::mul(ad::row(m34, 2), v4)); }, {m34, v4}},
      {"concat_rows",
       [&] { return ad::sum(ad::tanh_(ad::concat_rows({v4, v4b}))); },
       {v4, v4b}},
      {"element", [&] { return ad::scale_by(ad::element(v4, 1), g); }, {v4, g}},
      {"rms_normalize",
       [&] { return ad::sum(ad::mul(ad::rms_normalize(m34, v4), m34)); },
       {m34, v4}},
      {"embed_tokens",
       [&] { return ad::sum(ad::tanh_(ad::embed_tokens({0.5, -1.0, 2.0}, v4, v4b))); },
       {v4, v4b}},
      {"huber_mean",
       [&] { return ad::huber_mean(v4, {0.1, 3.0, -0.4, 0.0}, 1.0, {1, 1, 1, 0}); },
       {v4}},
  };
  for (const auto& c : cases) {
    const auto rep = ad::finite_difference_check(c.f, c.params, 1e-5);
    INFO(c.name << " worst param " << rep.worst_param << " coord " << rep.worst_coord);
    CHECK(rep.max_rel_error < 1e-6);
  }
}

TEST_CASE("detach stops gradient flow; NoGradScope suppresses taping") {
  ad::Tape tape;
  {
    ad::TapeScope scope(tape);
    Tensor x = Tensor::scalar(2.0, true);
    Tensor y = ad::mul(ad::detach(x), x);
    tape.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(2.0));  // only the undetached factor
  }
  tape.clear();
  {
    ad::TapeScope scope(tape);
    ad::NoGradScope off;
    Tensor x = Tensor::scalar(2.0, true);
    (void)ad::mul(x, x);
    CHECK(tape.record_count() == 0);
  }
}
