#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <filesystem>
#include <set>
#include <string>

#include "viclevr/tensor.hpp"

using namespace viclevr;
using namespace viclevr::tensor;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(SplitMix64& rng, Eigen::Index r, Eigen::Index c) {
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  return t;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c = Tensor::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

}  // namespace

TEST_CASE("matmul") {
  Tape<double> t;
  Tensor a(2, 2), b(2, 1);
  a << 1, 2, 3, 4;
  b << 5, 6;
  const auto c = matmul(t.leaf(a), t.leaf(b));
  CHECK(c.value()(0, 0) == 17);
  CHECK(c.value()(1, 0) == 39);
  CHECK(matmul(t.leaf(Tensor::Identity(2, 2)), t.leaf(a)).value() == a);
  CHECK(matmul(t.leaf(Tensor::Zero(3, 2)), t.leaf(a)).value().isZero());
  CHECK_THROWS_AS(matmul(t.leaf(a), t.leaf(Tensor::Zero(3, 1))), std::invalid_argument);

  SplitMix64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = random_tensor(rng, 3, 5), y = random_tensor(rng, 5, 2);
    CHECK((matmul(t.leaf(x), t.leaf(y)).value() - naive_matmul(x, y)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("matmul is associative on random 4x4 chains") {
  SplitMix64 rng(2);
  for (int i = 0; i < 50; ++i) {
    Tape<double> t;
    const auto a = t.leaf(random_tensor(rng, 4, 4)), b = t.leaf(random_tensor(rng, 4, 4)),
               c = t.leaf(random_tensor(rng, 4, 4));
    const Tensor left = matmul(matmul(a, b), c).value();
    const Tensor right = matmul(a, matmul(b, c)).value();
    CHECK((left - right).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("softmax") {
  Tensor x(1, 2);
  x << 0, 0;
  CHECK(softmax_rows(x)(0, 0) == doctest::Approx(0.5));
  x << 0, std::log(3.0);
  CHECK(std::abs(softmax_rows(x)(0, 0) - 0.25) < 1e-15);
  CHECK(std::abs(softmax_rows(x)(0, 1) - 0.75) < 1e-15);
  x << 1000, 1000;
  const Tensor big = softmax_rows(x);
  CHECK(big.allFinite());
  CHECK(big(0, 0) == 0.5);

  SplitMix64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Tensor v = random_tensor(rng, 3, 6);
    const double c = 50.0 * rng.normal();
    const Tensor shifted = (v.array() + c).matrix();
    CHECK((softmax_rows(v) - softmax_rows(shifted)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((softmax_rows(v).rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }

  Tape<double> t;
  const auto col = softmax(t.leaf(random_tensor(rng, 4, 3)), 0);
  CHECK((col.value().colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("layer_norm") {
  const Tensor g = Tensor::Ones(1, 4), b = Tensor::Zero(1, 4);
  const Tensor constant = Tensor::Constant(1, 4, 3.5);
  CHECK(layer_norm(constant, g, b).isZero());

  Tensor two(1, 2);
  two << 1, 3;
  const Tensor y = layer_norm(two, Tensor::Ones(1, 2), Tensor::Zero(1, 2), 1e-12);
  CHECK(std::abs(y(0, 0) + 1) < 1e-9);
  CHECK(std::abs(y(0, 1) - 1) < 1e-9);

  SplitMix64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Tensor x = random_tensor(rng, 2, 8);
    const Tensor n = layer_norm(x, Tensor::Ones(1, 8), Tensor::Zero(1, 8));
    for (Eigen::Index r = 0; r < 2; ++r) {
      CHECK(std::abs(n.row(r).mean()) < 1e-12);
      const double var = n.row(r).array().square().mean();
      CHECK(var <= 1.0);
      CHECK(var > 1.0 - 1e-3);
    }
    // affine input shifts, eps 1e-12
    const double a = 0.1 + 5.0 * rng.uniform_real(), s = 10.0 * rng.normal();
    const Tensor ax = (a * x.array() + s).matrix();
    const auto ln = [](const Tensor& v) { return layer_norm(v, Tensor::Ones(1, 8), Tensor::Zero(1, 8), 1e-12); };
    CHECK((ln(ax) - ln(x)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("gelu and sigmoid values") {
  Tensor x(1, 3);
  x << 0, 1, -1;
  const Tensor g = gelu(x);
  CHECK(g(0, 0) == 0);
  CHECK(std::abs(g(0, 1) - 0.8413447460685429) < 1e-12);
  CHECK(std::abs(g(0, 2) + 0.15865525393145707) < 1e-12);
  CHECK(sigmoid(Tensor::Zero(1, 1))(0, 0) == 0.5);
  Tensor extreme(1, 2);
  extreme << 800, -800;
  const Tensor s = sigmoid(extreme);
  CHECK(s.allFinite());
  CHECK(s(0, 0) == 1.0);
  CHECK(s(0, 1) >= 0.0);
}

TEST_CASE("bce") {
  const int n_ans = 6;
  Tensor target = Tensor::Zero(1, n_ans);
  target(0, 2) = 1;
  Tape<double> t;
  const auto perfect = bce(t.leaf(target), target);
  CHECK(std::abs(perfect.value()(0, 0) - n_ans * -std::log(1 - 1e-7)) < 1e-12);
  CHECK(perfect.value()(0, 0) < 1e-5);
  CHECK(perfect.value()(0, 0) / n_ans < 1e-5);

  const auto half = bce(t.leaf(Tensor::Constant(1, n_ans, 0.5)), target);
  CHECK(std::abs(half.value()(0, 0) - n_ans * std::log(2.0)) < 1e-12);

  // reductions over questions
  Tensor two = Tensor::Zero(2, n_ans);
  two(0, 1) = two(1, 4) = 1;
  const auto sum = bce(t.leaf(Tensor::Constant(2, n_ans, 0.5)), two, BceReduction::sum);
  const auto mean = bce(t.leaf(Tensor::Constant(2, n_ans, 0.5)), two, BceReduction::mean_per_question);
  CHECK(std::abs(sum.value()(0, 0) - 2 * n_ans * std::log(2.0)) < 1e-12);
  CHECK(std::abs(mean.value()(0, 0) - n_ans * std::log(2.0)) < 1e-12);

  Tensor bad = target;
  bad(0, 0) = 0.5;
  CHECK_THROWS_AS(bce(t.leaf(target), bad), std::invalid_argument);
}

TEST_CASE("finite_diff_grad") {
  Tensor x(1, 1);
  x << 3;
  const Tensor g = finite_diff_grad([](const Tensor& v) { return v(0, 0) * v(0, 0); }, x);
  CHECK(std::abs(g(0, 0) - 6) < 1e-6);
  SplitMix64 rng(5);
  const Tensor y = random_tensor(rng, 3, 4);
  CHECK(finite_diff_grad([](const Tensor&) { return 2.5; }, y).isZero());
  const Tensor ones = finite_diff_grad([](const Tensor& v) { return v.sum(); }, y);
  CHECK((ones.array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(finite_diff_grad([](const Tensor& v) { return std::log(v(0, 0)); }, Tensor::Zero(1, 1)),
                  std::domain_error);
}

TEST_CASE("max_relative_error") {
  Tensor a(1, 3), b(1, 3);
  a << 0.0, 10.0, -100.0;
  b << 1e-5, 10.001, -100.0;
  CHECK(std::abs(max_relative_error(a, b) - 0.001 / 10.001) < 1e-15);
}

TEST_CASE("every registered primitive matches finite differences") {
  const auto& reg = primitive_registry();
  std::set<std::string> names;
  for (const auto& c : reg) names.insert(c.name);
  for (const char* required : {"matmul", "add", "mul", "transpose", "reshape", "concat_rows", "concat_cols",
                               "gelu", "softmax", "layer_norm", "sigmoid", "mean_rows", "bce"}) {
    CHECK_MESSAGE(names.count(required) == 1, required);
  }
  SplitMix64 rng(2718);
  for (const auto& c : reg) {
    CHECK_FALSE(c.backward_rule.empty());
    const double err = check_primitive(c, rng, 20, 1e-5);
    CHECK_MESSAGE(err < 1e-4, c.name << " max relative error " << err);
  }
}

TEST_CASE("a corrupted backward rule is caught") {
  const auto& reg = primitive_registry();
  const auto it = std::find_if(reg.begin(), reg.end(), [](const PrimitiveCase& c) { return c.name == "gelu"; });
  REQUIRE(it != reg.end());
  PrimitiveCase broken = *it;
  broken.apply = [](Tape<double>& t, const std::vector<Var<double>>& in) {
    t.inject_backward_fault("gelu", 1.5);
    return gelu(in[0]);
  };
  SplitMix64 rng(1);
  CHECK(check_primitive(broken, rng, 5) > 1e-2);
}

TEST_CASE("tape accumulates gradients of shared inputs") {
  Tape<double> t;
  Tensor v(1, 2);
  v << 2, -3;
  const auto x = t.leaf(v);
  const auto y = sum_all(mul(x, x));  // Σ x²
  t.backward(y);
  CHECK(x.grad()(0, 0) == 4);
  CHECK(x.grad()(0, 1) == -6);
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
  Tensor inf(1, 1);
  inf << std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(t.leaf(inf), std::domain_error);
}

TEST_CASE("gather_rows scatters gradients back") {
  Tape<double> t;
  const auto table = t.leaf(Tensor::Identity(3, 3));
  const auto rows = gather_rows(table, {2, 0, 2});
  CHECK(rows.value()(0, 2) == 1);
  CHECK(rows.value()(1, 0) == 1);
  t.backward(sum_all(rows));
  CHECK(table.grad()(2, 0) == 2);
  CHECK(table.grad()(1, 1) == 0);
  CHECK_THROWS_AS(gather_rows(table, {5}), std::invalid_argument);
}

TEST_CASE("parameter store and checkpoints") {
  SplitMix64 rng(7);
  ParamStore s;
  s.add("layer.w", 3, 4, rng, 0.5);
  s.add("layer.b", 1, 4, rng, 0.0, 0.25);
  s.at("layer.b").frozen = true;
  CHECK(s.scalar_count() == 16);
  CHECK(s.at("layer.b").value(0, 3) == 0.25);
  CHECK_THROWS(s.add("layer.w", 1, 1, rng, 0.1));
  CHECK_THROWS(s.at("missing"));

  const fs::path dir = fs::temp_directory_path() / "viclevr_ckpt";
  fs::remove_all(dir);
  save_checkpoint(s, 99, dir);
  std::uint64_t seed = 0;
  const ParamStore back = load_checkpoint(dir, &seed);
  CHECK(seed == 99);
  REQUIRE(back.all().size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = s.all()[i];
    const auto& b = back.all()[i];
    CHECK(a.name == b.name);
    CHECK(a.frozen == b.frozen);
    REQUIRE(a.value.rows() == b.value.rows());
    REQUIRE(a.value.cols() == b.value.cols());
    CHECK(std::memcmp(a.value.data(), b.value.data(), sizeof(double) * a.value.size()) == 0);
  }

  // a truncated blob is rejected
  fs::resize_file(dir / "param_0.bin", 8);
  CHECK_THROWS(load_checkpoint(dir));
}

TEST_CASE("binding collects gradients") {
  SplitMix64 rng(8);
  ParamStore s;
  s.add("a", 1, 3, rng, 1.0);
  s.add("unused", 2, 2, rng, 1.0);
  Tape<double> t;
  Binding bind(t, s);
  t.backward(sum_all(scale(bind["a"], 2.0)));
  bind.collect_grads();
  CHECK((s.at("a").grad.array() == 2.0).all());
  CHECK(s.at("unused").grad.isZero());
  CHECK(t.op(bind["a"].id) == "param:a");
}
