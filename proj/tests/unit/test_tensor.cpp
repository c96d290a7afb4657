#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "lvnc/errors.hpp"
#include "lvnc/losses.hpp"
#include "lvnc/tensor.hpp"

using namespace lvnc;
using tensor::Tape;
using tensor::Tensor;

namespace {

Tensor random_tensor(tensor::Shape shape, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> nd;
  std::vector<double> v(tensor::shape_numel(shape));
  for (auto& x : v) x = nd(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

// Reference cross-correlation, straight from the definition.
std::vector<double> naive_conv(const Tensor& in, const Tensor& k, const Tensor& b, int pad) {
  const long n = in.dim(0), ci = in.dim(1), h = in.dim(2), w = in.dim(3);
  const long co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const long oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
  std::vector<double> out(n * co * oh * ow);
  for (long s = 0; s < n; ++s)
    for (long o = 0; o < co; ++o)
      for (long y = 0; y < oh; ++y)
        for (long x = 0; x < ow; ++x) {
          double acc = b.data()[o];
          for (long c = 0; c < ci; ++c)
            for (long dy = 0; dy < kh; ++dy)
              for (long dx = 0; dx < kw; ++dx) {
                const long iy = y + dy - pad, ix = x + dx - pad;
                if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
                acc += in.data()[((s * ci + c) * h + iy) * w + ix] * k.data()[((o * ci + c) * kh + dy) * kw + dx];
              }
          out[((s * co + o) * oh + y) * ow + x] = acc;
        }
  return out;
}

// Weighted sum so each output element gets a distinct upstream gradient.
double weighted(const Tensor& t, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t.data()[i] * w.data()[i];
  return s;
}

template <class Op>
testing::GradCheck check_unary(Op op, Tensor x, std::mt19937_64& rng, double tol) {
  Tape probe(false);
  const auto out_shape = op(probe, x).shape();
  const Tensor w = random_tensor(out_shape, rng);
  Tape tape;
  x.set_requires_grad(true);
  auto y = op(tape, x);
  auto loss = tensor::sum(tape, tensor::mul(tape, y, w));
  tape.backward(loss);
  std::vector<double> g(x.grad().begin(), x.grad().end());
  testing::GradCheck gc;
  testing::check_gradient(gc, "x", [&] { Tape t(false); return weighted(op(t, x), w); }, x, g, 1e-5, tol);
  return gc;
}

}  // namespace

TEST_CASE("conv2d of ones sums the window") {
  Tape tape;
  auto y = tensor::conv2d(tape, Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0),
                          Tensor::zeros({1}), 0);
  CHECK(y.shape() == tensor::Shape{1, 1, 1, 1});
  CHECK(y.item() == 9.0);
}

TEST_CASE("identity kernel with padding 1 reproduces the input") {
  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 1, 5, 4}, rng);
  auto k = Tensor::zeros({1, 1, 3, 3});
  k.data()[4] = 1.0;
  Tape tape;
  auto y = tensor::conv2d(tape, x, k, Tensor::zeros({1}), 1);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d matches the naive loop") {
  std::mt19937_64 rng(11);
  for (int pad : {0, 1, 2}) {
    auto x = random_tensor({2, 2, 5, 5}, rng);
    auto k = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    Tape tape;
    auto y = tensor::conv2d(tape, x, k, b, pad);
    const auto ref = naive_conv(x, k, b, pad);
    REQUIRE(y.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.data()[i] - ref[i]) <= 1e-12);
  }
  auto x = random_tensor({1, 3, 6, 4}, rng);
  auto k = random_tensor({2, 3, 1, 1}, rng);
  auto b = random_tensor({2}, rng);
  Tape tape;
  auto y = tensor::conv2d(tape, x, k, b, 0);
  const auto ref = naive_conv(x, k, b, 0);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.data()[i] - ref[i]) <= 1e-12);
}

TEST_CASE("conv2d rejects bad shapes") {
  Tape tape;
  CHECK_THROWS_AS(tensor::conv2d(tape, Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}),
                                 Tensor::zeros({1}), 1),
                  DimensionError);
  CHECK_THROWS_AS(tensor::conv2d(tape, Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 2, 2}),
                                 Tensor::zeros({1}), 0),
                  std::exception);
  CHECK_THROWS_AS(tensor::conv2d(tape, Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}),
                                 Tensor::zeros({1}), 0),
                  std::exception);
}

TEST_CASE("conv2d gradients for input, kernel and bias") {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 2, 5, 5}, rng, true);
  auto k = random_tensor({3, 2, 3, 3}, rng, true);
  auto b = random_tensor({3}, rng, true);
  const auto w = random_tensor({2, 3, 5, 5}, rng);
  Tape tape;
  tape.backward(tensor::sum(tape, tensor::mul(tape, tensor::conv2d(tape, x, k, b, 1), w)));
  auto f = [&] { Tape t(false); return weighted(tensor::conv2d(t, x, k, b, 1), w); };
  testing::GradCheck gc;
  for (auto* t : {&x, &k, &b}) {
    std::vector<double> g(t->grad().begin(), t->grad().end());
    testing::check_gradient(gc, "conv", f, *t, g, 1e-5, 1e-6);
  }
  CHECK(gc.failures == 0);
  CHECK(gc.kinks == 0);
}

TEST_CASE("relu forward and gradient") {
  Tape tape;
  auto x = Tensor({3}, {-1.0, 0.0, 2.0}, true);
  auto y = tensor::relu(tape, x);
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{0.0, 0.0, 2.0});
  tape.backward(tensor::sum(tape, y));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{0.0, 0.0, 1.0});

  Tape t2;
  auto neg = Tensor::full({2, 3}, -0.5, true);
  auto z = tensor::relu(t2, neg);
  t2.backward(tensor::sum(t2, z));
  for (double v : z.data()) CHECK(v == 0.0);
  for (double g : neg.grad()) CHECK(g == 0.0);

  std::mt19937_64 rng(8);
  for (int s = 0; s < 10; ++s) {
    auto gc = check_unary([](Tape& t, const Tensor& v) { return tensor::relu(t, v); },
                          random_tensor({1, 2, 4, 4}, rng), rng, 1e-6);
    CHECK(gc.failures == 0);
  }
}

TEST_CASE("maxpool2 forward, ties and errors") {
  Tape tape;
  auto y = tensor::maxpool2(tape, Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(y.item() == 4.0);

  auto c = Tensor::full({1, 1, 4, 4}, 7.0, true);
  Tape t2;
  auto p = tensor::maxpool2(t2, c);
  for (double v : p.data()) CHECK(v == 7.0);
  t2.backward(tensor::sum(t2, p));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t col = 0; col < 4; ++col)
      CHECK(c.grad()[r * 4 + col] == ((r % 2 == 0 && col % 2 == 0) ? 1.0 : 0.0));

  CHECK_THROWS_AS(tensor::maxpool2(tape, Tensor::zeros({1, 1, 3, 4})), DimensionError);
  CHECK_THROWS_AS(tensor::maxpool2(tape, Tensor::zeros({1, 1, 4, 5})), DimensionError);
}

TEST_CASE("maxpool2 matches exhaustive window max and its gradient") {
  std::mt19937_64 rng(21);
  auto x = random_tensor({1, 1, 6, 6}, rng);
  Tape tape;
  auto y = tensor::maxpool2(tape, x);
  REQUIRE(y.shape() == tensor::Shape{1, 1, 3, 3});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      double m = -1e300;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, x.data()[(2 * r + dy) * 6 + 2 * c + dx]);
      CHECK(y.data()[r * 3 + c] == m);
    }
  for (int s = 0; s < 10; ++s) {
    auto gc = check_unary([](Tape& t, const Tensor& v) { return tensor::maxpool2(t, v); },
                          random_tensor({2, 2, 4, 6}, rng), rng, 1e-6);
    CHECK(gc.failures == 0);
  }
}

TEST_CASE("upsample2 duplicates and composes with maxpool2") {
  Tape tape;
  auto y = tensor::upsample2(tape, Tensor({1, 1, 1, 1}, {5.0}));
  CHECK(y.shape() == tensor::Shape{1, 1, 2, 2});
  for (double v : y.data()) CHECK(v == 5.0);

  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 3, 3, 4}, rng);
  auto back = tensor::maxpool2(tape, tensor::upsample2(tape, x));
  CHECK(back.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.data()[i] == x.data()[i]);

  // Block-constant input survives pool then upsample.
  auto blocks = tensor::upsample2(tape, x);
  auto again = tensor::upsample2(tape, tensor::maxpool2(tape, blocks));
  for (std::size_t i = 0; i < blocks.numel(); ++i) CHECK(again.data()[i] == blocks.data()[i]);

  for (int s = 0; s < 10; ++s) {
    auto gc = check_unary([](Tape& t, const Tensor& v) { return tensor::upsample2(t, v); },
                          random_tensor({1, 2, 3, 3}, rng), rng, 1e-6);
    CHECK(gc.failures == 0);
  }
}

TEST_CASE("concat_channels shapes, round trip and gradient split") {
  std::mt19937_64 rng(4);
  auto a = random_tensor({1, 2, 4, 4}, rng, true);
  auto b = random_tensor({1, 3, 4, 4}, rng, true);
  Tape tape;
  auto y = tensor::concat_channels(tape, a, b);
  CHECK(y.shape() == tensor::Shape{1, 5, 4, 4});
  auto sa = tensor::slice_channels(y, 0, 2), sb = tensor::slice_channels(y, 2, 5);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(sa.data()[i] == a.data()[i]);
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(sb.data()[i] == b.data()[i]);

  const auto w = random_tensor({1, 5, 4, 4}, rng);
  tape.backward(tensor::sum(tape, tensor::mul(tape, y, w)));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.grad()[i] == w.data()[i]);
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(b.grad()[i] == w.data()[a.numel() + i]);

  auto empty = Tensor::zeros({1, 0, 4, 4});
  auto same = tensor::concat_channels(tape, a, empty);
  CHECK(same.shape() == a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(same.data()[i] == a.data()[i]);

  CHECK_THROWS_AS(tensor::concat_channels(tape, a, Tensor::zeros({1, 1, 4, 2})), DimensionError);
}

TEST_CASE("softmax_channels is a stable per-pixel distribution") {
  Tape tape;
  auto eq = tensor::softmax_channels(tape, Tensor::full({1, 4, 2, 2}, 3.0));
  for (double v : eq.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  auto big = tensor::softmax_channels(tape, Tensor({1, 2, 1, 1}, {1000.0, 0.0}));
  CHECK(big.data()[0] == 1.0);
  CHECK(big.data()[1] == 0.0);

  std::mt19937_64 rng(9);
  auto x = random_tensor({3, 4, 5, 5}, rng);
  auto p = tensor::softmax_channels(tape, tensor::scale(tape, x, 5.0));
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t j = 0; j < 25; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        const double v = p.data()[(n * 4 + c) * 25 + j];
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  for (int s = 0; s < 10; ++s) {
    auto gc = check_unary([](Tape& t, const Tensor& v) { return tensor::softmax_channels(t, v); },
                          random_tensor({2, 4, 3, 3}, rng), rng, 1e-6);
    CHECK(gc.failures == 0);
  }
}

TEST_CASE("backward on simple expressions") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 3}, rng, true);
  Tape tape;
  tape.backward(tensor::sum(tape, x));
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  Tape t2;
  t2.backward(tensor::sum(t2, tensor::mul(t2, x, x)));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 2.0 * x.data()[i]);

  // Parameters that do not reach the loss keep a zero gradient.
  auto unused = random_tensor({4}, rng, true);
  x.zero_grad();
  Tape t3;
  auto other = tensor::scale(t3, unused, 3.0);
  auto loss = tensor::mean(t3, x);
  (void)other;
  t3.backward(loss);
  for (double g : unused.grad()) CHECK(g == 0.0);
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0 / 6.0));

  CHECK_THROWS_AS(t3.backward(x), ContractError);
  Tape t4;
  CHECK_THROWS_AS(t4.backward(tensor::sum(t2, x)), ContractError);
}

TEST_CASE("tape order is topological and each node runs once") {
  std::mt19937_64 rng(6);
  auto x = random_tensor({1, 2, 4, 4}, rng, true);
  Tape tape;
  auto a = tensor::relu(tape, x);
  auto b = tensor::add(tape, a, x);
  auto c = tensor::maxpool2(tape, b);
  auto loss = tensor::sum(tape, c);
  CHECK(tape.size() == 4);
  CHECK(tape.kind(0) == tensor::OpKind::Relu);
  CHECK(tape.kind(3) == tensor::OpKind::Sum);
  CHECK(tape.backward(loss) == 4);

  // A non-recording tape stores nothing.
  Tape off(false);
  tensor::relu(off, x);
  CHECK(off.size() == 0);
}

TEST_CASE("finite_diff_grad basics") {
  std::mt19937_64 rng(12);
  auto x = random_tensor({3, 2}, rng);
  auto g = tensor::finite_diff_grad(
      [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data()) s += v;
        return s;
      },
      x, 1e-5);
  for (double v : g.data()) CHECK(std::abs(v - 1.0) <= 1e-9);

  auto three = Tensor({1}, {3.0});
  auto g2 = tensor::finite_diff_grad([](const Tensor& t) { return t.data()[0] * t.data()[0]; }, three, 1e-5);
  CHECK(std::abs(g2.data()[0] - 6.0) <= 1e-9);
  CHECK(three.data()[0] == 3.0);
  CHECK_THROWS_AS(tensor::finite_diff_grad([](const Tensor&) { return 0.0; }, three, 0.0), ContractError);
}

TEST_CASE("finite_diff_grad agrees with backward through softmax and Lovász") {
  std::mt19937_64 rng(31);
  for (int s = 0; s < 5; ++s) {
    auto logits = random_tensor({2, 4, 4, 4}, rng, true);
    std::vector<mask::SegMask> labels;
    for (int i = 0; i < 2; ++i) {
      std::vector<std::uint8_t> l(16);
      for (auto& v : l) v = static_cast<std::uint8_t>(rng() % 4);
      labels.emplace_back(4, 4, l);
    }
    Tape tape;
    tape.backward(losses::lovasz_softmax(tape, tensor::softmax_channels(tape, logits), labels));
    std::vector<double> analytic(logits.grad().begin(), logits.grad().end());
    auto fd = tensor::finite_diff_grad(
        [&](const Tensor& t) {
          Tape off(false);
          return losses::lovasz_softmax(off, tensor::softmax_channels(off, t), labels).item();
        },
        logits, 1e-5);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
      if (!testing::grad_close(analytic[i], fd.data()[i], 1e-3, 1e-8)) ++bad;
    // Random continuous inputs almost never sit on a sort-order swap.
    CHECK(bad == 0);
  }
}

TEST_CASE("forward passes are bit-identical") {
  std::mt19937_64 rng(14);
  auto x = random_tensor({2, 2, 6, 6}, rng);
  auto k = random_tensor({3, 2, 3, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto run = [&] {
    Tape t(false);
    auto y = tensor::softmax_channels(t, tensor::relu(t, tensor::conv2d(t, x, k, b, 1)));
    return std::vector<double>(y.data().begin(), y.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("tensor construction contracts") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), DimensionError);
  auto t = Tensor::scalar(2.5, true);
  CHECK(t.item() == 2.5);
  CHECK(t.has_grad());
  auto c = t.clone();
  c.data()[0] = 1.0;
  CHECK(t.item() == 2.5);
  CHECK_FALSE(c.same_storage(t));
  CHECK_THROWS_AS(Tensor::zeros({2, 2}).item(), ContractError);
}
