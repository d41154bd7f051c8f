#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "colornorm/adam.hpp"
#include "colornorm/error.hpp"
#include "colornorm/gradcheck.hpp"
#include "colornorm/layers.hpp"
#include "colornorm/rng.hpp"

namespace cn = colornorm;

namespace {

cn::TensorD random_tensor(const cn::Shape& shape, cn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  cn::TensorD t(shape);
  for (auto& v : t.data()) v = rng.uniform_double(lo, hi);
  return t;
}

cn::ConvParams<double> random_conv(std::size_t out, std::size_t in, std::size_t k, std::size_t d, cn::Rng& rng) {
  auto p = cn::ConvParams<double>::zeros(out, in, k, d);
  for (auto& v : p.weights.data()) v = rng.uniform_double(-1.0, 1.0);
  for (auto& v : p.bias.data()) v = rng.uniform_double(-1.0, 1.0);
  return p;
}

// Direct transcription of the same-padded dilated correlation.
cn::TensorD naive_conv(const cn::TensorD& in, const cn::ConvParams<double>& p) {
  const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t o = p.out_channels(), k = p.kernel();
  const long r = static_cast<long>((k - 1) / 2), d = static_cast<long>(p.dilation);
  cn::TensorD out({n, o, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double acc = p.bias[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long sy = static_cast<long>(y) + d * (static_cast<long>(i) - r);
                const long sx = static_cast<long>(x) + d * (static_cast<long>(j) - r);
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                acc += p.weights[((oc * c + ic) * k + i) * k + j] * in.at(b, ic, sy, sx);
              }
          out.at(b, oc, y, x) = acc;
        }
  return out;
}

double dot(const cn::TensorD& a, const cn::TensorD& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); }

// Central difference of f with respect to v[i].
double central(const std::function<double()>& f, double& v, double h) {
  const double saved = v;
  v = saved + h;
  const double up = f();
  v = saved - h;
  const double down = f();
  v = saved;
  return (up - down) / (2 * h);
}

}  // namespace

TEST(Conv2d, AllOnesCountsInBoundsTaps) {
  auto p = cn::ConvParams<float>::zeros(1, 1, 3, 1);
  p.weights.fill(1.0f);
  const cn::Tensor out = cn::conv2d_forward(cn::Tensor({1, 1, 3, 3}, 1.0f), p);
  EXPECT_EQ(out.at(0, 0, 1, 1), 9.0f);
  EXPECT_EQ(out.at(0, 0, 0, 0), 4.0f);
  EXPECT_EQ(out.at(0, 0, 2, 2), 4.0f);
  EXPECT_EQ(out.at(0, 0, 0, 1), 6.0f);
  EXPECT_EQ(out.at(0, 0, 1, 0), 6.0f);
}

TEST(Conv2d, DilatedCornerAndCenter) {
  auto p = cn::ConvParams<float>::zeros(1, 1, 3, 2);
  p.weights.fill(1.0f);
  const cn::Tensor out = cn::conv2d_forward(cn::Tensor({1, 1, 5, 5}, 1.0f), p);
  EXPECT_EQ(out.at(0, 0, 0, 0), 4.0f);
  EXPECT_EQ(out.at(0, 0, 2, 2), 9.0f);
}

TEST(Conv2d, IdentityKernel) {
  cn::Rng rng(1);
  cn::Tensor x({2, 3, 9, 7});
  for (auto& v : x.data()) v = rng.uniform(-1.0f, 1.0f);
  auto p = cn::ConvParams<float>::zeros(3, 3, 3, 1);
  for (std::size_t c = 0; c < 3; ++c) p.weights[(c * 3 + c) * 9 + 4] = 1.0f;
  EXPECT_EQ(cn::conv2d_forward(x, p), x);
}

TEST(Conv2d, MatchesNaiveCorrelation) {
  cn::Rng rng(2);
  for (std::size_t k : {1u, 3u, 5u}) {
    for (std::size_t d : {1u, 2u, 4u}) {
      const auto x = random_tensor({2, 5, 11, 37}, rng);
      const auto p = random_conv(7, 5, k, d, rng);
      const auto got = cn::conv2d_forward(x, p);
      const auto want = naive_conv(x, p);
      for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << "k " << k << " d " << d;
    }
  }
}

TEST(Conv2d, PreservesSpatialSize) {
  cn::Rng rng(3);
  for (std::size_t k : {1u, 3u}) {
    for (std::size_t d : {1u, 2u, 4u}) {
      for (std::size_t h = 1; h <= 16; h += 3) {
        for (std::size_t w = 1; w <= 16; w += 5) {
          const auto out = cn::conv2d_forward(random_tensor({1, 2, h, w}, rng), random_conv(3, 2, k, d, rng));
          ASSERT_EQ(out.shape(), (cn::Shape{1, 3, h, w}));
        }
      }
    }
  }
}

TEST(Conv2d, RejectsBadArguments) {
  EXPECT_THROW(cn::ConvParams<float>::zeros(1, 1, 2, 1), cn::Error);
  EXPECT_THROW(cn::ConvParams<float>::zeros(1, 1, 3, 0), cn::Error);
  auto p = cn::ConvParams<float>::zeros(1, 2, 3, 1);
  try {
    cn::conv2d_forward(cn::Tensor({1, 3, 4, 4}), p);
    FAIL();
  } catch (const cn::Error& e) {
    EXPECT_EQ(e.code(), cn::ErrorCode::ShapeMismatch);
  }
}

TEST(Conv2dBackward, ZeroAndOnesExamples) {
  auto p = cn::ConvParams<float>::zeros(1, 1, 3, 1);
  p.weights.fill(1.0f);
  const cn::Tensor x({1, 1, 3, 3}, 1.0f);
  const auto zero = cn::conv2d_backward(x, p, cn::Tensor({1, 1, 3, 3}));
  for (float v : zero.weights.data()) EXPECT_EQ(v, 0.0f);
  for (float v : zero.input.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(zero.bias[0], 0.0f);

  const auto ones = cn::conv2d_backward(x, p, cn::Tensor({1, 1, 3, 3}, 1.0f));
  EXPECT_EQ(ones.bias[0], 9.0f);
  EXPECT_THROW(cn::conv2d_backward(x, p, cn::Tensor({1, 1, 3, 2})), cn::Error);
}

TEST(Conv2dBackward, MatchesFiniteDifferences) {
  cn::Rng rng(4);
  auto x = random_tensor({1, 2, 6, 6}, rng);
  auto p = random_conv(2, 2, 3, 2, rng);
  const auto v = random_tensor({1, 2, 6, 6}, rng);
  const auto objective = [&] { return dot(naive_conv(x, p), v); };
  const auto g = cn::conv2d_backward(x, p, v);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, rel_err(g.input[i], central(objective, x[i], 1e-3)));
  for (std::size_t i = 0; i < p.weights.size(); ++i)
    worst = std::max(worst, rel_err(g.weights[i], central(objective, p.weights[i], 1e-3)));
  for (std::size_t i = 0; i < p.bias.size(); ++i)
    worst = std::max(worst, rel_err(g.bias[i], central(objective, p.bias[i], 1e-3)));
  EXPECT_LT(worst, 1e-4);
}

TEST(Conv2dBackward, IsExactAdjoint) {
  cn::Rng rng(5);
  for (std::size_t d : {1u, 2u, 4u}) {
    const auto u = random_tensor({2, 4, 13, 19}, rng);
    const auto v = random_tensor({2, 3, 13, 19}, rng);
    auto p = random_conv(3, 4, 3, d, rng);
    p.bias.fill(0.0);  // linear part only
    const double lhs = dot(cn::conv2d_forward(u, p), v);
    const double rhs = dot(u, cn::conv2d_backward(u, p, v).input);
    EXPECT_LT(std::abs(lhs - rhs) / std::abs(lhs), 1e-4) << "dilation " << d;
  }
}

TEST(BatchNorm, ZScoreExample) {
  auto p = cn::BatchNormParams<double>::identity(1);
  p.eps = 0.0;
  const auto [out, cache] = cn::batchnorm_forward(cn::TensorD({1, 1, 1, 3}, {1.0, 2.0, 3.0}), p, cn::Mode::Train);
  EXPECT_NEAR(out[0], -1.224744871, 1e-6);
  EXPECT_NEAR(out[1], 0.0, 1e-12);
  EXPECT_NEAR(out[2], 1.224744871, 1e-6);
  EXPECT_NEAR(p.running_mean[0], 0.2, 1e-12);           // 0.9*0 + 0.1*2
  EXPECT_NEAR(p.running_var[0], 0.9 + 0.1 * 2.0 / 3.0, 1e-12);  // biased variance
}

TEST(BatchNorm, InferIdentity) {
  cn::Rng rng(6);
  auto p = cn::BatchNormParams<double>::identity(3);
  const auto x = random_tensor({2, 3, 4, 4}, rng);
  const auto [out, cache] = cn::batchnorm_forward(x, p, cn::Mode::Infer);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out[i], x[i], 1e-5 * std::abs(x[i]) + 1e-12);
  EXPECT_THROW(cn::batchnorm_backward(cache, out), cn::Error);
}

TEST(BatchNorm, TrainOutputIsStandardized) {
  cn::Rng rng(7);
  auto p = cn::BatchNormParams<float>::identity(3);
  cn::Tensor x({4, 3, 8, 8});
  for (auto& v : x.data()) v = rng.uniform(-3.0f, 5.0f);
  const auto [out, cache] = cn::batchnorm_forward(x, p, cn::Mode::Train);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 64; ++i) {
        const double v = out[(b * 3 + c) * 64 + i];
        s += v;
        s2 += v * v;
        ++n;
      }
    const double mean = s / n;
    EXPECT_LT(std::abs(mean), 1e-5);
    EXPECT_LT(std::abs(s2 / n - mean * mean - 1.0), 1e-4);
  }
}

TEST(BatchNorm, SingleElementIsDegenerate) {
  auto p = cn::BatchNormParams<float>::identity(2);
  try {
    cn::batchnorm_forward(cn::Tensor({1, 2, 1, 1}), p, cn::Mode::Train);
    FAIL();
  } catch (const cn::Error& e) {
    EXPECT_EQ(e.code(), cn::ErrorCode::DegenerateBatch);
  }
}

TEST(BatchNormBackward, ZerosAndBetaGradient) {
  cn::Rng rng(8);
  auto p = cn::BatchNormParams<double>::identity(3);
  const auto x = random_tensor({4, 3, 5, 5}, rng);
  const auto [out, cache] = cn::batchnorm_forward(x, p, cn::Mode::Train);
  const auto zero = cn::batchnorm_backward(cache, cn::TensorD(x.shape()));
  for (double v : zero.input.data()) EXPECT_EQ(v, 0.0);

  const auto g = random_tensor(x.shape(), rng);
  const auto grads = cn::batchnorm_backward(cache, g);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 25; ++i) s += g[(b * 3 + c) * 25 + i];
    EXPECT_NEAR(grads.beta[c], s, 1e-12);
  }
}

TEST(BatchNormBackward, MatchesFiniteDifferences) {
  cn::Rng rng(9);
  auto x = random_tensor({4, 3, 5, 5}, rng);
  auto p = cn::BatchNormParams<double>::identity(3);
  for (auto& v : p.gamma.data()) v = rng.uniform_double(0.5, 1.5);
  for (auto& v : p.beta.data()) v = rng.uniform_double(-0.5, 0.5);
  const auto v = random_tensor(x.shape(), rng);
  const auto objective = [&] {
    auto q = p;
    return dot(cn::batchnorm_forward(x, q, cn::Mode::Train).first, v);
  };
  auto q = p;
  const auto cache = cn::batchnorm_forward(x, q, cn::Mode::Train).second;
  const auto g = cn::batchnorm_backward(cache, v);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); i += 3) worst = std::max(worst, rel_err(g.input[i], central(objective, x[i], 1e-5)));
  for (std::size_t c = 0; c < 3; ++c) {
    worst = std::max(worst, rel_err(g.gamma[c], central(objective, p.gamma[c], 1e-5)));
    worst = std::max(worst, rel_err(g.beta[c], central(objective, p.beta[c], 1e-5)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(LeakyRelu, Examples) {
  const cn::Tensor x({1, 1, 1, 3}, {2.0f, -2.0f, 0.0f});
  const auto y = cn::leaky_relu_forward(x, 0.01);
  EXPECT_EQ(y[0], 2.0f);
  EXPECT_FLOAT_EQ(y[1], -0.02f);
  EXPECT_EQ(y[2], 0.0f);
  const auto g = cn::leaky_relu_backward(cn::Tensor({1, 1, 1, 2}, {-1.0f, 0.0f}), cn::Tensor({1, 1, 1, 2}, 1.0f), 0.01);
  EXPECT_FLOAT_EQ(g[0], 0.01f);
  EXPECT_EQ(g[1], 1.0f);
}

TEST(Concat, ShapesRoundTripAndIdentity) {
  cn::Rng rng(10);
  const auto a = random_tensor({1, 3, 8, 8}, rng);
  const auto b = random_tensor({1, 3, 8, 8}, rng);
  const auto ab = cn::concat_channels<double>({&a, &b});
  EXPECT_EQ(ab.shape(), (cn::Shape{1, 6, 8, 8}));
  const auto parts = cn::split_channels(ab, {3, 3});
  EXPECT_EQ(parts[0], a);
  EXPECT_EQ(parts[1], b);
  EXPECT_EQ(cn::concat_channels<double>({&a}), a);
  const auto c = random_tensor({1, 3, 8, 7}, rng);
  EXPECT_THROW((cn::concat_channels<double>({&a, &c})), cn::Error);
}

TEST(Concat, SplitIsAdjoint) {
  cn::Rng rng(12);
  const auto a = random_tensor({2, 2, 5, 5}, rng), b = random_tensor({2, 4, 5, 5}, rng);
  const auto v = random_tensor({2, 6, 5, 5}, rng);
  const auto vs = cn::split_channels(v, {2, 4});
  const double lhs = dot(cn::concat_channels<double>({&a, &b}), v);
  const double rhs = dot(a, vs[0]) + dot(b, vs[1]);
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::abs(lhs));
}

TEST(Loss, Examples) {
  const cn::Tensor t({1, 3, 4, 4}, 0.5f);
  const auto zero = cn::loss_l1l2(t, t, 0.1);
  EXPECT_EQ(zero.value, 0.0);
  for (float g : zero.grad.data()) EXPECT_EQ(g, 0.0f);

  const cn::TensorD p({1, 3, 4, 4}, 0.6), q({1, 3, 4, 4}, 0.5);
  EXPECT_NEAR(cn::loss_l1l2(p, q, 0.1).value, 0.101, 1e-12);
  EXPECT_THROW(cn::loss_l1l2(p, cn::TensorD({1, 3, 4, 3}), 0.1), cn::Error);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  cn::Rng rng(13);
  auto pred = random_tensor({2, 3, 4, 4}, rng);
  const auto target = random_tensor({2, 3, 4, 4}, rng);
  const auto g = cn::loss_l1l2(pred, target, 0.1).grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto f = [&] { return cn::loss_l1l2(pred, target, 0.1).value; };
    worst = std::max(worst, rel_err(g[i], central(f, pred[i], 1e-6)));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Loss, LinearInLambda) {
  cn::Rng rng(14);
  const auto p = random_tensor({1, 3, 6, 6}, rng), t = random_tensor({1, 3, 6, 6}, rng);
  double msq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) msq += (p[i] - t[i]) * (p[i] - t[i]);
  msq /= static_cast<double>(p.size());
  EXPECT_NEAR(cn::loss_l1l2(p, t, 0.2).value - cn::loss_l1l2(p, t, 0.1).value, 0.1 * msq, 1e-12);
}

namespace {

struct OneParam {
  cn::Tensor value;
  std::vector<cn::ParamRef<float>> refs() { return {{"w", &value}}; }
};

cn::Gradients<float> grads_of(float g, std::size_t n) { return {{"w"}, {cn::Tensor({n}, g)}}; }

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  OneParam p{cn::Tensor({4}, 1.0f)};
  cn::AdamState<float> state;
  cn::adam_step(p.refs(), grads_of(0.5f, 4), state);
  EXPECT_EQ(state.t, 1u);
  for (float v : p.value.data()) EXPECT_NEAR(v, 1.0f - 0.001f, 1e-7);
}

TEST(Adam, ZeroGradientIsIdentity) {
  OneParam p{cn::Tensor({4}, 0.25f)};
  cn::AdamState<float> state;
  for (int i = 0; i < 5; ++i) cn::adam_step(p.refs(), grads_of(0.0f, 4), state);
  for (float v : p.value.data()) EXPECT_EQ(v, 0.25f);
  for (float v : state.v[0].data()) EXPECT_GE(v, 0.0f);
}

TEST(Adam, MatchesScalarReference) {
  OneParam p{cn::Tensor({1}, 0.0f)};
  cn::AdamState<float> state;
  double theta = 0.0, m = 0.0, v = 0.0;
  const double gs[] = {0.3, -0.1, 0.7, 0.2, -0.4};
  for (int t = 1; t <= 5; ++t) {
    const double g = gs[t - 1];
    cn::adam_step(p.refs(), grads_of(static_cast<float>(g), 1), state);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta -= 0.001 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.value[0], theta, 1e-7) << "step " << t;
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  OneParam p{cn::Tensor({2}, 1.0f)};
  cn::AdamState<float> state;
  try {
    cn::adam_step(p.refs(), grads_of(std::nanf(""), 2), state);
    FAIL();
  } catch (const cn::Error& e) {
    EXPECT_EQ(e.code(), cn::ErrorCode::NonFinite);
    EXPECT_NE(std::string(e.what()).find("w"), std::string::npos);
  }
  EXPECT_EQ(p.value[0], 1.0f);
  EXPECT_EQ(state.t, 0u);
}

TEST(GradCheck, LayerSuiteBelowTolerance) {
  cn::Rng rng(2024);
  for (std::size_t d : {1u, 2u, 4u}) {
    const auto r = cn::check_conv2d(d, rng);
    EXPECT_GE(r.coordinates, 200u);
    EXPECT_LT(r.max_rel_error, 1e-4) << "conv dilation " << d << " worst " << r.worst;
  }
  EXPECT_LT(cn::check_batchnorm(rng).max_rel_error, 1e-4);
  EXPECT_LT(cn::check_leaky_relu(rng).max_rel_error, 1e-4);
  EXPECT_LT(cn::check_concat(rng).max_rel_error, 1e-4);
  EXPECT_LT(cn::check_loss(rng).max_rel_error, 1e-4);
}
