#include "colornorm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "colornorm/layers.hpp"
#include "colornorm/model.hpp"

namespace colornorm {

GradCheckResult gradient_check(const std::function<double()>& loss, const std::vector<GradCheckBlock>& blocks,
                               Rng& rng, const GradCheckOptions& options) {
  struct Coord {
    std::size_t block;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].values.size(); ++i) coords.push_back({b, i});
  }
  // Partial Fisher-Yates: the first `take` entries form the sample.
  const std::size_t take = std::min(options.samples, coords.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(coords.size() - i);
    std::swap(coords[i], coords[j]);
  }

  GradCheckResult result;
  result.coordinates = take;
  for (std::size_t s = 0; s < take; ++s) {
    const auto [b, i] = coords[s];
    double& value = blocks[b].values[i];
    const double saved = value;
    value = saved + options.step;
    const double plus = loss();
    value = saved - options.step;
    const double minus = loss();
    value = saved;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double analytic = blocks[b].analytic[i];
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), options.floor});
    const double rel = std::fabs(analytic - numeric) / denom;
    result.samples.push_back({blocks[b].name, i, analytic, numeric, rel});
    if (s == 0 || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst = blocks[b].name + "[" + std::to_string(i) + "]";
    }
  }
  return result;
}

namespace {

TensorD random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform_double(lo, hi);
  return t;
}

// Values bounded away from zero so a finite-difference step never straddles
// a kink.
TensorD random_away_from_zero(Shape shape, Rng& rng, double margin) {
  TensorD t(std::move(shape));
  for (double& v : t.data()) {
    const double magnitude = rng.uniform_double(margin, 1.0);
    v = rng.below(2) ? magnitude : -magnitude;
  }
  return t;
}

double probe(const TensorD& a, const TensorD& v) {
  return std::inner_product(a.data().begin(), a.data().end(), v.data().begin(), 0.0);
}

std::span<const double> span_of(const TensorD& t) { return t.data(); }

}  // namespace

GradCheckResult check_conv2d(std::size_t dilation, Rng& rng) {
  TensorD input = random_tensor({1, 2, 10, 10}, rng);
  ConvParams<double> params{random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng), dilation};
  const TensorD v = random_tensor({1, 3, 10, 10}, rng);
  const ConvGrads<double> grads = conv2d_backward(input, params, v);
  auto loss = [&] { return probe(conv2d_forward(input, params), v); };
  return gradient_check(loss,
                        {{"input", input.data(), span_of(grads.input)},
                         {"weights", params.weights.data(), span_of(grads.weights)},
                         {"bias", params.bias.data(), span_of(grads.bias)}},
                        rng, {.samples = 200, .step = 1e-3});
}

GradCheckResult check_batchnorm(Rng& rng) {
  TensorD input = random_tensor({4, 3, 5, 5}, rng);
  BatchNormParams<double> params = BatchNormParams<double>::identity(3);
  params.gamma = random_tensor({3}, rng, 0.5, 1.5);
  params.beta = random_tensor({3}, rng);
  const TensorD v = random_tensor({4, 3, 5, 5}, rng);

  BatchNormParams<double> scratch = params;
  auto cache = batchnorm_forward(input, scratch, Mode::Train).second;
  const BatchNormGrads<double> grads = batchnorm_backward(cache, v);
  auto loss = [&] {
    BatchNormParams<double> p = params;
    return probe(batchnorm_forward(input, p, Mode::Train).first, v);
  };
  return gradient_check(loss,
                        {{"input", input.data(), span_of(grads.input)},
                         {"gamma", params.gamma.data(), span_of(grads.gamma)},
                         {"beta", params.beta.data(), span_of(grads.beta)}},
                        rng, {.samples = 200, .step = 1e-5});
}

GradCheckResult check_leaky_relu(Rng& rng) {
  constexpr double kSlope = 0.01;
  TensorD input = random_away_from_zero({2, 3, 6, 6}, rng, 0.05);
  const TensorD v = random_tensor({2, 3, 6, 6}, rng);
  const TensorD grad = leaky_relu_backward(input, v, kSlope);
  auto loss = [&] { return probe(leaky_relu_forward(input, kSlope), v); };
  return gradient_check(loss, {{"input", input.data(), span_of(grad)}}, rng, {.samples = 200, .step = 1e-5});
}

GradCheckResult check_concat(Rng& rng) {
  TensorD a = random_tensor({1, 2, 8, 8}, rng);
  TensorD b = random_tensor({1, 3, 8, 8}, rng);
  const TensorD v = random_tensor({1, 5, 8, 8}, rng);
  const std::vector<TensorD> pieces = split_channels(v, {2, 3});
  auto loss = [&] { return probe(concat_channels<double>({&a, &b}), v); };
  return gradient_check(loss,
                        {{"a", a.data(), span_of(pieces[0])}, {"b", b.data(), span_of(pieces[1])}}, rng,
                        {.samples = 200, .step = 1e-3});
}

GradCheckResult check_loss(Rng& rng) {
  constexpr double kLambda = 0.1;
  const TensorD target = random_tensor({2, 3, 6, 6}, rng);
  const TensorD delta = random_away_from_zero({2, 3, 6, 6}, rng, 0.01);
  TensorD pred = add(target, delta);
  const LossResult<double> analytic = loss_l1l2(pred, target, kLambda);
  auto loss = [&] { return loss_l1l2(pred, target, kLambda).value; };
  return gradient_check(loss, {{"pred", pred.data(), span_of(analytic.grad)}}, rng, {.samples = 200, .step = 1e-5});
}

GradCheckResult check_model_end_to_end(Rng& rng, std::size_t samples) {
  constexpr double kLambda = 0.1;
  Model model = build_model(ArchSpec::reference(), rng);
  for (auto& ref : model.parameters()) {
    if (ref.name.ends_with("bias")) {
      for (float& v : ref.value->data()) v = rng.uniform(-0.1f, 0.1f);
    } else if (ref.name.ends_with("gamma")) {
      for (float& v : ref.value->data()) v = rng.uniform(0.5f, 1.5f);
    } else if (ref.name.ends_with("beta")) {
      for (float& v : ref.value->data()) v = rng.uniform(-0.2f, 0.2f);
    }
  }
  Tensor input({2, 3, 8, 8});
  Tensor target({2, 3, 8, 8});
  for (float& v : input.data()) v = rng.uniform(0.0f, 1.0f);
  for (float& v : target.data()) v = rng.uniform(0.0f, 1.0f);

  const ForwardBackwardResult<float> analytic = model.forward_backward(input, target, kLambda);

  ModelD reference = model.cast<double>();
  const TensorD input_d = input.cast<double>();
  const TensorD target_d = target.cast<double>();
  std::vector<TensorD> analytic_d;
  for (const auto& g : analytic.grads.tensors) analytic_d.push_back(g.cast<double>());

  std::vector<GradCheckBlock> blocks;
  std::vector<ParamRef<double>> refs = reference.parameters();
  for (std::size_t p = 0; p < refs.size(); ++p) {
    blocks.push_back({refs[p].name, refs[p].value->data(), span_of(analytic_d[p])});
  }
  auto loss = [&] {
    const TensorD offsets = reference.forward(input_d);
    return loss_l1l2(add(input_d, offsets), target_d, kLambda).value;
  };
  // Below ~1e-5 the 64-bit loss differences are pure rounding noise, which
  // the 1e-8 floor turns into spurious errors on exactly-zero gradients.
  return gradient_check(loss, blocks, rng, {.samples = samples, .step = 1e-4});
}

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
  Rng root(seed);
  std::vector<GradSuiteEntry> suite;
  for (std::size_t dilation : {1, 2, 4}) {
    Rng rng = root.split();
    suite.push_back({"conv2d dilation " + std::to_string(dilation), check_conv2d(dilation, rng), 1e-4});
  }
  {
    Rng rng = root.split();
    suite.push_back({"batchnorm (train)", check_batchnorm(rng), 1e-4});
  }
  {
    Rng rng = root.split();
    suite.push_back({"leaky relu", check_leaky_relu(rng), 1e-4});
  }
  {
    Rng rng = root.split();
    suite.push_back({"concat channels", check_concat(rng), 1e-4});
  }
  {
    Rng rng = root.split();
    suite.push_back({"loss l1+l2", check_loss(rng), 1e-4});
  }
  {
    Rng rng = root.split();
    suite.push_back({"model end-to-end (32-bit)", check_model_end_to_end(rng), 1e-3});
  }
  return suite;
}

}  // namespace colornorm
