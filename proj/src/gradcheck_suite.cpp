#include "paramisp/gradcheck_suite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "paramisp/canonet.hpp"
#include "paramisp/features.hpp"
#include "paramisp/globalnet.hpp"
#include "paramisp/grad_check.hpp"
#include "paramisp/localnet.hpp"
#include "paramisp/ops.hpp"
#include "paramisp/paramnet.hpp"
#include "paramisp/pipeline.hpp"
#include "paramisp/training.hpp"

namespace paramisp {

namespace {

using T = Tensor<double>;
using Rng = std::mt19937_64;

T uniform(Shape s, double lo, double hi, Rng& rng, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<size_t>(shape_numel(s)));
  for (auto& x : v) x = u(rng);
  return T(std::move(s), std::move(v), grad);
}

// Magnitudes in [0.1, 1] with random sign: clear of the kink at 0.
T signed_away(Shape s, Rng& rng) {
  T t = uniform(std::move(s), 0.1, 1.0, rng);
  std::bernoulli_distribution flip(0.5);
  for (auto& x : t.data_mut())
    if (flip(rng)) x = -x;
  return t;
}

// Distinct values on a 0.01 grid plus jitter: no near-ties for max reductions.
T distinct(Shape s, Rng& rng) {
  const int64_t n = shape_numel(s);
  std::vector<double> v(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) v[i] = -1.0 + 0.01 * static_cast<double>(i);
  std::shuffle(v.begin(), v.end(), rng);
  std::uniform_real_distribution<double> j(-0.002, 0.002);
  for (auto& x : v) x += j(rng);
  return T(std::move(s), std::move(v), true);
}

// Image values clear of the soft-histogram breakpoints (odd multiples of 1/56)
// and of the overexposure threshold 0.9.
T histogram_safe(Shape s, Rng& rng) {
  const int64_t n = shape_numel(s);
  std::uniform_int_distribution<int> k(1, 27);
  std::uniform_real_distribution<double> off(-0.5, 0.5);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) {
    int even = 2 * k(rng);
    if (even == 50) even = 48;
    x = (even + off(rng)) / 56.0;
  }
  return T(std::move(s), std::move(v), true);
}

// Zero-initialized tensors would hide paths (e.g. through gates after a zero head).
void randomize_zero_tensors(const std::vector<T>& params, Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.05);
  for (T p : params) {
    auto d = p.data_mut();
    if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; }))
      for (auto& x : d) x = n(rng);
  }
}

struct Suite {
  uint64_t seed;
  Rng rng;
  std::vector<GradcheckEntry> out;

  void check(const std::string& name, const std::function<T()>& f, const std::vector<T>& params, double eps = 1e-6) {
    GradCheckOptions o;
    o.eps = eps;
    o.seed = seed + out.size();
    const auto r = grad_check(f, params, o);
    out.push_back({name, r.max_rel_error, r.coords_checked});
  }

  void unary(const std::string& name, const std::function<T(const T&)>& op, T x) {
    const T w = uniform(op(x).shape(), -1.0, 1.0, rng, false);
    check("op/" + name, [=] { return sum(mul(op(x), w)); }, {x});
  }

  void binary(const std::string& name, const std::function<T(const T&, const T&)>& op, T a, T b) {
    Shape ys = op(a, b).shape();
    const T w = uniform(ys, -1.0, 1.0, rng, false);
    check("op/" + name, [=] { return sum(mul(op(a, b), w)); }, {a, b});
  }

  void primitives() {
    binary("add", [](const T& a, const T& b) { return add(a, b); }, uniform({2, 3, 4}, -1, 1, rng),
           uniform({2, 1, 4}, -1, 1, rng));
    binary("sub", [](const T& a, const T& b) { return sub(a, b); }, uniform({2, 3, 4}, -1, 1, rng),
           uniform({1, 3, 1}, -1, 1, rng));
    binary("mul", [](const T& a, const T& b) { return mul(a, b); }, uniform({3, 4, 4}, -1, 1, rng),
           uniform({3, 1, 1}, -1, 1, rng));
    binary("div", [](const T& a, const T& b) { return div(a, b); }, uniform({3, 4, 4}, -1, 1, rng),
           uniform({3, 4, 4}, 0.5, 2, rng));
    binary("pow", [](const T& a, const T& b) { return pow(a, b); }, uniform({3, 4, 4}, 0.2, 2, rng),
           uniform({3, 1, 1}, 0.3, 2.5, rng));
    unary("add_scalar", [](const T& x) { return add_scalar(x, 0.7); }, uniform({2, 5}, -1, 1, rng));
    unary("mul_scalar", [](const T& x) { return mul_scalar(x, -1.3); }, uniform({2, 5}, -1, 1, rng));
    unary("pow_scalar", [](const T& x) { return pow_scalar(x, 2.2); }, uniform({2, 5}, 0.1, 2, rng));
    unary("neg", [](const T& x) { return neg(x); }, uniform({2, 5}, -1, 1, rng));
    unary("exp", [](const T& x) { return exp(x); }, uniform({2, 5}, -2, 2, rng));
    unary("log", [](const T& x) { return log(x); }, uniform({2, 5}, 0.1, 3, rng));
    unary("abs", [](const T& x) { return abs(x); }, signed_away({2, 5}, rng));
    unary("relu", [](const T& x) { return relu(x); }, signed_away({2, 5}, rng));
    unary("leaky_relu", [](const T& x) { return leaky_relu(x); }, signed_away({2, 5}, rng));
    unary("sigmoid", [](const T& x) { return sigmoid(x); }, uniform({2, 5}, -4, 4, rng));
    unary("softplus", [](const T& x) { return softplus(x); }, uniform({2, 5}, -4, 4, rng));
    unary("sqrt", [](const T& x) { return sqrt(x); }, uniform({2, 5}, 0.1, 3, rng));
    unary("sin", [](const T& x) { return sin(x); }, uniform({2, 5}, -3, 3, rng));
    unary("cos", [](const T& x) { return cos(x); }, uniform({2, 5}, -3, 3, rng));
    {
      // +-(0.1..1) against bounds +-0.55: values sit clear of both.
      T x = signed_away({4, 5}, rng);
      for (auto& v : x.data_mut())
        if (std::abs(std::abs(v) - 0.55) < 0.05) v = v > 0 ? 0.3 : -0.3;
      unary("clamp", [](const T& v) { return clamp(v, -0.55, 0.55); }, x);
    }
    unary("sum", [](const T& x) { return mul(sum(x), sum(x)); }, uniform({3, 4}, -1, 1, rng));
    unary("mean", [](const T& x) { return mul(mean(x), mean(x)); }, uniform({3, 4}, -1, 1, rng));
    binary("matmul", [](const T& a, const T& b) { return matmul(a, b); }, uniform({3, 5}, -1, 1, rng),
           uniform({5, 4}, -1, 1, rng));
    for (auto [mode, label] : {std::pair{PadMode::Zero, "zero"}, std::pair{PadMode::Reflect, "reflect"},
                               std::pair{PadMode::Replicate, "replicate"}}) {
      for (int stride : {1, 2}) {
        T x = uniform({2, 6, 6}, -1, 1, rng), k = uniform({3, 2, 3, 3}, -1, 1, rng), b = uniform({3}, -1, 1, rng);
        const T w = uniform(conv2d(x, k, b, stride, 1, mode).shape(), -1, 1, rng, false);
        check(std::string("op/conv2d_") + label + "_s" + std::to_string(stride),
              [=] { return sum(mul(conv2d(x, k, b, stride, 1, mode), w)); }, {x, k, b});
      }
    }
    {
      T x = uniform({4, 5, 5}, -1, 1, rng), k = uniform({3, 4, 1, 1}, -1, 1, rng);
      const T w = uniform({3, 5, 5}, -1, 1, rng, false);
      check("op/conv2d_1x1", [=] { return sum(mul(conv2d(x, k, T(), 1, 0), w)); }, {x, k});
    }
    unary("max_pool2x2", [](const T& x) { return max_pool2x2(x); }, distinct({2, 4, 6}, rng));
    unary("global_avg_pool", [](const T& x) { return global_avg_pool(x); }, uniform({3, 4, 4}, -1, 1, rng));
    unary("global_max_pool", [](const T& x) { return global_max_pool(x); }, distinct({3, 4, 4}, rng));
    unary("channel_mean", [](const T& x) { return channel_mean(x); }, uniform({3, 4, 4}, -1, 1, rng));
    unary("channel_max", [](const T& x) { return channel_max(x); }, distinct({3, 4, 4}, rng));
    unary("upsample_nearest2x", [](const T& x) { return upsample_nearest2x(x); }, uniform({2, 3, 3}, -1, 1, rng));
    unary("reshape", [](const T& x) { return reshape(x, {4, 6}); }, uniform({2, 3, 4}, -1, 1, rng));
    binary("concat", [](const T& a, const T& b) { return concat({a, b, a}); }, uniform({2, 3, 3}, -1, 1, rng),
           uniform({1, 3, 3}, -1, 1, rng));
    unary("slice", [](const T& x) { return slice(x, 1, 3); }, uniform({4, 3, 3}, -1, 1, rng));
    unary("crop", [](const T& x) { return crop(x, 1, 2, 3, 2); }, uniform({2, 5, 5}, -1, 1, rng));
    unary("pad_reflect", [](const T& x) { return pad_reflect(x, 1, 3, 2, 5); }, uniform({2, 4, 4}, -1, 1, rng));
    unary("sparse_apply", [](const T& x) { return demosaic_malvar(x, BayerPattern::GRBG); },
          uniform({1, 8, 8}, 0.3, 0.7, rng));
    unary("gather", [](const T& x) { return mosaic(x, BayerPattern::BGGR); }, uniform({3, 6, 6}, -1, 1, rng));
    unary("soft_histogram", [](const T& x) { return soft_histogram(x, kHistogramBins); },
          histogram_safe({2, 4, 4}, rng));
  }

  void gamma_stage() {
    T img = uniform({3, 6, 6}, 0.05, 0.95, rng);
    T a = uniform({3, 1, 1}, 0.6, 1.6, rng), b = uniform({3, 1, 1}, 0.01, 0.2, rng),
      g = uniform({3, 1, 1}, 0.35, 1.5, rng);
    const T w = uniform({3, 6, 6}, -1, 1, rng, false);
    check("gamma_stage", [=] { return sum(mul(gamma_correction(img, a, b, g), w)); }, {a, b, g, img});
  }

  void quadratic_stage() {
    T img = uniform({3, 6, 6}, 0.05, 0.95, rng);
    T wq = add(identity_quad_matrix<double>(), uniform({3, 10}, -0.1, 0.1, rng, false)).detach();
    wq.set_requires_grad(true);
    const T w = uniform({3, 6, 6}, -1, 1, rng, false);
    check("quadratic_stage", [=] { return sum(mul(quadratic_transform(img, wq), w)); }, {wq, img});
  }

  void paramnet() {
    ParamStore<double> store;
    ParamNet<double> net(store, "paramnet", 8, 8, rng);
    randomize_zero_tensors(store.tensors(), rng);
    const OpticalParams opt{1.0 / 250, 800, 2.8, 35};
    const auto cfg = EqualizationConfig::defaults();
    const T w = uniform({8, 1}, -1, 1, rng, false);
    check("paramnet", [&, w] { return sum(mul(net.forward(opt, cfg, {}), w)); }, store.tensors());
  }

  void globalnet() {
    ParamStore<double> store;
    GlobalNet<double> net(store, "global", ArchConfig::tiny(), rng);
    randomize_zero_tensors(store.tensors(), rng);
    T img = histogram_safe({3, 16, 16}, rng);
    T z = uniform({static_cast<int64_t>(ArchConfig::tiny().z_dim), 1}, -1, 1, rng);
    const T w = uniform({3, 16, 16}, -1, 1, rng, false);
    auto params = store.tensors();
    params.push_back(z);
    check("globalnet", [&, w] { return sum(mul(net.forward(img, z), w)); }, params);
  }

  void localnet() {
    ParamStore<double> store;
    LocalNet<double> net(store, "local", ArchConfig::tiny(), rng);
    randomize_zero_tensors(store.tensors(), rng);
    T img = histogram_safe({3, 16, 16}, rng);
    T z = uniform({static_cast<int64_t>(ArchConfig::tiny().z_dim), 1}, -1, 1, rng);
    const T w = uniform({3, 16, 16}, -1, 1, rng, false);
    auto params = store.tensors();
    params.push_back(z);
    check("localnet", [&, w] { return sum(mul(net.forward(img, z), w)); }, params);
  }

  void canonet() {
    CanonicalParams cano;
    cano.pattern = BayerPattern::RGGB;
    cano.wb_gains = {2.0, 1.0, 1.6};
    cano.ccm = {1.5, -0.3, -0.2, -0.2, 1.4, -0.2, -0.1, -0.4, 1.5};
    T raw = uniform({1, 8, 8}, 0.1, 0.3, rng);
    const T w = uniform({3, 8, 8}, -1, 1, rng, false);
    check("canonet", [=] { return sum(mul(canonet_forward(raw, cano), w)); }, {raw});
    T lin = uniform({3, 8, 8}, 0.2, 0.5, rng);
    const T w1 = uniform({1, 8, 8}, -1, 1, rng, false);
    check("canonet_inverse", [=] { return sum(mul(canonet_inverse(lin, cano), w1)); }, {lin});
  }

  void features() {
    T img = histogram_safe({3, 6, 6}, rng);
    const T w = uniform({kFeatureChannels, 6, 6}, -1, 1, rng, false);
    check("features", [=] { return sum(mul(assemble_feature_stack(img), w)); }, {img});
  }

  void inverse_pipeline() {
    ModelConfig cfg;
    cfg.direction = Direction::Inverse;
    cfg.arch = ArchConfig::tiny();
    IspModelT<double> model(cfg, seed);
    auto params = model.trainable();
    randomize_zero_tensors(params, rng);
    CanonicalParams cano;
    cano.pattern = BayerPattern::GBRG;
    cano.wb_gains = {1.9, 1.0, 1.5};
    cano.ccm = {1.4, -0.3, -0.1, -0.2, 1.3, -0.1, 0.0, -0.3, 1.3};
    const OpticalParams opt{1.0 / 60, 400, 4.0, 24};
    const T srgb = histogram_safe({3, 8, 8}, rng).detach();
    const T raw = uniform({1, 8, 8}, 0.05, 0.6, rng, false);
    check("inverse_pipeline", [&] { return l1_loss(model.inverse(srgb, cano, opt), raw); }, params);
  }
};

}  // namespace

std::vector<GradcheckEntry> run_gradcheck_suite(uint64_t seed) {
  Suite s{seed, Rng(seed), {}};
  s.primitives();
  s.gamma_stage();
  s.quadratic_stage();
  s.paramnet();
  s.globalnet();
  s.localnet();
  s.canonet();
  s.features();
  s.inverse_pipeline();
  return s.out;
}

}  // namespace paramisp
