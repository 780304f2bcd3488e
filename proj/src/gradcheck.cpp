#include "polyrad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "polyrad/errors.hpp"
#include "polyrad/rng.hpp"
#include "polyrad/synthgen.hpp"

namespace polyrad::gradcheck {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

double relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw DimensionError("gradient vectors differ in length");
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

Check make_check(std::string name, std::span<const double> analytic, std::span<const double> numeric, double floor) {
  Check c;
  c.name = std::move(name);
  c.entries = analytic.size();
  c.rel_error = relative_error(analytic, numeric, floor);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    c.abs_error += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    c.analytic_norm += analytic[i] * analytic[i];
  }
  c.abs_error = std::sqrt(c.abs_error);
  c.analytic_norm = std::sqrt(c.analytic_norm);
  return c;
}

namespace {

std::vector<std::size_t> pick_entries(std::size_t n, std::size_t max_entries, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_entries == 0 || max_entries >= n) return idx;
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(max_entries);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// sum(x * w) with fixed random w, so every output entry carries its own weight.
Var weighted_sum(Var x, std::uint64_t seed) {
  Rng rng(seed, 77);
  Var w = x.graph().constant(random_tensor(x.shape(), rng));
  return ad::sum(ad::mul(x, w));
}

double scalar_of(Var v) {
  if (v.size() != 1) throw UsageError("gradient check needs a single-element loss");
  return v.value()[0];
}

struct Probe {
  double value = 0.0;
  std::vector<std::int8_t> signs;
};

struct Difference {
  std::optional<double> value;  // empty when every step crossed a kink
  bool refined = false;
};

// `at(x)` evaluates the loss with the checked entry set to x.
Difference central_difference(const std::function<Probe(double)>& at, double x0,
                              const std::vector<std::int8_t>& base, const Options& opt) {
  double h = opt.step;
  for (int k = 0; k <= opt.max_refinements; ++k, h /= 10.0) {
    const Probe p = at(x0 + h);
    const Probe m = at(x0 - h);
    if (p.signs == base && m.signs == base) return {(p.value - m.value) / (2.0 * h), k > 0};
  }
  return {std::nullopt, true};
}

struct Collected {
  std::vector<double> analytic, numeric;
  std::size_t refined = 0, skipped = 0;

  void add(double a, const Difference& d) {
    if (d.refined) ++refined;
    if (!d.value) {
      ++skipped;
      return;
    }
    analytic.push_back(a);
    numeric.push_back(*d.value);
  }

  Check finish(std::string name, double floor) const {
    Check c = make_check(std::move(name), analytic, numeric, floor);
    c.refined = refined;
    c.skipped = skipped;
    return c;
  }
};

}  // namespace

std::vector<Check> check_function(const std::string& name, const std::vector<Tensor>& inputs, const Builder& loss,
                                  const Options& opt) {
  auto evaluate = [&](const std::vector<Tensor>& values, std::vector<Tensor>* grads) {
    Graph g;
    g.track_kinks(true);
    std::vector<Var> leaves;
    for (const auto& t : values) leaves.push_back(g.leaf(t));
    Var l = loss(g, leaves);
    Probe probe{scalar_of(l), g.kink_signature()};
    if (grads) {
      g.backward(l);
      for (const auto& leaf : leaves) grads->push_back(leaf.grad());
    }
    return probe;
  };

  std::vector<Tensor> analytic;
  const Probe base = evaluate(inputs, &analytic);

  Rng rng(opt.seed, 5);
  std::vector<Check> out;
  std::vector<Tensor> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto entries = pick_entries(inputs[k].size(), opt.max_entries, rng);
    Collected col;
    for (std::size_t i : entries) {
      const double x0 = work[k][i];
      auto at = [&](double x) {
        work[k][i] = x;
        return evaluate(work, nullptr);
      };
      const Difference d = central_difference(at, x0, base.signs, opt);
      work[k][i] = x0;
      col.add(analytic[k][i], d);
    }
    const std::string label = inputs.size() > 1 ? name + "[" + std::to_string(k) + "]" : name;
    out.push_back(col.finish(label, opt.floor));
  }
  return out;
}

std::vector<Check> check_ops(const Options& opt) {
  Rng rng(opt.seed, 9);
  std::vector<Check> all;
  auto run = [&](const std::string& name, std::vector<Tensor> inputs, const Builder& b) {
    auto r = check_function(name, inputs, b, opt);
    all.insert(all.end(), r.begin(), r.end());
  };
  const std::uint64_t ws = opt.seed;

  run("add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::add(v[0], v[1]), ws); });
  run("add_broadcast", {random_tensor({3, 4}, rng), random_tensor({1}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::add(v[0], v[1]), ws); });
  run("sub", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::sub(v[0], v[1]), ws); });
  run("mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::mul(v[0], v[1]), ws); });
  run("mul_broadcast", {random_tensor({1}, rng), random_tensor({2, 5}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::mul(v[0], v[1]), ws); });
  run("scalar_mul", {random_tensor({2, 3}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::scalar_mul(v[0], -2.5), ws); });
  run("add_scalar", {random_tensor({2, 3}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::add_scalar(v[0], 0.75), ws); });
  run("power", {random_tensor({2, 3}, rng, 0.2, 1.5)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::power(v[0], 3), ws); });
  // Inputs kept away from the kink.
  {
    Tensor x = random_tensor({3, 3}, rng, 0.1, 1.0);
    for (std::size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
    run("relu", {x}, [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::relu(v[0]), ws); });
    run("abs_sum", {x}, [](Graph&, std::span<const Var> v) { return ad::abs_sum(v[0]); });
  }
  run("sum", {random_tensor({2, 3}, rng)}, [](Graph&, std::span<const Var> v) { return ad::sum(v[0]); });
  run("mean", {random_tensor({2, 3}, rng)}, [](Graph&, std::span<const Var> v) { return ad::mean(v[0]); });
  run("square_sum", {random_tensor({2, 3}, rng)},
      [](Graph&, std::span<const Var> v) { return ad::square_sum(v[0]); });
  run("matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::matmul(v[0], v[1]), ws); });
  run("transpose", {random_tensor({3, 4}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::transpose(v[0]), ws); });
  run("softmax_rows", {random_tensor({3, 5}, rng, -3.0, 3.0)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::softmax_rows(v[0]), ws); });
  run("reshape", {random_tensor({3, 4}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::reshape(v[0], {2, 6}), ws); });
  run("add_rowwise", {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::add_rowwise(v[0], v[1]), ws); });
  run("mean_rows", {random_tensor({5, 3}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::mean_rows(v[0]), ws); });
  run("repeat_rows", {random_tensor({1, 3}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::repeat_rows(v[0], 4), ws); });
  run("conv2d_stride1", {random_tensor({5, 6, 2}, rng), random_tensor({3, 3, 2, 3}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::conv2d(v[0], v[1], 1), ws); });
  run("conv2d_stride2", {random_tensor({8, 8, 2}, rng), random_tensor({3, 3, 2, 2}, rng)},
      [=](Graph&, std::span<const Var> v) { return weighted_sum(ad::conv2d(v[0], v[1], 2), ws); });
  return all;
}

SceneSample fixture_scene(std::uint64_t seed) {
  synth::SceneSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.regions = 3;
  spec.radar_points = 5;
  spec.gamma = {0.8, 1.3, 1.1};
  spec.offset = {4.0, -6.0, 2.0};
  spec.gain = {1.1, 0.9, 1.0};
  spec.seed = seed;
  auto scene = synth::generate_scene(spec);
  scene.sample.id = "gradcheck";
  return scene.sample;
}

std::vector<Check> check_network(const net::NetConfig& net_cfg, const train::LossConfig& loss_cfg,
                                 const SceneSample& scene, const Options& opt) {
  net::ModelParams params = net::ModelParams::init(net_cfg);
  // The initial head is nearly silent (tiny output weights); give it full
  // scale so every upstream gradient is well above the difference noise.
  // Biases start at exactly 0, which puts ReLU inputs of constant image
  // areas on the kink; jitter them off it.
  {
    Rng rng(opt.seed, 31);
    const double bound = 1.0 / std::sqrt(static_cast<double>(net_cfg.c_s));
    for (auto& w : params.head2.weight.value.data()) w = rng.uniform(-bound, bound);
    for (auto* p : params.parameters()) {
      if (p->value.rank() != 1 || p == &params.head2.bias) continue;
      for (auto& b : p->value.data()) b += rng.uniform(-0.05, 0.05);
    }
  }
  const train::PreparedScene prepared = train::prepare_scene(scene, net_cfg.degree, net_cfg.z_max);

  auto probe = [&](net::ModelParams& p) {
    Graph g;
    g.track_kinks(true);
    const double v = scalar_of(train::scene_loss(g, p, prepared, loss_cfg).total);
    return Probe{v, g.kink_signature()};
  };
  const Probe base = probe(params);

  params.zero_grad();
  {
    Graph g;
    auto loss = train::scene_loss(g, params, prepared, loss_cfg);
    g.backward(loss.total);
  }

  Rng rng(opt.seed, 17);
  std::vector<Check> out;
  for (auto* p : params.parameters()) {
    const auto entries = pick_entries(p->value.size(), opt.max_entries, rng);
    Collected col;
    for (std::size_t i : entries) {
      const double x0 = p->value[i];
      auto at = [&](double x) {
        p->value[i] = x;
        return probe(params);
      };
      const Difference d = central_difference(at, x0, base.signs, opt);
      p->value[i] = x0;
      col.add(p->grad[i], d);
    }
    out.push_back(col.finish(p->name, opt.floor));
  }
  return out;
}

double max_error(std::span<const Check> checks) {
  double m = 0.0;
  for (const auto& c : checks) m = std::max(m, c.rel_error);
  return m;
}

}  // namespace polyrad::gradcheck
