#include "polyrad/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "polyrad/errors.hpp"
#include "polyrad/rng.hpp"

namespace polyrad::net {

using ad::Graph;
using ad::Parameter;
using ad::Shape;
using ad::Tensor;
using ad::Var;

void NetConfig::validate() const {
  if (c_r < 1 || c_z < 2 || c_v < 1 || c_s < 1 || n_prototypes < 1) {
    throw UsageError("network dimensions must be >= 1 (c_z >= 2)");
  }
  if (degree < 1) throw UsageError("polynomial degree must be >= 1");
  if (!(lateral_scale > 0.0 && d_scale > 0.0 && z_max > 0.0)) {
    throw UsageError("standardization constants must be positive");
  }
}

NetConfig NetConfig::from_config(const KeyValueConfig& cfg, NetConfig d) {
  d.c_r = static_cast<int>(cfg.get_int("c_r", d.c_r));
  d.c_z = static_cast<int>(cfg.get_int("c_z", d.c_z));
  d.c_v = static_cast<int>(cfg.get_int("c_v", d.c_v));
  d.c_s = static_cast<int>(cfg.get_int("c_s", d.c_s));
  d.n_prototypes = static_cast<int>(cfg.get_int("n_prototypes", d.n_prototypes));
  d.degree = static_cast<int>(cfg.get_int("degree", d.degree));
  d.seed = static_cast<std::uint64_t>(cfg.get_int("init_seed", static_cast<long long>(d.seed)));
  d.lateral_scale = cfg.get_double("lateral_scale", d.lateral_scale);
  d.d_scale = cfg.get_double("d_scale", d.d_scale);
  d.z_max = cfg.get_double("z_max", d.z_max);
  d.validate();
  return d;
}

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Linear make_linear(const std::string& name, int in, int out, Rng& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(in));
  return Linear{Parameter(name + ".weight", uniform_tensor({sz(in), sz(out)}, bound, rng)),
                Parameter(name + ".bias", Tensor({sz(out)}))};
}

Conv make_conv(const std::string& name, int in, int out, std::size_t stride, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(9 * in));
  return Conv{Parameter(name + ".kernels", uniform_tensor({3, 3, sz(in), sz(out)}, bound, rng)),
              Parameter(name + ".bias", Tensor({sz(out)})), stride};
}

template <typename L>
Var apply(Graph& g, L& layer, Var x) {
  return ad::add_rowwise(ad::matmul(x, g.param(layer.weight)), g.param(layer.bias));
}

template <typename C>
Var apply_conv(Graph& g, C& conv, Var x) {
  Var y = ad::conv2d(x, g.param(conv.kernels), conv.stride);
  const Shape s = y.shape();
  Var flat = ad::reshape(y, {s[0] * s[1], s[2]});
  return ad::reshape(ad::add_rowwise(flat, g.param(conv.bias)), s);
}

}  // namespace

ModelParams ModelParams::init(const NetConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, 101);
  ModelParams p;
  p.config = cfg;
  p.radar1 = make_linear("radar1", 3, cfg.c_r, rng);
  p.radar2 = make_linear("radar2", cfg.c_r, cfg.c_r, rng);
  p.radar3 = make_linear("radar3", cfg.c_r, cfg.c_r, rng);
  p.prototypes = Parameter("prototypes", uniform_tensor({sz(cfg.n_prototypes), sz(cfg.c_r)}, std::sqrt(3.0), rng));
  p.radar_key = make_linear("radar_key", cfg.c_r, cfg.c_r, rng, 1.0 / std::sqrt(2.0));
  p.radar_value = make_linear("radar_value", cfg.c_r, cfg.c_r, rng, 1.0 / std::sqrt(2.0));
  p.depth1 = make_conv("depth1", 1, cfg.c_z / 2, 2, rng);
  p.depth2 = make_conv("depth2", cfg.c_z / 2, cfg.c_z, 2, rng);
  p.fuse_key = make_linear("fuse_key", cfg.c_r, cfg.c_z, rng, 1.0 / std::sqrt(2.0));
  p.fuse_value = make_linear("fuse_value", cfg.c_r, cfg.c_v, rng, 1.0 / std::sqrt(2.0));
  p.scene1 = make_conv("scene1", cfg.c_v, cfg.c_s, 1, rng);
  p.scene2 = make_conv("scene2", cfg.c_s, cfg.c_s, 1, rng);
  p.head1 = make_linear("head1", cfg.c_s, cfg.c_s, rng);
  // Small output weights: the initial transform is dominated by the bias.
  p.head2 = make_linear("head2", cfg.c_s, cfg.degree + 1, rng, 1e-3);
  p.head2.bias.value[1] = 1.0;
  return p;
}

std::vector<Parameter*> ModelParams::parameters() {
  return {&radar1.weight,      &radar1.bias,      &radar2.weight,     &radar2.bias,     &radar3.weight,
          &radar3.bias,        &prototypes,       &radar_key.weight,  &radar_key.bias,  &radar_value.weight,
          &radar_value.bias,   &depth1.kernels,   &depth1.bias,       &depth2.kernels,  &depth2.bias,
          &fuse_key.weight,    &fuse_key.bias,    &fuse_value.weight, &fuse_value.bias, &scene1.kernels,
          &scene1.bias,        &scene2.kernels,   &scene2.bias,       &head1.weight,    &head1.bias,
          &head2.weight,       &head2.bias};
}

std::vector<const Parameter*> ModelParams::parameters() const {
  auto mut = const_cast<ModelParams*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

Tensor radar_input(const NetConfig& cfg, const RadarCloud& cloud) {
  Tensor t({cloud.size(), 3});
  const double depth_scale = cfg.z_max * cfg.d_scale;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    t.at(i, 0) = cloud[i].x / cfg.lateral_scale;
    t.at(i, 1) = cloud[i].y / cfg.lateral_scale;
    t.at(i, 2) = cloud[i].z / depth_scale;
  }
  return t;
}

template <typename Params>
Var encode_radar(Graph& g, Params& params, const RadarCloud& cloud) {
  if (cloud.empty()) throw NoRadarError("radar cloud is empty");
  Var x = g.constant(radar_input(params.config, cloud));
  Var h = ad::relu(apply(g, params.radar1, x));
  h = ad::relu(apply(g, params.radar2, h));
  return apply(g, params.radar3, h);
}

template <typename Params>
PrototypeOutput aggregate_prototypes(Graph& g, Params& params, Var radar_features, const Ablation& ablation) {
  const std::size_t n_proto = sz(params.config.n_prototypes);
  Var values = apply(g, params.radar_value, radar_features);
  if (ablation.disable_prototypes) {
    return {ad::repeat_rows(ad::mean_rows(values), n_proto), Var()};
  }
  Var keys = apply(g, params.radar_key, radar_features);
  Var logits = ad::scalar_mul(ad::matmul(g.param(params.prototypes), ad::transpose(keys)),
                              1.0 / std::sqrt(static_cast<double>(params.config.c_r)));
  Var attention = ad::softmax_rows(logits);
  return {ad::matmul(attention, values), attention};
}

template <typename Params>
Var encode_depth(Graph& g, Params& params, const DepthMap& z) {
  if (z.height() % 4 != 0 || z.width() % 4 != 0) {
    throw UsageError("depth encoder needs H and W divisible by 4, got " + std::to_string(z.height()) + "x" +
                     std::to_string(z.width()));
  }
  Tensor input({z.height(), z.width(), 1});
  std::copy(z.values().begin(), z.values().end(), input.data().begin());
  Var h = ad::relu(apply_conv(g, params.depth1, g.constant(std::move(input))));
  h = ad::relu(apply_conv(g, params.depth2, h));
  const Shape s = h.shape();
  return ad::reshape(h, {s[0] * s[1], s[2]});
}

template <typename Params>
FusionOutput fuse(Graph& g, Params& params, Var depth_tokens, Var aggregated, const Ablation& ablation) {
  Var values = apply(g, params.fuse_value, aggregated);
  const std::size_t tokens = depth_tokens.shape()[0];
  if (ablation.disable_fusion) {
    return {ad::repeat_rows(ad::mean_rows(values), tokens), Var()};
  }
  Var keys = apply(g, params.fuse_key, aggregated);
  // Scaled by sqrt(c_r) even though the queries have width c_z.
  Var logits = ad::scalar_mul(ad::matmul(depth_tokens, ad::transpose(keys)),
                              1.0 / std::sqrt(static_cast<double>(params.config.c_r)));
  Var attention = ad::softmax_rows(logits);
  return {ad::matmul(attention, values), attention};
}

template <typename Params>
ForwardPass forward(Graph& g, Params& params, const DepthMap& z, const RadarCloud& cloud,
                    const Ablation& ablation) {
  const NetConfig& cfg = params.config;
  ForwardPass out;
  out.radar_features = encode_radar(g, params, cloud);
  out.prototypes = aggregate_prototypes(g, params, out.radar_features, ablation);
  out.depth_tokens = encode_depth(g, params, z);
  out.fusion = fuse(g, params, out.depth_tokens, out.prototypes.aggregated, ablation);

  const std::size_t th = z.height() / 4, tw = z.width() / 4;
  Var grid = ad::reshape(out.fusion.fused, {th, tw, sz(cfg.c_v)});
  Var h = ad::relu(apply_conv(g, params.scene1, grid));
  h = ad::relu(apply_conv(g, params.scene2, h));
  out.pooled = ad::mean_rows(ad::reshape(h, {th * tw, sz(cfg.c_s)}));
  Var hidden = ad::relu(apply(g, params.head1, out.pooled));
  out.coefficients = ad::scalar_mul(apply(g, params.head2, hidden), cfg.d_scale);
  return out;
}

#define POLYRAD_INSTANTIATE(P)                                                                  \
  template Var encode_radar<P>(Graph&, P&, const RadarCloud&);                                  \
  template PrototypeOutput aggregate_prototypes<P>(Graph&, P&, Var, const Ablation&);           \
  template Var encode_depth<P>(Graph&, P&, const DepthMap&);                                    \
  template FusionOutput fuse<P>(Graph&, P&, Var, Var, const Ablation&);                         \
  template ForwardPass forward<P>(Graph&, P&, const DepthMap&, const RadarCloud&, const Ablation&);

POLYRAD_INSTANTIATE(ModelParams)
POLYRAD_INSTANTIATE(const ModelParams)
#undef POLYRAD_INSTANTIATE

PolyCoefficients predict_coefficients(const ModelParams& params, const DepthMap& z, const RadarCloud& cloud,
                                      const Ablation& ablation) {
  Graph g;
  ForwardPass fp = forward(g, params, z, cloud, ablation);
  const auto& v = fp.coefficients.value().vec();
  return PolyCoefficients(v, params.config.z_max);
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'R', 'A', 'D', 'C', 'K', 'P', 'T'};

void put_i64(std::vector<char>& out, std::int64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.insert(out.end(), b, b + 8);
}

void put_array(std::vector<char>& out, const Tensor& t) {
  put_i64(out, static_cast<std::int64_t>(t.rank()));
  for (std::size_t d : t.shape()) put_i64(out, static_cast<std::int64_t>(d));
  const char* p = reinterpret_cast<const char*>(t.data().data());
  out.insert(out.end(), p, p + t.size() * sizeof(double));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}
  void take(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint is truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::int64_t i64() {
    std::int64_t v;
    take(&v, 8);
    return v;
  }
  Tensor array() {
    const auto rank = i64();
    if (rank < 0 || rank > 8) throw FormatError("checkpoint array has invalid rank");
    Shape shape;
    for (std::int64_t i = 0; i < rank; ++i) {
      const auto d = i64();
      if (d < 0 || d > (1 << 24)) throw FormatError("checkpoint array has invalid dimension");
      shape.push_back(static_cast<std::size_t>(d));
    }
    Tensor t(shape);
    take(t.data().data(), t.size() * sizeof(double));
    return t;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> serialize(const ModelParams& params) {
  const NetConfig& c = params.config;
  std::vector<char> out(kMagic, kMagic + 8);
  for (std::int64_t v : {std::int64_t{c.c_r}, std::int64_t{c.c_z}, std::int64_t{c.c_v}, std::int64_t{c.c_s},
                         std::int64_t{c.n_prototypes}, std::int64_t{c.degree}, static_cast<std::int64_t>(c.seed)}) {
    put_i64(out, v);
  }
  const auto params_list = params.parameters();
  put_i64(out, static_cast<std::int64_t>(params_list.size() + 1));
  put_array(out, Tensor({3}, {c.lateral_scale, c.d_scale, c.z_max}));
  for (const auto* p : params_list) put_array(out, p->value);
  return out;
}

ModelParams deserialize(const std::vector<char>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.take(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a checkpoint (bad magic)");
  NetConfig c;
  c.c_r = static_cast<int>(r.i64());
  c.c_z = static_cast<int>(r.i64());
  c.c_v = static_cast<int>(r.i64());
  c.c_s = static_cast<int>(r.i64());
  c.n_prototypes = static_cast<int>(r.i64());
  c.degree = static_cast<int>(r.i64());
  c.seed = static_cast<std::uint64_t>(r.i64());
  const auto count = r.i64();
  Tensor norm = r.array();
  if (norm.size() != 3) throw FormatError("checkpoint standardization block must hold 3 values");
  c.lateral_scale = norm[0];
  c.d_scale = norm[1];
  c.z_max = norm[2];
  try {
    c.validate();
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }

  ModelParams p = ModelParams::init(c);
  auto list = p.parameters();
  if (count != static_cast<std::int64_t>(list.size() + 1)) throw FormatError("checkpoint array count mismatch");
  for (auto* param : list) {
    Tensor t = r.array();
    if (t.shape() != param->value.shape()) {
      throw FormatError("checkpoint array '" + param->name + "' has shape " + ad::shape_str(t.shape()) +
                        ", expected " + ad::shape_str(param->value.shape()));
    }
    param->value = std::move(t);
    param->grad = Tensor(param->value.shape());
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  const auto bytes = serialize(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace polyrad::net
