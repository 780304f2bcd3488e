#pragma once

// Coefficient-prediction network.
//
//   F_r = psi_r(points)                                   radar point MLP
//   R   = softmax(P psi_r^K(F_r)^T / sqrt(c_r)) psi_r^V(F_r)   prototype attention
//   Z   = f_z(z)                                          strided conv tokens
//   S   = softmax(Z psi_R^K(R)^T / sqrt(c_r)) psi_R^V(R)       cross-modal fusion
//   c   = d_scale * psi_s(GAP(f_s(S)))                     coefficient head
//
// The head predicts coefficients in units of d_scale; its bias starts at
// (0, 1, 0, ...), so an untrained model applies d = d_scale * z / z_max.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "polyrad/autodiff.hpp"
#include "polyrad/config.hpp"
#include "polyrad/datamodel.hpp"

namespace polyrad::net {

struct NetConfig {
  int c_r = 64;
  int c_z = 64;
  int c_v = 64;
  int c_s = 64;
  int n_prototypes = 16;
  int degree = 8;
  std::uint64_t seed = 1;
  // Input standardization.
  double lateral_scale = 50.0;  // metres, divides radar x and y
  double d_scale = 80.0;        // metres, divides radar depth (times z_max)
  double z_max = 1.0;           // polynomial normalization of the scaleless map

  void validate() const;
  static NetConfig from_config(const KeyValueConfig& cfg, NetConfig defaults);
  static NetConfig from_config(const KeyValueConfig& cfg) { return from_config(cfg, NetConfig()); }
};

struct Linear {
  ad::Parameter weight;  // [in x out]
  ad::Parameter bias;    // [out]
};

struct Conv {
  ad::Parameter kernels;  // [3 x 3 x in x out]
  ad::Parameter bias;     // [out]
  std::size_t stride = 1;
};

/// Architecture switches used by the ablation study.
struct Ablation {
  bool disable_prototypes = false;  // mean-pool psi_r^V(F_r) replicated to N_P rows
  bool disable_fusion = false;      // every token receives mean(psi_R^V(R))
};

struct ModelParams {
  NetConfig config;
  Linear radar1, radar2, radar3;
  ad::Parameter prototypes;  // [N_P x c_r]
  Linear radar_key, radar_value;
  Conv depth1, depth2;
  Linear fuse_key, fuse_value;
  Conv scene1, scene2;
  Linear head1, head2;

  static ModelParams init(const NetConfig& cfg);

  /// Fixed order used by checkpoints and optimizers.
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

struct PrototypeOutput {
  ad::Var aggregated;  // R [N_P x c_r]
  ad::Var attention;   // [N_P x N_C]; invalid when prototypes are ablated
};

struct FusionOutput {
  ad::Var fused;      // S [T x c_v]
  ad::Var attention;  // [T x N_P]; invalid when fusion is ablated
};

struct ForwardPass {
  ad::Var radar_features;
  PrototypeOutput prototypes;
  ad::Var depth_tokens;
  FusionOutput fusion;
  ad::Var pooled;  // [1 x c_s]
  ad::Var coefficients;  // [1 x (N+1)]
};

/// Standardized [N_C x 3] radar input.
ad::Tensor radar_input(const NetConfig& cfg, const RadarCloud& cloud);

// Each stage binds the parameters it uses into the graph. Passing a mutable
// ModelParams makes backward() accumulate into the parameter gradients; a
// const one binds read-only copies.
template <typename Params>
ad::Var encode_radar(ad::Graph& g, Params& params, const RadarCloud& cloud);
template <typename Params>
PrototypeOutput aggregate_prototypes(ad::Graph& g, Params& params, ad::Var radar_features,
                                     const Ablation& ablation = {});
template <typename Params>
ad::Var encode_depth(ad::Graph& g, Params& params, const DepthMap& z);
template <typename Params>
FusionOutput fuse(ad::Graph& g, Params& params, ad::Var depth_tokens, ad::Var aggregated,
                  const Ablation& ablation = {});
template <typename Params>
ForwardPass forward(ad::Graph& g, Params& params, const DepthMap& z, const RadarCloud& cloud,
                    const Ablation& ablation = {});

/// Inference entry point. Throws NoRadarError on an empty cloud.
PolyCoefficients predict_coefficients(const ModelParams& params, const DepthMap& z, const RadarCloud& cloud,
                                      const Ablation& ablation = {});

// Checkpoint: "PRADCKPT", NetConfig integers (c_r, c_z, c_v, c_s, N_P, N,
// seed) as int64, array count, then per array: rank, dims (int64) and
// little-endian float64 values. The first array holds the standardization
// constants (lateral_scale, d_scale, z_max).
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);
std::vector<char> serialize(const ModelParams& params);
ModelParams deserialize(const std::vector<char>& bytes);

}  // namespace polyrad::net
