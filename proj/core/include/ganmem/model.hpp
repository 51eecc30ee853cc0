#pragma once

#include <map>
#include <string>
#include <vector>

#include "ganmem/autodiff.hpp"
#include "ganmem/modulation.hpp"
#include "ganmem/tensor.hpp"

namespace ganmem {

// Desk-scale residual GAN. Generator: FC head to a 4x4 base, then n_blocks
// upsampling residual blocks, then an output conv. Discriminator mirrors it
// with average-pool downsampling and two FC layers at the end. Every layer is
// modulated except the generator's output conv and the discriminator's final
// FC.

struct ArchConfig {
  int noise_dim = 64;
  int image_size = 32;  // square; must equal 4 * 2^n_blocks
  int channels = 3;
  int n_blocks = 3;
  std::vector<int> block_channel_schedule = {128, 64, 32};
  bool conditional = false;
  int n_classes_per_task = 1;

  void validate() const;
  int base_resolution() const { return 4; }
};

enum class LayerKind { FC, Conv };

struct Layer {
  std::string path;
  LayerKind kind;
  bool modulated = false;
  int pad = 1;  // conv only
  FCLayer fc;
  ConvLayer conv;
  LayerStats stats;  // filled by compute_stats for modulated layers

  int d_out() const {
    return kind == LayerKind::FC ? fc.W.dim(0) : conv.K.dim(0);
  }
  int d_in() const {
    return kind == LayerKind::FC ? fc.W.dim(1) : conv.K.dim(1);
  }
};

struct BaseModel {
  ArchConfig config;
  std::vector<Layer> gen;
  std::vector<Layer> disc;

  const Layer* find_layer(const std::string& path) const;
  std::vector<const Layer*> modulated_layers() const;
  uint64_t weights_hash() const;
  uint64_t arch_fingerprint() const;
};

// Deterministic construction; same seed yields bitwise-identical weights.
BaseModel build_models(const ArchConfig& config, uint64_t seed);

// Precompute per-row / per-kernel statistics for all modulated layers.
// Called once when a base model is registered; stats are frozen afterwards.
void compute_stats(BaseModel& base);

// --- Forward passes -------------------------------------------------------

// Weight/bias variables for one layer; b_fc is the per-class bias matrix of a
// modulated FC layer ([n_classes, d_out]), undefined elsewhere.
struct LayerVars {
  ad::Var weight;
  ad::Var bias;
  ad::Var b_fc;
};

using ModelVars = std::vector<LayerVars>;

enum class Ablation { None, NoNorm, NoBias };

// Per-layer trainable style variables.
struct FCStyleVars {
  ad::Var gamma, beta, b_fc;
};
struct ConvStyleVars {
  ad::Var Gamma, B, b_conv;  // Gamma/B may be reconstructed expressions
};
struct StyleVarSet {
  std::map<std::string, FCStyleVars> fc;
  std::map<std::string, ConvStyleVars> conv;
};

// Bind frozen base weights and style variables into per-layer weight
// expressions (the autodiff counterpart of mfilm/madafm, arranged so that
// the source style cancels exactly).
ModelVars bind_modulated(const std::vector<Layer>& layers, const StyleVarSet& style,
                         Ablation ablation = Ablation::None);
ModelVars bind_frozen(const std::vector<Layer>& layers);
ModelVars bind_trainable(const std::vector<Layer>& layers,
                         std::vector<ad::Var>* params_out);

// labels: one class id per sample; required (and checked) iff conditional.
ad::Var generator_forward(const BaseModel& base, const ModelVars& vars,
                          const ad::Var& z, const std::vector<int>& labels = {});
// The realness score is label-independent; if class_logits is non-null and the
// hidden FC carries per-class rows, they are filled with the auxiliary
// classifier head [n, n_classes] = hidden * b_fc^T.
ad::Var discriminator_forward(const BaseModel& base, const ModelVars& vars,
                              const ad::Var& x, const std::vector<int>& labels = {},
                              ad::Var* class_logits = nullptr);

}  // namespace ganmem
