#pragma once

#include "ganmem/tensor.hpp"

namespace ganmem {

// Weight-space style modulation of frozen layers. All functions here are
// pure: inputs are never mutated and repeated calls are bitwise identical.

inline constexpr double kEpsStd = 1e-8;  // clamp for degenerate rows/kernels

struct FCLayer {
  Tensor W;  // [d_out, d_in]
  Tensor b;  // [d_out]
};

struct ConvLayer {
  Tensor K;  // [C_out, C_in, K1, K2]
  Tensor b;  // [C_out]
};

struct FCStyle {
  Tensor gamma;  // [d_out]
  Tensor beta;   // [d_out]
  Tensor b_fc;   // [n_classes, d_out]; one row per class, row 0 when unconditional
};

struct ConvStyle {
  Tensor Gamma;   // [C_out, C_in]
  Tensor B;       // [C_out, C_in]
  Tensor b_conv;  // [C_out]
};

struct LayerStats {
  // FC: mu/sigma are [d_out]. Conv: M/S are [C_out, C_in].
  Tensor mean;
  Tensor std;
};

// Per-row population statistics of W; any std below kEpsStd is clamped.
LayerStats row_stats(const FCLayer& layer);

// Per-(out,in) kernel-slice population statistics of K; same clamp rule.
LayerStats kernel_stats(const ConvLayer& layer);

// W_hat[i,:] = gamma[i] * (W[i,:] - mu[i]) / sigma[i] + beta[i],
// b_hat = b + b_fc[class_id].
FCLayer mfilm_modulate(const FCLayer& layer, const LayerStats& stats,
                       const FCStyle& style, int class_id = 0);

// K_hat[i,j,:,:] = Gamma[i,j] * (K[i,j,:,:] - M[i,j]) / S[i,j] + B[i,j],
// b_hat = b + b_conv.
ConvLayer madafm_modulate(const ConvLayer& layer, const LayerStats& stats,
                          const ConvStyle& style);

// Normalized weights only: (W - mu) / sigma row-wise, (K - M) / S kernel-wise.
Tensor normalize_fc(const Tensor& W, const LayerStats& stats);
Tensor normalize_conv(const Tensor& K, const LayerStats& stats);

enum class LegacyMode { FilmFeatures, AdafmNoNorm };

// Unnormalized ablation paths:
//   FilmFeatures: h_hat = gamma ⊙ h + beta on a feature vector.
//   AdafmNoNorm:  K_hat[i,j,:,:] = Gamma[i,j] * K[i,j,:,:] + B[i,j].
Tensor legacy_modulate_features(const Tensor& h, const Tensor& gamma,
                                const Tensor& beta);
Tensor legacy_modulate_kernels(const Tensor& K, const Tensor& Gamma,
                               const Tensor& B);

// Style reproducing the frozen layer exactly under the modulation above:
// gamma = sigma, beta = mu, biases = 0 (and Gamma = S, B = M for conv).
FCStyle init_source_fc_style(const LayerStats& stats, int n_classes = 1);
ConvStyle init_source_conv_style(const LayerStats& stats);

// Neutral start for a fresh task: scales 1, shifts 0, biases 0.
FCStyle init_new_fc_style(int d_out, int n_classes = 1);
ConvStyle init_new_conv_style(int c_out, int c_in);

}  // namespace ganmem
