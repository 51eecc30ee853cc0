#pragma once

#include <map>
#include <string>
#include <vector>

#include "ganmem/registry.hpp"
#include "ganmem/tensor.hpp"

namespace ganmem {

// Fixed random-weight conv embedder. Features from a frozen random network
// give a cheap stand-in for a pretrained feature extractor; the resulting
// Fréchet distances are comparable across runs at the same seed but not to
// published FID values.
struct Embedder {
  int image_size = 32;
  int channels = 3;
  int feat_dim = 64;
  std::vector<Tensor> kernels;  // 3x3, stride 1, followed by 2x avg pool
  Tensor proj;                  // [feat_dim, flattened]

  uint64_t hash() const;
};

Embedder make_embedder(int image_size, int channels, uint64_t seed);

// [N,C,H,W] -> [N, feat_dim]; deterministic, no batch coupling.
Tensor embed(const Embedder& e, const Tensor& images);

struct FeatureStats {
  Tensor mean;  // [d]
  Tensor cov;   // [d,d], symmetric PSD
  int count = 0;
};

FeatureStats fit_stats(const Tensor& features);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}); the matrix square root
// goes through a symmetric eigendecomposition with small negative eigenvalues
// (> -1e-8) clipped to zero.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

// Fréchet distance between embedded sample sets.
double fid_surrogate(const Embedder& e, const Tensor& real, const Tensor& fake);

// Per conv-style matrix ("<layer>/Gamma", "<layer>/B"): singular values sorted
// descending and divided by the largest; plot them against index/(n-1).
std::map<std::string, std::vector<double>> singular_spectrum_report(const StyleSet& s);

// metric(task k, after task t) for k <= t; rows of a frozen-memory run are
// constant in t by construction.
struct ForgettingTable {
  // after[t][k], k <= t, both 0-indexed in task order
  std::vector<std::vector<double>> after;

  void add_round(std::vector<double> row);  // row t has t+1 entries
  bool row_constant(int k, double tol) const;
  std::string to_text() const;  // tab-delimited, "-" above the diagonal
};

}  // namespace ganmem
