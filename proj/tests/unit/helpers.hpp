#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ganmem/autodiff.hpp"
#include "ganmem/rng.hpp"
#include "ganmem/tensor.hpp"

namespace testutil {

using ganmem::Tensor;

// Central finite differences against analytic gradients. `make` must build a
// scalar expression from fresh leaves each call so parameter edits take effect.
struct FdProblem {
  std::vector<Tensor> params;
  std::function<ganmem::ad::Var(const std::vector<ganmem::ad::Var>&)> make;
};

inline double fd_max_rel_err(FdProblem& p, double h = 1e-5, int max_probes = 0) {
  namespace ad = ganmem::ad;
  auto eval = [&]() {
    std::vector<ad::Var> leaves;
    for (auto& t : p.params) leaves.push_back(ad::leaf(t));
    return p.make(leaves);
  };
  std::vector<ad::Var> leaves;
  for (auto& t : p.params) leaves.push_back(ad::leaf(t));
  ad::Var out = p.make(leaves);
  auto grads = ad::grad(out, leaves);

  double worst = 0.0;
  ganmem::Rng pick(0x9d0be5);
  for (size_t pi = 0; pi < p.params.size(); ++pi) {
    Tensor& t = p.params[pi];
    int64_t n = t.size();
    int probes = max_probes > 0 ? std::min<int64_t>(max_probes, n) : n;
    for (int q = 0; q < probes; ++q) {
      int64_t i = probes == n ? q : pick.uniform_int(static_cast<int>(n));
      double save = t[i];
      t[i] = save + h;
      double up = eval().val()[0];
      t[i] = save - h;
      double dn = eval().val()[0];
      t[i] = save;
      double fd = (up - dn) / (2 * h);
      double an = grads[pi].val()[i];
      double err = std::fabs(fd - an) / std::max({1e-6, std::fabs(fd), std::fabs(an)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline bool same_bits(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return ganmem::tensor_hash(a) == ganmem::tensor_hash(b);
}

}  // namespace testutil
