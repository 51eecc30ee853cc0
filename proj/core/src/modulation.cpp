#include "ganmem/modulation.hpp"

#include <cmath>
#include <stdexcept>

namespace ganmem {

namespace {

// Population mean/std over a contiguous run of n values.
void run_stats(const double* p, int64_t n, double& mean, double& std_out) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += p[i];
  mean = s / static_cast<double>(n);
  double v = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = p[i] - mean;
    v += d * d;
  }
  std_out = std::sqrt(v / static_cast<double>(n));
  if (std_out < kEpsStd) std_out = kEpsStd;
}

}  // namespace

LayerStats row_stats(const FCLayer& layer) {
  if (layer.W.rank() != 2) throw std::invalid_argument("row_stats: W must be rank 2");
  if (!layer.W.all_finite()) throw std::invalid_argument("row_stats: non-finite W");
  int d_out = layer.W.dim(0), d_in = layer.W.dim(1);
  if (d_out < 1 || d_in < 2) throw std::invalid_argument("row_stats: degenerate FC shape");
  LayerStats st{Tensor({d_out}), Tensor({d_out})};
  for (int i = 0; i < d_out; ++i)
    run_stats(layer.W.data() + static_cast<int64_t>(i) * d_in, d_in, st.mean[i], st.std[i]);
  return st;
}

LayerStats kernel_stats(const ConvLayer& layer) {
  if (layer.K.rank() != 4) throw std::invalid_argument("kernel_stats: K must be rank 4");
  if (!layer.K.all_finite()) throw std::invalid_argument("kernel_stats: non-finite K");
  int co = layer.K.dim(0), ci = layer.K.dim(1);
  int64_t kk = static_cast<int64_t>(layer.K.dim(2)) * layer.K.dim(3);
  // a 1x1 kernel slice has zero spread; the eps clamp below makes its std
  // well-defined and the source style still cancels exactly
  LayerStats st{Tensor({co, ci}), Tensor({co, ci})};
  for (int64_t p = 0; p < static_cast<int64_t>(co) * ci; ++p)
    run_stats(layer.K.data() + p * kk, kk, st.mean[p], st.std[p]);
  return st;
}

Tensor normalize_fc(const Tensor& W, const LayerStats& stats) {
  int d_out = W.dim(0), d_in = W.dim(1);
  if (stats.mean.size() != d_out) throw std::invalid_argument("normalize_fc: stats mismatch");
  Tensor out(W.shape());
  for (int i = 0; i < d_out; ++i) {
    double mu = stats.mean[i], sd = stats.std[i];
    for (int j = 0; j < d_in; ++j) out.at(i, j) = (W.at(i, j) - mu) / sd;
  }
  return out;
}

Tensor normalize_conv(const Tensor& K, const LayerStats& stats) {
  int co = K.dim(0), ci = K.dim(1);
  int64_t kk = static_cast<int64_t>(K.dim(2)) * K.dim(3);
  if (stats.mean.size() != static_cast<int64_t>(co) * ci)
    throw std::invalid_argument("normalize_conv: stats mismatch");
  Tensor out(K.shape());
  for (int64_t p = 0; p < static_cast<int64_t>(co) * ci; ++p) {
    double mu = stats.mean[p], sd = stats.std[p];
    const double* src = K.data() + p * kk;
    double* dst = out.data() + p * kk;
    for (int64_t i = 0; i < kk; ++i) dst[i] = (src[i] - mu) / sd;
  }
  return out;
}

FCLayer mfilm_modulate(const FCLayer& layer, const LayerStats& stats,
                       const FCStyle& style, int class_id) {
  int d_out = layer.W.dim(0), d_in = layer.W.dim(1);
  if (style.gamma.size() != d_out || style.beta.size() != d_out ||
      style.b_fc.rank() != 2 || style.b_fc.dim(1) != d_out)
    throw std::invalid_argument("mfilm_modulate: style shape mismatch");
  if (class_id < 0 || class_id >= style.b_fc.dim(0))
    throw std::out_of_range("mfilm_modulate: class_id out of range");
  FCLayer out{Tensor(layer.W.shape()), Tensor(layer.b.shape())};
  for (int i = 0; i < d_out; ++i) {
    // Evaluated as c*W + (beta - c*mu) so the source style (gamma=sigma,
    // beta=mu) cancels exactly: c = 1 and the offset is 0.
    double c = style.gamma[i] / stats.std[i];
    double off = style.beta[i] - c * stats.mean[i];
    for (int j = 0; j < d_in; ++j)
      out.W.at(i, j) = c * layer.W.at(i, j) + off;
    out.b[i] = layer.b[i] + style.b_fc.at(class_id, i);
  }
  return out;
}

ConvLayer madafm_modulate(const ConvLayer& layer, const LayerStats& stats,
                          const ConvStyle& style) {
  int co = layer.K.dim(0), ci = layer.K.dim(1);
  int64_t kk = static_cast<int64_t>(layer.K.dim(2)) * layer.K.dim(3);
  if (style.Gamma.size() != static_cast<int64_t>(co) * ci ||
      style.B.size() != style.Gamma.size() || style.b_conv.size() != co)
    throw std::invalid_argument("madafm_modulate: style shape mismatch");
  ConvLayer out{Tensor(layer.K.shape()), Tensor(layer.b.shape())};
  for (int64_t p = 0; p < static_cast<int64_t>(co) * ci; ++p) {
    // Same exact-cancellation arrangement as mfilm_modulate.
    double c = style.Gamma[p] / stats.std[p];
    double off = style.B[p] - c * stats.mean[p];
    const double* src = layer.K.data() + p * kk;
    double* dst = out.K.data() + p * kk;
    for (int64_t i = 0; i < kk; ++i) dst[i] = c * src[i] + off;
  }
  for (int i = 0; i < co; ++i) out.b[i] = layer.b[i] + style.b_conv[i];
  return out;
}

Tensor legacy_modulate_features(const Tensor& h, const Tensor& gamma,
                                const Tensor& beta) {
  if (!h.same_shape(gamma) || !h.same_shape(beta))
    throw std::invalid_argument("legacy_modulate_features: shape mismatch");
  Tensor out(h.shape());
  for (int64_t i = 0; i < h.size(); ++i) out[i] = gamma[i] * h[i] + beta[i];
  return out;
}

Tensor legacy_modulate_kernels(const Tensor& K, const Tensor& Gamma,
                               const Tensor& B) {
  int co = K.dim(0), ci = K.dim(1);
  int64_t kk = static_cast<int64_t>(K.dim(2)) * K.dim(3);
  if (Gamma.size() != static_cast<int64_t>(co) * ci || !Gamma.same_shape(B))
    throw std::invalid_argument("legacy_modulate_kernels: shape mismatch");
  Tensor out(K.shape());
  for (int64_t p = 0; p < static_cast<int64_t>(co) * ci; ++p) {
    const double* src = K.data() + p * kk;
    double* dst = out.data() + p * kk;
    for (int64_t i = 0; i < kk; ++i) dst[i] = Gamma[p] * src[i] + B[p];
  }
  return out;
}

FCStyle init_source_fc_style(const LayerStats& stats, int n_classes) {
  int d_out = static_cast<int>(stats.mean.size());
  FCStyle s;
  s.gamma = stats.std;
  s.beta = stats.mean;
  s.b_fc = Tensor::zeros({n_classes, d_out});
  return s;
}

ConvStyle init_source_conv_style(const LayerStats& stats) {
  ConvStyle s;
  s.Gamma = stats.std;
  s.B = stats.mean;
  s.b_conv = Tensor::zeros({stats.mean.dim(0)});
  return s;
}

FCStyle init_new_fc_style(int d_out, int n_classes) {
  return FCStyle{Tensor::full({d_out}, 1.0), Tensor::zeros({d_out}),
                 Tensor::zeros({n_classes, d_out})};
}

ConvStyle init_new_conv_style(int c_out, int c_in) {
  return ConvStyle{Tensor::full({c_out, c_in}, 1.0), Tensor::zeros({c_out, c_in}),
                   Tensor::zeros({c_out})};
}

}  // namespace ganmem
