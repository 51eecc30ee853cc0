#include "ganmem/eval.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ganmem/autodiff.hpp"
#include "ganmem/compress.hpp"
#include "ganmem/rng.hpp"

namespace ganmem {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

uint64_t Embedder::hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& k : kernels) h = tensor_hash(k, h);
  return tensor_hash(proj, h);
}

Embedder make_embedder(int image_size, int channels, uint64_t seed) {
  if (image_size < 8 || (image_size & (image_size - 1)) != 0)
    throw std::invalid_argument("make_embedder: image_size must be a power of two >= 8");
  Embedder e;
  e.image_size = image_size;
  e.channels = channels;
  int ci = channels, co = 16, size = image_size, salt = 0;
  while (size > 4) {
    Rng rng(Rng::mix(seed, 0xe3bedull + salt++));
    e.kernels.push_back(
        rng.normal_tensor({co, ci, 3, 3}, std::sqrt(2.0 / (ci * 9))));
    ci = co;
    co = std::min(64, co * 2);
    size /= 2;
  }
  Rng rng(Rng::mix(seed, 0xe3bedull + 0xff));
  int flat = ci * size * size;
  e.proj = rng.normal_tensor({e.feat_dim, flat}, std::sqrt(1.0 / flat));
  return e;
}

Tensor embed(const Embedder& e, const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != e.channels ||
      images.dim(2) != e.image_size || images.dim(3) != e.image_size)
    throw std::invalid_argument("embed: image shape mismatch, got " +
                                images.shape_str());
  ad::Var x = ad::constant(images);
  for (const auto& k : e.kernels) {
    x = ad::conv2d(x, ad::constant(k), 1);
    x = ad::leaky_relu(x, 0.2);
    x = ad::avgpool2x(x);
  }
  int n = images.dim(0);
  int flat = e.proj.dim(1);
  x = ad::reshape(x, {n, flat});
  x = ad::matmul(x, ad::transpose(ad::constant(e.proj)));
  return x.val();
}

FeatureStats fit_stats(const Tensor& features) {
  if (features.rank() != 2 || features.dim(0) < 2)
    throw std::invalid_argument("fit_stats: need [N>=2, d] features");
  int n = features.dim(0), d = features.dim(1);
  FeatureStats st;
  st.count = n;
  st.mean = Tensor({d});
  Eigen::Map<const EMat> X(features.data(), n, d);
  Eigen::Map<Eigen::VectorXd> mu(st.mean.data(), d);
  mu = X.colwise().mean().transpose();
  st.cov = Tensor({d, d});
  EMat C = X.rowwise() - mu.transpose();
  Eigen::Map<EMat>(st.cov.data(), d, d) = C.transpose() * C / (n - 1.0);
  return st;
}

namespace {

// Symmetric PSD square root; eigenvalues below -tol are a caller error.
EMat psd_sqrt(const EMat& m, double tol) {
  Eigen::SelfAdjointEigenSolver<EMat> es((m + m.transpose()) / 2.0);
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol)
      throw std::runtime_error("frechet_distance: matrix not PSD (eigenvalue " +
                               std::to_string(ev[i]) + ")");
    ev[i] = std::sqrt(std::max(0.0, ev[i]));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (!a.mean.same_shape(b.mean) || !a.cov.same_shape(b.cov))
    throw std::invalid_argument("frechet_distance: shape mismatch");
  int d = a.mean.dim(0);
  Eigen::Map<const Eigen::VectorXd> ma(a.mean.data(), d), mb(b.mean.data(), d);
  Eigen::Map<const EMat> Sa(a.cov.data(), d, d), Sb(b.cov.data(), d, d);
  const double tol = 1e-8;
  // Tr((Sa Sb)^{1/2}) = Tr((Sa^{1/2} Sb Sa^{1/2})^{1/2}) with everything
  // symmetric, which keeps the computation in real arithmetic.
  EMat ra = psd_sqrt(Sa, tol);
  EMat inner = psd_sqrt(ra * Sb * ra, tol);
  double tr_cross = inner.trace();
  double val = (ma - mb).squaredNorm() + Sa.trace() + Sb.trace() - 2.0 * tr_cross;
  return std::max(0.0, val);
}

double fid_surrogate(const Embedder& e, const Tensor& real, const Tensor& fake) {
  return frechet_distance(fit_stats(embed(e, real)), fit_stats(embed(e, fake)));
}

std::map<std::string, std::vector<double>> singular_spectrum_report(
    const StyleSet& s) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [path, cs] : s.conv) {
    for (bool is_gamma : {true, false}) {
      SvdTriple t = full_svd(is_gamma ? cs.Gamma : cs.B);
      std::vector<double> vals(static_cast<size_t>(t.s.size()));
      double mx = t.s.size() ? t.s[0] : 0.0;
      for (int64_t i = 0; i < t.s.size(); ++i)
        vals[static_cast<size_t>(i)] = mx > 0 ? t.s[i] / mx : 0.0;
      out[path + (is_gamma ? "/Gamma" : "/B")] = std::move(vals);
    }
  }
  return out;
}

void ForgettingTable::add_round(std::vector<double> row) {
  if (row.size() != after.size() + 1)
    throw std::invalid_argument("ForgettingTable: round " +
                                std::to_string(after.size()) + " needs " +
                                std::to_string(after.size() + 1) + " entries");
  after.push_back(std::move(row));
}

bool ForgettingTable::row_constant(int k, double tol) const {
  double first = -1;
  for (size_t t = static_cast<size_t>(k); t < after.size(); ++t) {
    double v = after[t][static_cast<size_t>(k)];
    if (t == static_cast<size_t>(k))
      first = v;
    else if (std::fabs(v - first) > tol)
      return false;
  }
  return true;
}

std::string ForgettingTable::to_text() const {
  std::ostringstream os;
  os << "after_task";
  for (size_t k = 0; k < after.size(); ++k) os << "\ttask" << k + 1;
  os << "\n";
  for (size_t t = 0; t < after.size(); ++t) {
    os << t + 1;
    for (size_t k = 0; k < after.size(); ++k) {
      if (k < after[t].size())
        os << "\t" << after[t][k];
      else
        os << "\t-";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace ganmem
