#include "ganmem/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace ganmem::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

Var make(Tensor value, std::vector<Var> parents,
         std::function<std::vector<Var>(const Var&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.val().same_shape(b.val()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.val().shape_str() + " vs " + b.val().shape_str());
}

Tensor map_unary(const Tensor& a, double (*f)(double)) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

double softplus_scalar(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var constant(Tensor t) { return make(std::move(t), {}, nullptr); }

Var leaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var detach(const Var& a) { return constant(a.val()); }

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] + b.val()[i];
  return make(std::move(out), {a, b},
              [](const Var& g) { return std::vector<Var>{g, g}; });
}

Var neg(const Var& a) {
  Tensor out(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = -a.val()[i];
  return make(std::move(out), {a},
              [](const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var sub(const Var& a, const Var& b) { return add(a, neg(b)); }

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] * b.val()[i];
  return make(std::move(out), {a, b}, [a, b](const Var& g) {
    return std::vector<Var>{mul(g, b), mul(g, a)};
  });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  Tensor out(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] / b.val()[i];
  return make(std::move(out), {a, b}, [a, b](const Var& g) {
    Var da = div(g, b);
    Var db = neg(div(mul(g, a), mul(b, b)));
    return std::vector<Var>{da, db};
  });
}

Var scale(const Var& a, double s) {
  Tensor out(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] * s;
  return make(std::move(out), {a},
              [s](const Var& g) { return std::vector<Var>{scale(g, s)}; });
}

Var add_scalar(const Var& a, double s) {
  Tensor out(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] + s;
  return make(std::move(out), {a},
              [](const Var& g) { return std::vector<Var>{g}; });
}

Var mul_const(const Var& a, const Tensor& c) {
  if (!a.val().same_shape(c))
    throw std::invalid_argument("mul_const: shape mismatch");
  Tensor out(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.val()[i] * c[i];
  return make(std::move(out), {a},
              [c](const Var& g) { return std::vector<Var>{mul_const(g, c)}; });
}

Var leaky_relu(const Var& a, double alpha) {
  Tensor out(a.val().shape());
  Tensor mask(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    bool pos = a.val()[i] >= 0.0;
    mask[i] = pos ? 1.0 : alpha;
    out[i] = a.val()[i] * mask[i];
  }
  return make(std::move(out), {a}, [mask](const Var& g) {
    return std::vector<Var>{mul_const(g, mask)};
  });
}

Var tanh_v(const Var& a) {
  Tensor out = map_unary(a.val(), [](double x) { return std::tanh(x); });
  return make(std::move(out), {a}, [a](const Var& g) {
    Var t = tanh_v(a);
    Var one_minus_t2 = add_scalar(neg(mul(t, t)), 1.0);
    return std::vector<Var>{mul(g, one_minus_t2)};
  });
}

Var sigmoid_v(const Var& a) {
  Tensor out = map_unary(a.val(), [](double x) { return sigmoid_scalar(x); });
  return make(std::move(out), {a}, [a](const Var& g) {
    Var s = sigmoid_v(a);
    Var ds = mul(s, add_scalar(neg(s), 1.0));
    return std::vector<Var>{mul(g, ds)};
  });
}

Var softplus(const Var& a) {
  Tensor out = map_unary(a.val(), [](double x) { return softplus_scalar(x); });
  return make(std::move(out), {a}, [a](const Var& g) {
    return std::vector<Var>{mul(g, sigmoid_v(a))};
  });
}

Var log_sigmoid(const Var& a) { return neg(softplus(neg(a))); }

Var exp_v(const Var& a) {
  Tensor out = map_unary(a.val(), [](double x) { return std::exp(x); });
  return make(std::move(out), {a}, [a](const Var& g) {
    return std::vector<Var>{mul(g, exp_v(a))};
  });
}

Var log_v(const Var& a) {
  Tensor out = map_unary(a.val(), [](double x) { return std::log(x); });
  return make(std::move(out), {a}, [a](const Var& g) {
    return std::vector<Var>{div(g, a)};
  });
}

Var abs_v(const Var& a) {
  Tensor out(a.val().shape());
  Tensor sign(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    sign[i] = a.val()[i] >= 0.0 ? 1.0 : -1.0;
    out[i] = std::fabs(a.val()[i]);
  }
  return make(std::move(out), {a}, [sign](const Var& g) {
    return std::vector<Var>{mul_const(g, sign)};
  });
}

Var softsign(const Var& a) { return div(a, add_scalar(abs_v(a), 1.0)); }

Var leaky_clamp(const Var& a, double alpha) {
  Tensor out(a.val().shape());
  Tensor mask(a.val().shape());
  Tensor off(a.val().shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    double x = a.val()[i];
    if (x > 1.0) {
      mask[i] = alpha;
      off[i] = 1.0 - alpha;
    } else if (x < -1.0) {
      mask[i] = alpha;
      off[i] = alpha - 1.0;
    } else {
      mask[i] = 1.0;
      off[i] = 0.0;
    }
    out[i] = mask[i] * x + off[i];
  }
  return make(std::move(out), {a}, [mask](const Var& g) {
    return std::vector<Var>{mul_const(g, mask)};
  });
}

Var reshape(const Var& a, std::vector<int> shape) {
  if (Tensor::numel(shape) != a.val().size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out(shape, std::vector<double>(a.val().data(), a.val().data() + a.val().size()));
  auto old_shape = a.val().shape();
  return make(std::move(out), {a}, [old_shape](const Var& g) {
    return std::vector<Var>{reshape(g, old_shape)};
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a.val().size(); ++i) s += a.val()[i];
  auto shape = a.val().shape();
  return make(Tensor::scalar(s), {a}, [shape](const Var& g) {
    return std::vector<Var>{broadcast_full(g, shape)};
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.val().size())); }

Var broadcast_full(const Var& s, std::vector<int> shape) {
  if (s.val().size() != 1) throw std::invalid_argument("broadcast_full: need scalar");
  Tensor out = Tensor::full(shape, s.val()[0]);
  return make(std::move(out), {s},
              [](const Var& g) { return std::vector<Var>{sum(g)}; });
}

Var rowsum(const Var& a) {
  if (a.val().rank() != 2) throw std::invalid_argument("rowsum: need rank 2");
  int m = a.val().dim(0), n = a.val().dim(1);
  Tensor out({m});
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += a.val().at(i, j);
    out[i] = s;
  }
  return make(std::move(out), {a}, [n](const Var& g) {
    return std::vector<Var>{broadcast_row(g, n)};
  });
}

Var colsum(const Var& a) {
  if (a.val().rank() != 2) throw std::invalid_argument("colsum: need rank 2");
  int m = a.val().dim(0), n = a.val().dim(1);
  Tensor out({n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[j] += a.val().at(i, j);
  return make(std::move(out), {a}, [m](const Var& g) {
    return std::vector<Var>{tile_rows(g, m)};
  });
}

Var broadcast_row(const Var& v, int n) {
  if (v.val().rank() != 1) throw std::invalid_argument("broadcast_row: need rank 1");
  int m = v.val().dim(0);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = v.val()[i];
  return make(std::move(out), {v},
              [](const Var& g) { return std::vector<Var>{rowsum(g)}; });
}

Var tile_rows(const Var& v, int n) {
  if (v.val().rank() != 1) throw std::invalid_argument("tile_rows: need rank 1");
  int d = v.val().dim(0);
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = v.val()[j];
  return make(std::move(out), {v},
              [](const Var& g) { return std::vector<Var>{colsum(g)}; });
}

Var matmul(const Var& a, const Var& b) {
  if (a.val().rank() != 2 || b.val().rank() != 2 || a.val().dim(1) != b.val().dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " +
                                a.val().shape_str() + " x " + b.val().shape_str());
  int m = a.val().dim(0), k = a.val().dim(1), n = b.val().dim(1);
  Tensor out({m, n});
  CMap A(a.val().data(), m, k);
  CMap B(b.val().data(), k, n);
  MMap C(out.data(), m, n);
  C.noalias() = A * B;
  return make(std::move(out), {a, b}, [a, b](const Var& g) {
    Var da = matmul(g, transpose(b));
    Var db = matmul(transpose(a), g);
    return std::vector<Var>{da, db};
  });
}

Var transpose(const Var& a) {
  if (a.val().rank() != 2) throw std::invalid_argument("transpose: need rank 2");
  int m = a.val().dim(0), n = a.val().dim(1);
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.val().at(i, j);
  return make(std::move(out), {a},
              [](const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var scale_cols(const Var& m, const Var& d) {
  if (m.val().rank() != 2 || d.val().rank() != 1 || m.val().dim(1) != d.val().dim(0))
    throw std::invalid_argument("scale_cols: incompatible shapes");
  return mul(m, tile_rows(d, m.val().dim(0)));
}

Var unfold(const Var& x, int k, int pad) {
  const Tensor& xv = x.val();
  if (xv.rank() != 4) throw std::invalid_argument("unfold: need NCHW");
  int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  int Ho = H + 2 * pad - k + 1, Wo = W + 2 * pad - k + 1;
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("unfold: kernel larger than input");
  Tensor out({C * k * k, N * Ho * Wo});
  const double* xd = xv.data();
  double* od = out.data();
  int64_t cols = static_cast<int64_t>(N) * Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        int64_t row = (static_cast<int64_t>(c) * k + ki) * k + kj;
        double* orow = od + row * cols;
        for (int n = 0; n < N; ++n) {
          const double* xc = xd + (static_cast<int64_t>(n) * C + c) * H * W;
          for (int oi = 0; oi < Ho; ++oi) {
            int ii = oi + ki - pad;
            double* op = orow + (static_cast<int64_t>(n) * Ho + oi) * Wo;
            if (ii < 0 || ii >= H) continue;  // stays zero
            for (int oj = 0; oj < Wo; ++oj) {
              int jj = oj + kj - pad;
              if (jj >= 0 && jj < W) op[oj] = xc[ii * W + jj];
            }
          }
        }
      }
    }
  }
  auto xshape = xv.shape();
  return make(std::move(out), {x}, [xshape, k, pad](const Var& g) {
    return std::vector<Var>{fold(g, xshape, k, pad)};
  });
}

Var fold(const Var& cols_v, std::vector<int> x_shape, int k, int pad) {
  const Tensor& cv = cols_v.val();
  int N = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3];
  int Ho = H + 2 * pad - k + 1, Wo = W + 2 * pad - k + 1;
  if (cv.rank() != 2 || cv.dim(0) != C * k * k ||
      cv.dim(1) != N * Ho * Wo)
    throw std::invalid_argument("fold: shape mismatch");
  Tensor out(x_shape);
  const double* cd = cv.data();
  double* od = out.data();
  int64_t ncols = static_cast<int64_t>(N) * Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        int64_t row = (static_cast<int64_t>(c) * k + ki) * k + kj;
        const double* crow = cd + row * ncols;
        for (int n = 0; n < N; ++n) {
          double* xc = od + (static_cast<int64_t>(n) * C + c) * H * W;
          for (int oi = 0; oi < Ho; ++oi) {
            int ii = oi + ki - pad;
            if (ii < 0 || ii >= H) continue;
            const double* cp = crow + (static_cast<int64_t>(n) * Ho + oi) * Wo;
            for (int oj = 0; oj < Wo; ++oj) {
              int jj = oj + kj - pad;
              if (jj >= 0 && jj < W) xc[ii * W + jj] += cp[oj];
            }
          }
        }
      }
    }
  }
  return make(std::move(out), {cols_v}, [x_shape, k, pad](const Var& g) {
    // fold is linear; its adjoint is unfold of a 4-D gradient
    return std::vector<Var>{unfold(g, k, pad)};
  });
}

Var cm_to_nchw(const Var& y, int n, int c, int h, int w) {
  const Tensor& yv = y.val();
  if (yv.rank() != 2 || yv.dim(0) != c || yv.dim(1) != n * h * w)
    throw std::invalid_argument("cm_to_nchw: shape mismatch");
  Tensor out({n, c, h, w});
  int64_t hw = static_cast<int64_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const double* yr = yv.data() + static_cast<int64_t>(ci) * n * hw;
    for (int ni = 0; ni < n; ++ni) {
      double* op = out.data() + (static_cast<int64_t>(ni) * c + ci) * hw;
      const double* yp = yr + static_cast<int64_t>(ni) * hw;
      for (int64_t i = 0; i < hw; ++i) op[i] = yp[i];
    }
  }
  return make(std::move(out), {y},
              [](const Var& g) { return std::vector<Var>{nchw_to_cm(g)}; });
}

Var nchw_to_cm(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.rank() != 4) throw std::invalid_argument("nchw_to_cm: need NCHW");
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor out({c, n * h * w});
  int64_t hw = static_cast<int64_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    double* orow = out.data() + static_cast<int64_t>(ci) * n * hw;
    for (int ni = 0; ni < n; ++ni) {
      const double* xp = xv.data() + (static_cast<int64_t>(ni) * c + ci) * hw;
      double* op = orow + static_cast<int64_t>(ni) * hw;
      for (int64_t i = 0; i < hw; ++i) op[i] = xp[i];
    }
  }
  return make(std::move(out), {x}, [n, c, h, w](const Var& g) {
    return std::vector<Var>{cm_to_nchw(g, n, c, h, w)};
  });
}

Var upsample2x(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.rank() != 4) throw std::invalid_argument("upsample2x: need NCHW");
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (int nc = 0; nc < n * c; ++nc) {
    const double* xp = xv.data() + static_cast<int64_t>(nc) * h * w;
    double* op = out.data() + static_cast<int64_t>(nc) * 4 * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double v = xp[i * w + j];
        int64_t o = static_cast<int64_t>(2 * i) * 2 * w + 2 * j;
        op[o] = v;
        op[o + 1] = v;
        op[o + 2 * w] = v;
        op[o + 2 * w + 1] = v;
      }
  }
  return make(std::move(out), {x},
              [](const Var& g) { return std::vector<Var>{downsum2x(g)}; });
}

Var downsum2x(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.rank() != 4 || xv.dim(2) % 2 || xv.dim(3) % 2)
    throw std::invalid_argument("downsum2x: need NCHW with even H, W");
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2) / 2, w = xv.dim(3) / 2;
  Tensor out({n, c, h, w});
  for (int nc = 0; nc < n * c; ++nc) {
    const double* xp = xv.data() + static_cast<int64_t>(nc) * 4 * h * w;
    double* op = out.data() + static_cast<int64_t>(nc) * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        int64_t s = static_cast<int64_t>(2 * i) * 2 * w + 2 * j;
        op[i * w + j] = xp[s] + xp[s + 1] + xp[s + 2 * w] + xp[s + 2 * w + 1];
      }
  }
  return make(std::move(out), {x},
              [](const Var& g) { return std::vector<Var>{upsample2x(g)}; });
}

Var avgpool2x(const Var& x) { return scale(downsum2x(x), 0.25); }

Var broadcast_chan(const Var& b, int n, int h, int w) {
  if (b.val().rank() != 1) throw std::invalid_argument("broadcast_chan: need rank 1");
  int c = b.val().dim(0);
  Tensor out({n, c, h, w});
  int64_t hw = static_cast<int64_t>(h) * w;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      double* op = out.data() + (static_cast<int64_t>(ni) * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) op[i] = b.val()[ci];
    }
  return make(std::move(out), {b},
              [](const Var& g) { return std::vector<Var>{sum_nhw(g)}; });
}

Var sum_nhw(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.rank() != 4) throw std::invalid_argument("sum_nhw: need NCHW");
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor out({c});
  int64_t hw = static_cast<int64_t>(h) * w;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci) {
      const double* xp = xv.data() + (static_cast<int64_t>(ni) * c + ci) * hw;
      double s = 0.0;
      for (int64_t i = 0; i < hw; ++i) s += xp[i];
      out[ci] += s;
    }
  return make(std::move(out), {x}, [n, h, w](const Var& g) {
    return std::vector<Var>{broadcast_chan(g, n, h, w)};
  });
}

Var broadcast_kernel(const Var& m, int k1, int k2) {
  if (m.val().rank() != 2) throw std::invalid_argument("broadcast_kernel: need rank 2");
  int co = m.val().dim(0), ci = m.val().dim(1);
  Tensor out({co, ci, k1, k2});
  int64_t kk = static_cast<int64_t>(k1) * k2;
  for (int64_t p = 0; p < static_cast<int64_t>(co) * ci; ++p) {
    double v = m.val()[p];
    double* op = out.data() + p * kk;
    for (int64_t i = 0; i < kk; ++i) op[i] = v;
  }
  return make(std::move(out), {m},
              [](const Var& g) { return std::vector<Var>{kernel_sum(g)}; });
}

Var kernel_sum(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.rank() != 4) throw std::invalid_argument("kernel_sum: need rank 4");
  int co = xv.dim(0), ci = xv.dim(1), k1 = xv.dim(2), k2 = xv.dim(3);
  Tensor out({co, ci});
  int64_t kk = static_cast<int64_t>(k1) * k2;
  for (int64_t p = 0; p < static_cast<int64_t>(co) * ci; ++p) {
    const double* xp = xv.data() + p * kk;
    double s = 0.0;
    for (int64_t i = 0; i < kk; ++i) s += xp[i];
    out[p] = s;
  }
  return make(std::move(out), {x}, [k1, k2](const Var& g) {
    return std::vector<Var>{broadcast_kernel(g, k1, k2)};
  });
}

Var gather_rows(const Var& mat, std::vector<int> rows) {
  const Tensor& m = mat.val();
  if (m.rank() != 2) throw std::invalid_argument("gather_rows: need rank 2");
  int d = m.dim(1), nr = m.dim(0);
  Tensor out({static_cast<int>(rows.size()), d});
  for (size_t i = 0; i < rows.size(); ++i) {
    int r = rows[i];
    if (r < 0 || r >= nr) throw std::out_of_range("gather_rows: row index out of range");
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = m.at(r, j);
  }
  return make(std::move(out), {mat}, [rows, nr](const Var& g) {
    return std::vector<Var>{scatter_rows(g, rows, nr)};
  });
}

Var scatter_rows(const Var& mat, std::vector<int> rows, int n_rows) {
  const Tensor& m = mat.val();
  if (m.rank() != 2 || m.dim(0) != static_cast<int>(rows.size()))
    throw std::invalid_argument("scatter_rows: shape mismatch");
  int d = m.dim(1);
  Tensor out({n_rows, d});
  for (size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < d; ++j) out.at(rows[i], j) += m.at(static_cast<int>(i), j);
  return make(std::move(out), {mat}, [rows](const Var& g) {
    return std::vector<Var>{gather_rows(g, rows)};
  });
}

Var conv2d(const Var& x, const Var& w, int pad) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(1) ||
      wv.dim(2) != wv.dim(3))
    throw std::invalid_argument("conv2d: incompatible shapes");
  int n = xv.dim(0), co = wv.dim(0), ci = wv.dim(1), k = wv.dim(2);
  int ho = xv.dim(2) + 2 * pad - k + 1, wo = xv.dim(3) + 2 * pad - k + 1;
  Var cols = unfold(x, k, pad);
  Var w2 = reshape(w, {co, ci * k * k});
  Var y = matmul(w2, cols);
  return cm_to_nchw(y, n, co, ho, wo);
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Var y = matmul(x, transpose(w));
  return add(y, tile_rows(b, x.val().dim(0)));
}

std::vector<Var> grad(const Var& out, const std::vector<Var>& wrt, const Var& seed) {
  if (!out.defined()) throw std::invalid_argument("grad: undefined output");
  // topological order over the requires_grad subgraph
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::unordered_map<Node*, Var> var_of;
  struct Frame {
    Var v;
    size_t next = 0;
  };
  std::vector<Frame> stack;
  if (out.requires_grad()) stack.push_back({out});
  while (!stack.empty()) {
    Frame& f = stack.back();
    Node* n = f.v.raw();
    if (f.next == 0) {
      if (visited.count(n)) {
        stack.pop_back();
        continue;
      }
      visited.insert(n);
      var_of.emplace(n, f.v);
    }
    bool descended = false;
    while (f.next < n->parents.size()) {
      const Var& p = n->parents[f.next++];
      if (p.requires_grad() && !visited.count(p.raw())) {
        stack.push_back({p});
        descended = true;
        break;
      }
    }
    if (!descended && f.next >= n->parents.size()) {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  std::unordered_map<Node*, Var> grads;
  Var g0 = seed.defined()
               ? seed
               : constant(Tensor::full(out.val().shape(), 1.0));
  if (!g0.val().same_shape(out.val()))
    throw std::invalid_argument("grad: seed shape mismatch");
  grads[out.raw()] = g0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    auto git = grads.find(n);
    if (git == grads.end() || !n->backward) continue;
    std::vector<Var> pgrads = n->backward(git->second);
    if (pgrads.size() != n->parents.size())
      throw std::logic_error("grad: backward arity mismatch");
    for (size_t i = 0; i < pgrads.size(); ++i) {
      const Var& p = n->parents[i];
      if (!p.requires_grad()) continue;
      auto pit = grads.find(p.raw());
      if (pit == grads.end())
        grads[p.raw()] = pgrads[i];
      else
        pit->second = add(pit->second, pgrads[i]);
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const auto& v : wrt) {
    auto it = grads.find(v.raw());
    if (it != grads.end())
      result.push_back(it->second);
    else
      result.push_back(constant(Tensor::zeros(v.val().shape())));
  }
  return result;
}

}  // namespace ganmem::ad
