#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ganmem/tensor.hpp"

namespace ganmem::ad {

// Reverse-mode autodiff over Tensor values. Backward functions emit graph
// nodes themselves, so gradients are differentiable again (needed for the
// R1 penalty, whose gradient w.r.t. discriminator parameters differentiates
// through an input-gradient computation).

class Var;

struct Node {
  Tensor value;
  std::vector<Var> parents;
  // Given the gradient flowing into this node, produce gradients for each
  // parent (same order as `parents`). Empty for leaves and constants.
  std::function<std::vector<Var>(const Var&)> backward;
  bool requires_grad = false;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& val() const { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node* raw() const { return node_.get(); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor t);
Var leaf(Tensor t);        // gradient target
Var detach(const Var& a);  // value passthrough, blocks gradient flow

// Elementwise / scalar
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var mul_const(const Var& a, const Tensor& c);  // a ⊙ c, c fixed

Var leaky_relu(const Var& a, double alpha);
Var tanh_v(const Var& a);
Var sigmoid_v(const Var& a);
Var softplus(const Var& a);     // log(1+e^x), overflow-safe
Var log_sigmoid(const Var& a);  // -softplus(-x)
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var abs_v(const Var& a);
Var softsign(const Var& a);  // x / (1 + |x|)
Var leaky_clamp(const Var& a, double alpha);  // identity on [-1,1], slope alpha outside

// Shape / reduction
Var reshape(const Var& a, std::vector<int> shape);
Var sum(const Var& a);   // -> [1]
Var mean(const Var& a);  // -> [1]
Var rowsum(const Var& a);               // [m,n] -> [m]
Var colsum(const Var& a);               // [m,n] -> [n]
Var broadcast_full(const Var& s, std::vector<int> shape);  // [1] -> shape
Var broadcast_row(const Var& v, int n);  // [m] -> [m,n], out[i,j]=v[i]
Var tile_rows(const Var& v, int n);      // [d] -> [n,d], out[i,j]=v[j]

// Linear algebra
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var scale_cols(const Var& m, const Var& d);  // [r,k]*[k] columnwise

// Conv plumbing (NCHW, stride 1)
Var unfold(const Var& x, int k, int pad);
Var fold(const Var& cols, std::vector<int> x_shape, int k, int pad);
Var cm_to_nchw(const Var& y, int n, int c, int h, int w);
Var nchw_to_cm(const Var& x);
Var upsample2x(const Var& x);
Var downsum2x(const Var& x);
Var avgpool2x(const Var& x);
Var broadcast_chan(const Var& b, int n, int h, int w);  // [C] -> [N,C,H,W]
Var sum_nhw(const Var& x);                              // [N,C,H,W] -> [C]
Var broadcast_kernel(const Var& m, int k1, int k2);  // [Co,Ci] -> [Co,Ci,k1,k2]
Var kernel_sum(const Var& x);                        // [Co,Ci,k1,k2] -> [Co,Ci]

// Class-conditional row selection
Var gather_rows(const Var& mat, std::vector<int> rows);
Var scatter_rows(const Var& mat, std::vector<int> rows, int n_rows);

// Composites
Var conv2d(const Var& x, const Var& w, int pad);        // w: [Co,Ci,k,k]
Var linear(const Var& x, const Var& w, const Var& b);   // x:[N,din] w:[dout,din]

// Gradients of `out` (scalar unless `seed` given) w.r.t. `wrt`. Entries whose
// node is unreachable get zero tensors of matching shape. The returned Vars
// are themselves part of the graph and can be differentiated again.
std::vector<Var> grad(const Var& out, const std::vector<Var>& wrt,
                      const Var& seed = Var());

}  // namespace ganmem::ad
