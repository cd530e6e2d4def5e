#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "stainforge/errors.hpp"

namespace stainforge::ad {

// Reverse-mode tape over flat double arrays. Tensors are stored row-major as
// (channels, height, width); vectors use dims {1, 1, n}. The engine is
// single-threaded and allocation order is deterministic, which the
// reproducibility contract of the training loops relies on.

using Arr = Eigen::ArrayXd;

struct Dims {
    int c = 1, h = 1, w = 1;
    int size() const { return c * h * w; }
    bool operator==(const Dims&) const = default;
};

inline Dims vec_dims(int n) { return {1, 1, n}; }
inline Dims scalar_dims() { return {1, 1, 1}; }

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Arr val;
    Arr grad;  // allocated by backward()
    Dims dims;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> back;  // reads this->grad, accumulates into parents

    double scalar() const { return val[0]; }
};

Var constant(Arr v, Dims d);
Var constant_scalar(double v);
Var leaf(Arr v, Dims d);  // trainable: participates in gradients

void ensure_grad(Node& n);

// Runs reverse accumulation from a scalar root. Grad buffers of every node in
// the reachable graph are reset first, so leaves carry exactly this call's
// gradient afterwards.
void backward(const Var& root);

// Elementwise; one operand may be a 1-element scalar, which broadcasts.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var add_const(const Var& a, double c);
Var mul_const(const Var& a, double c);
Var neg(const Var& a);

Var vsum(const Var& a);
Var vmean(const Var& a);
Var dot(const Var& a, const Var& b);

Var vexp(const Var& a);
Var vlog(const Var& a);
Var vtanh(const Var& a);
Var vsigmoid(const Var& a);
Var vrelu(const Var& a);
Var vlrelu(const Var& a, double slope);
Var vsquare(const Var& a);
Var vsqrt(const Var& a);
Var vabs(const Var& a);
// Gradient passes through where lo < value < hi, zero outside.
Var vclamp(const Var& a, double lo, double hi);

// y = W x with a fixed (non-learnable) matrix.
Var matvec_const(std::shared_ptr<const Eigen::MatrixXd> W, const Var& x);

// y = W x + b with learnable W {1, rows, cols} (row-major flat) and b {rows}.
Var linear(const Var& W, const Var& x, const Var& b);

// x {Cin,H,W}, w {1, Cout, Cin*kh*kw}, b {Cout}; zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int kh, int kw, int stride, int pad);

// Ceil-mode non-overlapping mean pooling; border windows are clipped.
Var avg_pool(const Var& x, int fy, int fx);

Var upsample_nearest(const Var& x, int f);

// Per-channel 'valid' correlation with a fixed 1-D kernel along x / along y.
Var filter1d_x(const Var& x, const Eigen::VectorXd& k);
Var filter1d_y(const Var& x, const Eigen::VectorXd& k);

Var add_channel_bias(const Var& x, const Var& b);

Var softmax_vec(const Var& x);

Var concat(const std::vector<Var>& parts);
Var pick(const Var& x, int index);
// Row `index` of a {1, rows, cols} tensor as a {cols} vector.
Var pick_row(const Var& x, int index);

// Composites.
Var l2_norm(const Var& a);
Var normalize(const Var& a);          // a / ||a||2
Var cosine(const Var& a, const Var& b);

}  // namespace stainforge::ad
