#pragma once
// Differentiable operations over Tensor. Every op computes its forward value
// and, when a tape is supplied and some input carries a gradient buffer,
// records an exact reverse step. Pass tape = nullptr for evaluation-only
// forwards.

#include "firecast/common.hpp"
#include "firecast/tensor.hpp"

namespace firecast::nn {

// y[n,p] = a[n,m] * b[m,p]
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

// y[n,m] = x[n,d] * w[d,m] + b[m] (b broadcast over rows)
Tensor dense(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b);

// y[m,n] = x[n,m]^T
Tensor transpose(Tape* tape, const Tensor& x);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor hadamard(Tape* tape, const Tensor& a, const Tensor& b);

// y = mul * x + shift, elementwise
Tensor affine(Tape* tape, const Tensor& x, double mul, double shift);
inline Tensor scalar_mul(Tape* tape, const Tensor& x, double c) { return affine(tape, x, c, 0.0); }
inline Tensor one_minus(Tape* tape, const Tensor& x) { return affine(tape, x, -1.0, 1.0); }

Tensor sigmoid(Tape* tape, const Tensor& x);
Tensor tanh(Tape* tape, const Tensor& x);
Tensor relu(Tape* tape, const Tensor& x);

// Row-wise softmax of a [n,m] matrix; rows sum to 1.
Tensor softmax_rows(Tape* tape, const Tensor& x);

// Concatenate [n,mi] matrices along the feature axis into [n, sum(mi)].
Tensor concat_cols(Tape* tape, const std::vector<Tensor>& xs);

// Columns [c0, c1) of a [n,m] matrix.
Tensor slice_cols(Tape* tape, const Tensor& x, int c0, int c1);

// Same data and gradient buffers under a new shape (no copy, nothing taped).
Tensor reshape(const Tensor& x, Shape s);

// Cross-correlation with zero padding preserving HxW.
// x: [C_in,H,W], k: [C_out,C_in,kh,kw] (kh, kw odd), b: [C_out] or undefined.
Tensor conv2d_same(Tape* tape, const Tensor& x, const Tensor& k, const Tensor& b);

// Inverted dropout: train mode zeroes with probability p and scales survivors
// by 1/(1-p); eval mode is the identity.
Tensor dropout(Tape* tape, const Tensor& x, double p, bool train_mode, Rng& rng);

struct AttentionParams {
  Tensor wq, bq;  // [d, d_model], [d_model]
  Tensor wk, bk;
  Tensor wv, bv;
  Tensor wo, bo;  // [d_model, d_model], [d_model]
  int heads = 4;
};

// Scaled dot-product self-attention over the rows of x [n,d]; per-head
// results are concatenated and output-projected to [n, d_model].
Tensor multi_head_self_attention(Tape* tape, const Tensor& x, const AttentionParams& p);

}  // namespace firecast::nn
