#include "firecast/ops.hpp"

#include <cmath>

namespace firecast::nn {

namespace {

bool track(const Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins) {
    if (t->defined() && t->has_grad()) return true;
  }
  return false;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// c[n,p] += a[n,m] * b[m,p]
void mm_acc(const double* a, const double* b, double* c, int n, int m, int p) {
  for (int i = 0; i < n; ++i) {
    const double* ai = a + static_cast<size_t>(i) * m;
    double* ci = c + static_cast<size_t>(i) * p;
    for (int k = 0; k < m; ++k) {
      const double aik = ai[k];
      const double* bk = b + static_cast<size_t>(k) * p;
      for (int j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
}

// da[n,m] += g[n,p] * b[m,p]^T
void mm_acc_gbt(const double* g, const double* b, double* da, int n, int m, int p) {
  for (int i = 0; i < n; ++i) {
    const double* gi = g + static_cast<size_t>(i) * p;
    double* dai = da + static_cast<size_t>(i) * m;
    for (int k = 0; k < m; ++k) {
      const double* bk = b + static_cast<size_t>(k) * p;
      double s = 0.0;
      for (int j = 0; j < p; ++j) s += gi[j] * bk[j];
      dai[k] += s;
    }
  }
}

// db[m,p] += a[n,m]^T * g[n,p]
void mm_acc_atg(const double* a, const double* g, double* db, int n, int m, int p) {
  for (int i = 0; i < n; ++i) {
    const double* ai = a + static_cast<size_t>(i) * m;
    const double* gi = g + static_cast<size_t>(i) * p;
    for (int k = 0; k < m; ++k) {
      const double aik = ai[k];
      double* dbk = db + static_cast<size_t>(k) * p;
      for (int j = 0; j < p; ++j) dbk[j] += aik * gi[j];
    }
  }
}

Tensor elementwise(Tape* tape, const Tensor& x, double (*fwd)(double),
                   double (*dydx_from_xy)(double, double)) {
  const auto n = static_cast<size_t>(x.numel());
  Tensor y = Tensor::zeros(x.shape, track(tape, {&x}));
  for (size_t i = 0; i < n; ++i) (*y.data)[i] = fwd((*x.data)[i]);
  if (y.has_grad()) {
    tape->record([xd = x.data, xg = x.grad, yd = y.data, yg = y.grad, n, dydx_from_xy] {
      for (size_t i = 0; i < n; ++i) {
        (*xg)[i] += (*yg)[i] * dydx_from_xy((*xd)[i], (*yd)[i]);
      }
    });
  }
  return y;
}

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul: operands must be 2-D");
  require(a.dim(1) == b.dim(0), "matmul: inner dimensions differ: " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
  const int n = a.dim(0), m = a.dim(1), p = b.dim(1);
  Tensor y = Tensor::zeros({n, p}, track(tape, {&a, &b}));
  mm_acc(a.ptr(), b.ptr(), y.ptr(), n, m, p);
  if (y.has_grad()) {
    tape->record([ad = a.data, ag = a.grad, bd = b.data, bg = b.grad, yg = y.grad, n, m, p] {
      if (ag) mm_acc_gbt(yg->data(), bd->data(), ag->data(), n, m, p);
      if (bg) mm_acc_atg(ad->data(), yg->data(), bg->data(), n, m, p);
    });
  }
  return y;
}

Tensor dense(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.ndim() == 2 && w.ndim() == 2, "dense: x and w must be 2-D");
  require(x.dim(1) == w.dim(0), "dense: x cols != w rows");
  require(b.ndim() == 1 && b.dim(0) == w.dim(1), "dense: bias shape mismatch");
  const int n = x.dim(0), m = w.dim(1);
  Tensor y = Tensor::zeros({n, m}, track(tape, {&x, &w, &b}));
  for (int i = 0; i < n; ++i) {
    double* yi = y.ptr() + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) yi[j] = b.at(j);
  }
  mm_acc(x.ptr(), w.ptr(), y.ptr(), n, x.dim(1), m);
  if (y.has_grad()) {
    const int d = x.dim(1);
    tape->record([xd = x.data, xg = x.grad, wd = w.data, wg = w.grad, bg = b.grad, yg = y.grad, n,
                  d, m] {
      if (xg) mm_acc_gbt(yg->data(), wd->data(), xg->data(), n, d, m);
      if (wg) mm_acc_atg(xd->data(), yg->data(), wg->data(), n, d, m);
      if (bg) {
        for (int i = 0; i < n; ++i) {
          const double* gi = yg->data() + static_cast<size_t>(i) * m;
          for (int j = 0; j < m; ++j) (*bg)[static_cast<size_t>(j)] += gi[j];
        }
      }
    });
  }
  return y;
}

Tensor transpose(Tape* tape, const Tensor& x) {
  require(x.ndim() == 2, "transpose: 2-D only");
  const int n = x.dim(0), m = x.dim(1);
  Tensor y = Tensor::zeros({m, n}, track(tape, {&x}));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) y.at(j, i) = x.at(i, j);
  }
  if (y.has_grad()) {
    tape->record([xg = x.grad, yg = y.grad, n, m] {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
          (*xg)[static_cast<size_t>(i) * m + j] += (*yg)[static_cast<size_t>(j) * n + i];
        }
      }
    });
  }
  return y;
}

namespace {

Tensor binary_linear(Tape* tape, const Tensor& a, const Tensor& b, double sb) {
  require(a.shape == b.shape, "elementwise op: shape mismatch " + shape_str(a.shape) + " vs " +
                                  shape_str(b.shape));
  const auto n = static_cast<size_t>(a.numel());
  Tensor y = Tensor::zeros(a.shape, track(tape, {&a, &b}));
  for (size_t i = 0; i < n; ++i) (*y.data)[i] = (*a.data)[i] + sb * (*b.data)[i];
  if (y.has_grad()) {
    tape->record([ag = a.grad, bg = b.grad, yg = y.grad, n, sb] {
      for (size_t i = 0; i < n; ++i) {
        if (ag) (*ag)[i] += (*yg)[i];
        if (bg) (*bg)[i] += sb * (*yg)[i];
      }
    });
  }
  return y;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) { return binary_linear(tape, a, b, 1.0); }
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) { return binary_linear(tape, a, b, -1.0); }

Tensor hadamard(Tape* tape, const Tensor& a, const Tensor& b) {
  require(a.shape == b.shape, "hadamard: shape mismatch");
  const auto n = static_cast<size_t>(a.numel());
  Tensor y = Tensor::zeros(a.shape, track(tape, {&a, &b}));
  for (size_t i = 0; i < n; ++i) (*y.data)[i] = (*a.data)[i] * (*b.data)[i];
  if (y.has_grad()) {
    tape->record([ad = a.data, ag = a.grad, bd = b.data, bg = b.grad, yg = y.grad, n] {
      for (size_t i = 0; i < n; ++i) {
        if (ag) (*ag)[i] += (*yg)[i] * (*bd)[i];
        if (bg) (*bg)[i] += (*yg)[i] * (*ad)[i];
      }
    });
  }
  return y;
}

Tensor affine(Tape* tape, const Tensor& x, double mul, double shift) {
  const auto n = static_cast<size_t>(x.numel());
  Tensor y = Tensor::zeros(x.shape, track(tape, {&x}));
  for (size_t i = 0; i < n; ++i) (*y.data)[i] = mul * (*x.data)[i] + shift;
  if (y.has_grad()) {
    tape->record([xg = x.grad, yg = y.grad, n, mul] {
      for (size_t i = 0; i < n; ++i) (*xg)[i] += mul * (*yg)[i];
    });
  }
  return y;
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
  return elementwise(
      tape, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape* tape, const Tensor& x) {
  return elementwise(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(Tape* tape, const Tensor& x) {
  return elementwise(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softmax_rows(Tape* tape, const Tensor& x) {
  require(x.ndim() == 2, "softmax_rows: 2-D only");
  const int n = x.dim(0), m = x.dim(1);
  Tensor y = Tensor::zeros(x.shape, track(tape, {&x}));
  for (int i = 0; i < n; ++i) {
    const double* xi = x.ptr() + static_cast<size_t>(i) * m;
    double* yi = y.ptr() + static_cast<size_t>(i) * m;
    double mx = xi[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (int j = 0; j < m; ++j) yi[j] /= sum;
  }
  if (y.has_grad()) {
    tape->record([xg = x.grad, yd = y.data, yg = y.grad, n, m] {
      for (int i = 0; i < n; ++i) {
        const double* yi = yd->data() + static_cast<size_t>(i) * m;
        const double* gi = yg->data() + static_cast<size_t>(i) * m;
        double dot = 0.0;
        for (int j = 0; j < m; ++j) dot += gi[j] * yi[j];
        double* xi = xg->data() + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) xi[j] += yi[j] * (gi[j] - dot);
      }
    });
  }
  return y;
}

Tensor concat_cols(Tape* tape, const std::vector<Tensor>& xs) {
  require(!xs.empty(), "concat_cols: empty input list");
  const int n = xs[0].dim(0);
  int total = 0;
  bool tracked = false;
  for (const Tensor& x : xs) {
    require(x.ndim() == 2 && x.dim(0) == n, "concat_cols: row count mismatch");
    total += x.dim(1);
    tracked = tracked || (tape && x.has_grad());
  }
  Tensor y = Tensor::zeros({n, total}, tracked);
  int col = 0;
  for (const Tensor& x : xs) {
    const int m = x.dim(1);
    for (int i = 0; i < n; ++i) {
      const double* xi = x.ptr() + static_cast<size_t>(i) * m;
      double* yi = y.ptr() + static_cast<size_t>(i) * total + col;
      for (int j = 0; j < m; ++j) yi[j] = xi[j];
    }
    col += m;
  }
  if (tracked) {
    std::vector<std::shared_ptr<std::vector<double>>> grads;
    std::vector<int> widths;
    grads.reserve(xs.size());
    for (const Tensor& x : xs) {
      grads.push_back(x.grad);
      widths.push_back(x.dim(1));
    }
    tape->record([grads, widths, yg = y.grad, n, total] {
      int c = 0;
      for (size_t s = 0; s < grads.size(); ++s) {
        const int m = widths[s];
        if (grads[s]) {
          for (int i = 0; i < n; ++i) {
            const double* gi = yg->data() + static_cast<size_t>(i) * total + c;
            double* xi = grads[s]->data() + static_cast<size_t>(i) * m;
            for (int j = 0; j < m; ++j) xi[j] += gi[j];
          }
        }
        c += m;
      }
    });
  }
  return y;
}

Tensor slice_cols(Tape* tape, const Tensor& x, int c0, int c1) {
  require(x.ndim() == 2, "slice_cols: 2-D only");
  require(0 <= c0 && c0 < c1 && c1 <= x.dim(1), "slice_cols: range out of bounds");
  const int n = x.dim(0), m = x.dim(1), w = c1 - c0;
  Tensor y = Tensor::zeros({n, w}, track(tape, {&x}));
  for (int i = 0; i < n; ++i) {
    const double* xi = x.ptr() + static_cast<size_t>(i) * m + c0;
    double* yi = y.ptr() + static_cast<size_t>(i) * w;
    for (int j = 0; j < w; ++j) yi[j] = xi[j];
  }
  if (y.has_grad()) {
    tape->record([xg = x.grad, yg = y.grad, n, m, w, c0] {
      for (int i = 0; i < n; ++i) {
        const double* gi = yg->data() + static_cast<size_t>(i) * w;
        double* xi = xg->data() + static_cast<size_t>(i) * m + c0;
        for (int j = 0; j < w; ++j) xi[j] += gi[j];
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape s) {
  require(shape_numel(s) == x.numel(), "reshape: element count mismatch");
  Tensor y = x;
  y.shape = std::move(s);
  return y;
}

Tensor conv2d_same(Tape* tape, const Tensor& x, const Tensor& k, const Tensor& b) {
  require(x.ndim() == 3 && k.ndim() == 4, "conv2d_same: x must be [C,H,W], k [Co,Ci,kh,kw]");
  const int ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  require(k.dim(1) == ci, "conv2d_same: channel mismatch");
  require(kh % 2 == 1 && kw % 2 == 1, "conv2d_same: kernel sides must be odd");
  const bool has_bias = b.defined();
  if (has_bias) require(b.ndim() == 1 && b.dim(0) == co, "conv2d_same: bias shape mismatch");
  const int ph = kh / 2, pw = kw / 2;

  Tensor y = Tensor::zeros({co, h, w}, track(tape, {&x, &k, &b}));
  const double* xp = x.ptr();
  const double* kp = k.ptr();
  double* yp = y.ptr();
  for (int o = 0; o < co; ++o) {
    const double bias = has_bias ? b.at(o) : 0.0;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double acc = bias;
        for (int c = 0; c < ci; ++c) {
          for (int u = 0; u < kh; ++u) {
            const int a = i + u - ph;
            if (a < 0 || a >= h) continue;
            const double* xrow = xp + (static_cast<size_t>(c) * h + a) * w;
            const double* krow = kp + ((static_cast<size_t>(o) * ci + c) * kh + u) * kw;
            for (int v = 0; v < kw; ++v) {
              const int bcol = j + v - pw;
              if (bcol < 0 || bcol >= w) continue;
              acc += xrow[bcol] * krow[v];
            }
          }
        }
        yp[(static_cast<size_t>(o) * h + i) * w + j] = acc;
      }
    }
  }
  if (y.has_grad()) {
    tape->record([xd = x.data, xg = x.grad, kd = k.data, kg = k.grad,
                  bg = has_bias ? b.grad : nullptr, yg = y.grad, ci, co, h, w, kh, kw, ph, pw] {
      const double* xp2 = xd->data();
      const double* kp2 = kd->data();
      const double* gp = yg->data();
      for (int o = 0; o < co; ++o) {
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < w; ++j) {
            const double g = gp[(static_cast<size_t>(o) * h + i) * w + j];
            if (bg) (*bg)[static_cast<size_t>(o)] += g;
            for (int c = 0; c < ci; ++c) {
              for (int u = 0; u < kh; ++u) {
                const int a = i + u - ph;
                if (a < 0 || a >= h) continue;
                for (int v = 0; v < kw; ++v) {
                  const int bcol = j + v - pw;
                  if (bcol < 0 || bcol >= w) continue;
                  const size_t xi = (static_cast<size_t>(c) * h + a) * w + bcol;
                  const size_t ki = ((static_cast<size_t>(o) * ci + c) * kh + u) * kw + v;
                  if (kg) (*kg)[ki] += g * xp2[xi];
                  if (xg) (*xg)[xi] += g * kp2[ki];
                }
              }
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor dropout(Tape* tape, const Tensor& x, double p, bool train_mode, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!train_mode || p == 0.0) return x;
  const auto n = static_cast<size_t>(x.numel());
  const double scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(n);
  for (size_t i = 0; i < n; ++i) (*mask)[i] = rng.bernoulli(p) ? 0.0 : scale;
  Tensor y = Tensor::zeros(x.shape, track(tape, {&x}));
  for (size_t i = 0; i < n; ++i) (*y.data)[i] = (*x.data)[i] * (*mask)[i];
  if (y.has_grad()) {
    tape->record([xg = x.grad, yg = y.grad, mask, n] {
      for (size_t i = 0; i < n; ++i) (*xg)[i] += (*yg)[i] * (*mask)[i];
    });
  }
  return y;
}

Tensor multi_head_self_attention(Tape* tape, const Tensor& x, const AttentionParams& p) {
  require(x.ndim() == 2, "attention: x must be [n,d]");
  const int d_model = p.wq.dim(1);
  require(p.heads >= 1, "attention: heads must be >= 1");
  require(d_model % p.heads == 0, "attention: d_model not divisible by head count");
  const int dk = d_model / p.heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor q = dense(tape, x, p.wq, p.bq);
  Tensor k = dense(tape, x, p.wk, p.bk);
  Tensor v = dense(tape, x, p.wv, p.bv);

  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(p.heads));
  for (int hidx = 0; hidx < p.heads; ++hidx) {
    const int c0 = hidx * dk, c1 = (hidx + 1) * dk;
    Tensor qh = slice_cols(tape, q, c0, c1);
    Tensor kh = slice_cols(tape, k, c0, c1);
    Tensor vh = slice_cols(tape, v, c0, c1);
    Tensor scores = scalar_mul(tape, matmul(tape, qh, transpose(tape, kh)), inv_sqrt_dk);
    Tensor weights = softmax_rows(tape, scores);
    heads.push_back(matmul(tape, weights, vh));
  }
  Tensor merged = concat_cols(tape, heads);
  return dense(tape, merged, p.wo, p.bo);
}

}  // namespace firecast::nn
