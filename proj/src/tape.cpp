#include "vtbench/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

#include "vtbench/rng.hpp"

namespace vtb::dc {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapC = Eigen::Map<const MatRM<T>>;

struct ConvDims {
  int n, c, h, w, oc, k, oh, ow;
};

ConvDims conv_dims(const std::vector<int>& x, const std::vector<int>& wt) {
  ConvDims d{};
  d.n = x[0];
  d.c = x[1];
  d.h = x[2];
  d.w = x[3];
  d.oc = wt[0];
  d.k = wt[2];
  d.oh = (d.h + 2 - d.k) / 2 + 1;
  d.ow = (d.w + 2 - d.k) / 2 + 1;
  return d;
}

// cols[(n*OH+oh)*OW+ow, (c*K+kh)*K+kw] = x[n,c,ih,iw], zero outside.
template <typename T>
void im2col(const T* x, const ConvDims& d, T* cols) {
  const int ckk = d.c * d.k * d.k;
  for (int n = 0; n < d.n; ++n) {
    const T* xn = x + static_cast<int64_t>(n) * d.c * d.h * d.w;
    for (int oh = 0; oh < d.oh; ++oh) {
      for (int ow = 0; ow < d.ow; ++ow) {
        T* row = cols + (static_cast<int64_t>((n * d.oh + oh) * d.ow + ow)) * ckk;
        for (int c = 0; c < d.c; ++c) {
          const T* xc = xn + static_cast<int64_t>(c) * d.h * d.w;
          for (int kh = 0; kh < d.k; ++kh) {
            const int ih = oh * 2 + kh - 1;
            for (int kw = 0; kw < d.k; ++kw) {
              const int iw = ow * 2 + kw - 1;
              T v = T(0);
              if (ih >= 0 && ih < d.h && iw >= 0 && iw < d.w)
                v = xc[ih * d.w + iw];
              row[(c * d.k + kh) * d.k + kw] = v;
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvDims& d, T* x) {
  const int ckk = d.c * d.k * d.k;
  for (int n = 0; n < d.n; ++n) {
    T* xn = x + static_cast<int64_t>(n) * d.c * d.h * d.w;
    for (int oh = 0; oh < d.oh; ++oh) {
      for (int ow = 0; ow < d.ow; ++ow) {
        const T* row = cols + (static_cast<int64_t>((n * d.oh + oh) * d.ow + ow)) * ckk;
        for (int c = 0; c < d.c; ++c) {
          T* xc = xn + static_cast<int64_t>(c) * d.h * d.w;
          for (int kh = 0; kh < d.k; ++kh) {
            const int ih = oh * 2 + kh - 1;
            if (ih < 0 || ih >= d.h) continue;
            for (int kw = 0; kw < d.k; ++kw) {
              const int iw = ow * 2 + kw - 1;
              if (iw < 0 || iw >= d.w) continue;
              xc[ih * d.w + iw] += row[(c * d.k + kh) * d.k + kw];
            }
          }
        }
      }
    }
  }
}

// [N,OC,OH,OW] <-> rows [(n*OH+oh)*OW+ow, oc]
template <typename T>
void rows_to_chw(const T* rows, int n, int oc, int ohw, T* out) {
  for (int i = 0; i < n; ++i) {
    MapC<T> r(rows + static_cast<int64_t>(i) * ohw * oc, ohw, oc);
    MapM<T> o(out + static_cast<int64_t>(i) * oc * ohw, oc, ohw);
    o = r.transpose();
  }
}

template <typename T>
void chw_to_rows(const T* chw, int n, int oc, int ohw, T* rows) {
  for (int i = 0; i < n; ++i) {
    MapC<T> o(chw + static_cast<int64_t>(i) * oc * ohw, oc, ohw);
    MapM<T> r(rows + static_cast<int64_t>(i) * ohw * oc, ohw, oc);
    r = o.transpose();
  }
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(static_cast<double>(t[i]))) return false;
  return true;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kDense: return "dense";
    case Op::kConv2d: return "conv2d";
    case Op::kDeconv2d: return "deconv2d";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSilu: return "silu";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSoftplus: return "softplus";
    case Op::kSumAll: return "sum_all";
    case Op::kMeanAll: return "mean_all";
    case Op::kSumLast: return "sum_last";
    case Op::kMaxConst: return "max_const";
    case Op::kConcatRows: return "concat_rows";
    case Op::kConcatLast: return "concat_last";
    case Op::kSliceRows: return "slice_rows";
    case Op::kSliceLast: return "slice_last";
    case Op::kReshape: return "reshape";
    case Op::kDetach: return "detach";
  }
  return "?";
}

template <typename T>
void Tape<T>::fail(const std::string& msg, Op op, int id) const {
  throw std::invalid_argument("tape node " + std::to_string(id) + " (" +
                              op_name(op) + "): " + msg);
}

template <typename T>
Var<T> Tape<T>::push(Node n) {
  for (int i : n.in)
    n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(i)].needs_grad;
#ifndef NDEBUG
  if (!all_finite(n.value))
    fail("non-finite value produced", n.op, static_cast<int>(nodes_.size()));
#endif
  nodes_.push_back(std::move(n));
  return Var<T>{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::leaf(const Tensor<T>& value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = value;
  n.needs_grad = value.requires_grad;
  nodes_.push_back(std::move(n));
  return Var<T>{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::constant(const Tensor<T>& value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = value;
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return Var<T>{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::dense(Var<T> x, Var<T> w, Var<T> b) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& wv = value(w);
  const Tensor<T>& bv = value(b);
  if (xv.ndim() != 2 || wv.ndim() != 2 || bv.ndim() != 1 ||
      xv.dim(1) != wv.dim(0) || wv.dim(1) != bv.dim(0))
    fail("shape mismatch x" + shape_str(xv.shape()) + " w" + shape_str(wv.shape()) +
             " b" + shape_str(bv.shape()),
         Op::kDense, size());
  const int n = xv.dim(0), i = xv.dim(1), o = wv.dim(1);
  Node nd;
  nd.op = Op::kDense;
  nd.in = {x.id, w.id, b.id};
  nd.value = Tensor<T>({n, o});
  MapM<T> out(nd.value.ptr(), n, o);
  out.noalias() = MapC<T>(xv.ptr(), n, i) * MapC<T>(wv.ptr(), i, o);
  out.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bv.ptr(), o);
  return push(std::move(nd));
}

template <typename T>
Var<T> Tape<T>::conv2d(Var<T> x, Var<T> w, Var<T> b) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& wv = value(w);
  const Tensor<T>& bv = value(b);
  if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(1) ||
      bv.ndim() != 1 || bv.dim(0) != wv.dim(0) || wv.dim(2) != wv.dim(3))
    fail("shape mismatch x" + shape_str(xv.shape()) + " w" + shape_str(wv.shape()),
         Op::kConv2d, size());
  ConvDims d = conv_dims(xv.shape(), wv.shape());
  const int rows = d.n * d.oh * d.ow, ckk = d.c * d.k * d.k;
  Node nd;
  nd.op = Op::kConv2d;
  nd.in = {x.id, w.id, b.id};
  nd.value = Tensor<T>({d.n, d.oc, d.oh, d.ow});
  Tensor<T> cols({rows, ckk});
  im2col(xv.ptr(), d, cols.ptr());
  Tensor<T> res({rows, d.oc});
  MapM<T> rm(res.ptr(), rows, d.oc);
  rm.noalias() = MapC<T>(cols.ptr(), rows, ckk) *
                 MapC<T>(wv.ptr(), d.oc, ckk).transpose();
  rm.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bv.ptr(), d.oc);
  rows_to_chw(res.ptr(), d.n, d.oc, d.oh * d.ow, nd.value.ptr());
  nd.aux = std::move(cols);
  return push(std::move(nd));
}

template <typename T>
Var<T> Tape<T>::deconv2d(Var<T> x, Var<T> w, Var<T> b) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& wv = value(w);
  const Tensor<T>& bv = value(b);
  if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(0) ||
      bv.ndim() != 1 || bv.dim(0) != wv.dim(1) || wv.dim(2) != wv.dim(3))
    fail("shape mismatch x" + shape_str(xv.shape()) + " w" + shape_str(wv.shape()),
         Op::kDeconv2d, size());
  const int n = xv.dim(0), ic = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
  const int oc = wv.dim(1), k = wv.dim(2);
  const int oh = ih * 2, ow = iw * 2;
  Node nd;
  nd.op = Op::kDeconv2d;
  nd.in = {x.id, w.id, b.id};
  nd.value = Tensor<T>({n, oc, oh, ow});
  // x rows: [(n*IH+ih)*IW+iw, ic]
  Tensor<T> xrows({n * ih * iw, ic});
  chw_to_rows(xv.ptr(), n, ic, ih * iw, xrows.ptr());
  Tensor<T> m({n * ih * iw, oc * k * k});
  MapM<T>(m.ptr(), n * ih * iw, oc * k * k).noalias() =
      MapC<T>(xrows.ptr(), n * ih * iw, ic) * MapC<T>(wv.ptr(), ic, oc * k * k);
  T* out = nd.value.ptr();
  const T* bp = bv.ptr();
  for (int b2 = 0; b2 < n; ++b2)
    for (int c = 0; c < oc; ++c) {
      T* o = out + (static_cast<int64_t>(b2) * oc + c) * oh * ow;
      std::fill(o, o + oh * ow, bp[c]);
    }
  const T* mp = m.ptr();
  for (int b2 = 0; b2 < n; ++b2) {
    for (int y = 0; y < ih; ++y)
      for (int xx = 0; xx < iw; ++xx) {
        const T* row = mp + (static_cast<int64_t>((b2 * ih + y) * iw + xx)) * oc * k * k;
        for (int c = 0; c < oc; ++c) {
          T* o = out + (static_cast<int64_t>(b2) * oc + c) * oh * ow;
          for (int kh = 0; kh < k; ++kh) {
            const int oy = y * 2 + kh - 1;
            if (oy < 0 || oy >= oh) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int ox = xx * 2 + kw - 1;
              if (ox < 0 || ox >= ow) continue;
              o[oy * ow + ox] += row[(c * k + kh) * k + kw];
            }
          }
        }
      }
  }
  nd.aux = std::move(xrows);
  return push(std::move(nd));
}

template <typename T>
Var<T> Tape<T>::add(Var<T> a, Var<T> b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (av.size() != bv.size())
    fail("shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()),
         Op::kAdd, size());
  Node n;
  n.op = Op::kAdd;
  n.in = {a.id, b.id};
  n.value = Tensor<T>(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) n.value[i] = av[i] + bv[i];
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::sub(Var<T> a, Var<T> b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (av.size() != bv.size())
    fail("shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()),
         Op::kSub, size());
  Node n;
  n.op = Op::kSub;
  n.in = {a.id, b.id};
  n.value = Tensor<T>(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) n.value[i] = av[i] - bv[i];
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::mul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (av.size() != bv.size())
    fail("shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()),
         Op::kMul, size());
  Node n;
  n.op = Op::kMul;
  n.in = {a.id, b.id};
  n.value = Tensor<T>(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) n.value[i] = av[i] * bv[i];
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::div(Var<T> a, Var<T> b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (av.size() != bv.size())
    fail("shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()),
         Op::kDiv, size());
  Node n;
  n.op = Op::kDiv;
  n.in = {a.id, b.id};
  n.value = Tensor<T>(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) n.value[i] = av[i] / bv[i];
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::scale(Var<T> x, T c) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kScale;
  n.in = {x.id};
  n.c0 = c;
  n.value = Tensor<T>(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) n.value[i] = xv[i] * c;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::add_scalar(Var<T> x, T c) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kAddScalar;
  n.in = {x.id};
  n.c0 = c;
  n.value = Tensor<T>(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) n.value[i] = xv[i] + c;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::tanh_(Var<T> x) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kTanh;
  n.in = {x.id};
  n.value = Tensor<T>(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) n.value[i] = std::tanh(xv[i]);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::sigmoid_(Var<T> x) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kSigmoid;
  n.in = {x.id};
  n.value = Tensor<T>(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i)
    n.value[i] = T(1) / (T(1) + std::exp(-xv[i]));
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::silu(Var<T> x) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kSilu;
  n.in = {x.id};
  n.value = Tensor<T>(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i)
    n.value[i] = xv[i] / (T(1) + std::exp(-xv[i]));
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::exp_(Var<T> x) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kExp;
  n.in = {x.id};
  n.value = Tensor<T>(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) n.value[i] = std::exp(xv[i]);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::log_(Var<T> x) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kLog;
  n.in = {x.id};
  n.value = Tensor<T>(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) n.value[i] = std::log(xv[i]);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::softplus(Var<T> x) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kSoftplus;
  n.in = {x.id};
  n.value = Tensor<T>(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) {
    T v = xv[i];
    if (v > T(20))
      n.value[i] = v;
    else if (v < T(-20))
      n.value[i] = std::exp(v);
    else
      n.value[i] = std::log(T(1) + std::exp(v));
  }
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::sum_all(Var<T> x) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kSumAll;
  n.in = {x.id};
  T s = T(0);
  for (int64_t i = 0; i < xv.size(); ++i) s += xv[i];
  n.value = Tensor<T>::scalar(s);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::mean_all(Var<T> x) {
  const Tensor<T>& xv = value(x);
  if (xv.size() == 0) fail("mean of empty tensor", Op::kMeanAll, size());
  Node n;
  n.op = Op::kMeanAll;
  n.in = {x.id};
  T s = T(0);
  for (int64_t i = 0; i < xv.size(); ++i) s += xv[i];
  n.value = Tensor<T>::scalar(s / static_cast<T>(xv.size()));
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::sum_last(Var<T> x) {
  const Tensor<T>& xv = value(x);
  if (xv.ndim() < 2) fail("needs >= 2 dims", Op::kSumLast, size());
  std::vector<int> oshape(xv.shape().begin(), xv.shape().end() - 1);
  const int d = xv.dim(xv.ndim() - 1);
  Node n;
  n.op = Op::kSumLast;
  n.in = {x.id};
  n.value = Tensor<T>(oshape);
  const int64_t rows = n.value.size();
  for (int64_t r = 0; r < rows; ++r) {
    T s = T(0);
    for (int j = 0; j < d; ++j) s += xv[r * d + j];
    n.value[r] = s;
  }
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::cmax(Var<T> x, T c) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kMaxConst;
  n.in = {x.id};
  n.c0 = c;
  n.value = Tensor<T>(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) n.value[i] = std::max(xv[i], c);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::concat_rows(const std::vector<Var<T>>& xs) {
  if (xs.empty()) fail("no inputs", Op::kConcatRows, size());
  int rows = 0;
  const Tensor<T>& first = value(xs[0]);
  std::vector<int> oshape = first.shape();
  int64_t rowsz = first.size() / std::max(1, first.dim(0));
  for (auto v : xs) {
    const Tensor<T>& t = value(v);
    if (t.size() / std::max(1, t.dim(0)) != rowsz)
      fail("row size mismatch", Op::kConcatRows, size());
    rows += t.dim(0);
  }
  oshape[0] = rows;
  Node n;
  n.op = Op::kConcatRows;
  for (auto v : xs) n.in.push_back(v.id);
  n.value = Tensor<T>(oshape);
  int64_t off = 0;
  for (auto v : xs) {
    const Tensor<T>& t = value(v);
    std::copy(t.ptr(), t.ptr() + t.size(), n.value.ptr() + off);
    off += t.size();
  }
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::concat_last(Var<T> a, Var<T> b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(0) != bv.dim(0))
    fail("needs matching 2-D rows: " + shape_str(av.shape()) + " vs " +
             shape_str(bv.shape()),
         Op::kConcatLast, size());
  const int n0 = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Node n;
  n.op = Op::kConcatLast;
  n.in = {a.id, b.id};
  n.i0 = ca;
  n.value = Tensor<T>({n0, ca + cb});
  for (int r = 0; r < n0; ++r) {
    std::copy(av.ptr() + static_cast<int64_t>(r) * ca,
              av.ptr() + static_cast<int64_t>(r + 1) * ca,
              n.value.ptr() + static_cast<int64_t>(r) * (ca + cb));
    std::copy(bv.ptr() + static_cast<int64_t>(r) * cb,
              bv.ptr() + static_cast<int64_t>(r + 1) * cb,
              n.value.ptr() + static_cast<int64_t>(r) * (ca + cb) + ca);
  }
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::slice_rows(Var<T> x, int r0, int r1) {
  const Tensor<T>& xv = value(x);
  if (xv.ndim() < 1 || r0 < 0 || r1 > xv.dim(0) || r0 >= r1)
    fail("bad row range", Op::kSliceRows, size());
  std::vector<int> oshape = xv.shape();
  oshape[0] = r1 - r0;
  const int64_t rowsz = xv.size() / xv.dim(0);
  Node n;
  n.op = Op::kSliceRows;
  n.in = {x.id};
  n.i0 = r0;
  n.i1 = r1;
  n.value = Tensor<T>(oshape);
  std::copy(xv.ptr() + r0 * rowsz, xv.ptr() + r1 * rowsz, n.value.ptr());
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::slice_last(Var<T> x, int c0, int c1) {
  const Tensor<T>& xv = value(x);
  if (xv.ndim() != 2 || c0 < 0 || c1 > xv.dim(1) || c0 >= c1)
    fail("bad column range on " + shape_str(xv.shape()), Op::kSliceLast, size());
  const int n0 = xv.dim(0), d = xv.dim(1), w = c1 - c0;
  Node n;
  n.op = Op::kSliceLast;
  n.in = {x.id};
  n.i0 = c0;
  n.i1 = c1;
  n.value = Tensor<T>({n0, w});
  for (int r = 0; r < n0; ++r)
    std::copy(xv.ptr() + static_cast<int64_t>(r) * d + c0,
              xv.ptr() + static_cast<int64_t>(r) * d + c1,
              n.value.ptr() + static_cast<int64_t>(r) * w);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::reshape(Var<T> x, std::vector<int> shape) {
  const Tensor<T>& xv = value(x);
  Node n;
  n.op = Op::kReshape;
  n.in = {x.id};
  n.value = xv.reshaped(std::move(shape));
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::detach(Var<T> x) {
  Node n;
  n.op = Op::kDetach;
  n.in = {x.id};
  n.value = value(x);
  nodes_.push_back(std::move(n));  // needs_grad stays false
  return Var<T>{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Tensor<T>& Tape<T>::ensure_grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (value(loss).size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(value(loss).shape()));
  ensure_grad(loss.id)[0] = T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || n.grad.empty()) continue;
    backward_node(id);
  }
}

template <typename T>
void Tape<T>::backward_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor<T>& g = n.grad;
  auto in_needs = [&](int k) {
    return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(k)])].needs_grad;
  };
  auto inval = [&](int k) -> const Tensor<T>& {
    return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(k)])].value;
  };
  auto ingrad = [&](int k) -> Tensor<T>& { return ensure_grad(n.in[static_cast<size_t>(k)]); };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kDense: {
      const Tensor<T>& xv = inval(0);
      const Tensor<T>& wv = inval(1);
      const int rows = xv.dim(0), i = xv.dim(1), o = wv.dim(1);
      MapC<T> gm(g.ptr(), rows, o);
      if (in_needs(0)) {
        MapM<T> dx(ingrad(0).ptr(), rows, i);
        dx.noalias() += gm * MapC<T>(wv.ptr(), i, o).transpose();
      }
      if (in_needs(1)) {
        MapM<T> dw(ingrad(1).ptr(), i, o);
        dw.noalias() += MapC<T>(xv.ptr(), rows, i).transpose() * gm;
      }
      if (in_needs(2)) {
        // Fixed-order accumulation: Eigen's reduction order depends on
        // buffer alignment, which would make results vary across runs.
        T* db = ingrad(2).ptr();
        const T* gp = g.ptr();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < o; ++c) db[c] += gp[static_cast<int64_t>(r) * o + c];
      }
      break;
    }
    case Op::kConv2d: {
      const Tensor<T>& xv = inval(0);
      const Tensor<T>& wv = inval(1);
      ConvDims d = conv_dims(xv.shape(), wv.shape());
      const int rows = d.n * d.oh * d.ow, ckk = d.c * d.k * d.k;
      Tensor<T> grows({rows, d.oc});
      chw_to_rows(g.ptr(), d.n, d.oc, d.oh * d.ow, grows.ptr());
      MapC<T> gm(grows.ptr(), rows, d.oc);
      if (in_needs(1)) {
        MapM<T> dw(ingrad(1).ptr(), d.oc, ckk);
        dw.noalias() += gm.transpose() * MapC<T>(n.aux.ptr(), rows, ckk);
      }
      if (in_needs(2)) {
        // Fixed-order accumulation; see the dense case.
        T* db = ingrad(2).ptr();
        const T* gp = grows.ptr();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < d.oc; ++c)
            db[c] += gp[static_cast<int64_t>(r) * d.oc + c];
      }
      if (in_needs(0)) {
        Tensor<T> dcols({rows, ckk});
        MapM<T>(dcols.ptr(), rows, ckk).noalias() = gm * MapC<T>(wv.ptr(), d.oc, ckk);
        col2im_add(dcols.ptr(), d, ingrad(0).ptr());
      }
      break;
    }
    case Op::kDeconv2d: {
      const Tensor<T>& xv = inval(0);
      const Tensor<T>& wv = inval(1);
      const int b = xv.dim(0), ic = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
      const int oc = wv.dim(1), k = wv.dim(2);
      // gather of dOut with the forward scatter geometry == im2col with
      // the same (k, stride 2, pad 1) dims where "output" is dOut.
      ConvDims d{};
      d.n = b;
      d.c = oc;
      d.h = ih * 2;
      d.w = iw * 2;
      d.k = k;
      d.oh = ih;
      d.ow = iw;
      d.oc = ic;
      const int rows = b * ih * iw, okk = oc * k * k;
      Tensor<T> gcols({rows, okk});
      im2col(g.ptr(), d, gcols.ptr());
      MapC<T> gm(gcols.ptr(), rows, okk);
      if (in_needs(0)) {
        Tensor<T> dxrows({rows, ic});
        MapM<T>(dxrows.ptr(), rows, ic).noalias() =
            gm * MapC<T>(wv.ptr(), ic, okk).transpose();
        // accumulate rows back into [N,IC,IH,IW]
        Tensor<T>& dx = ingrad(0);
        for (int n2 = 0; n2 < b; ++n2) {
          MapC<T> r(dxrows.ptr() + static_cast<int64_t>(n2) * ih * iw * ic, ih * iw, ic);
          MapM<T> o(dx.ptr() + static_cast<int64_t>(n2) * ic * ih * iw, ic, ih * iw);
          o += r.transpose();
        }
      }
      if (in_needs(1)) {
        MapM<T> dw(ingrad(1).ptr(), ic, okk);
        dw.noalias() += MapC<T>(n.aux.ptr(), rows, ic).transpose() * gm;
      }
      if (in_needs(2)) {
        Tensor<T>& db = ingrad(2);
        const int ohw = ih * iw * 4;
        for (int n2 = 0; n2 < b; ++n2)
          for (int c = 0; c < oc; ++c) {
            const T* gp = g.ptr() + (static_cast<int64_t>(n2) * oc + c) * ohw;
            T s = T(0);
            for (int i = 0; i < ohw; ++i) s += gp[i];
            db[c] += s;
          }
      }
      break;
    }
    case Op::kAdd: {
      for (int k = 0; k < 2; ++k)
        if (in_needs(k)) {
          Tensor<T>& d = ingrad(k);
          for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
      break;
    }
    case Op::kSub: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      if (in_needs(1)) {
        Tensor<T>& d = ingrad(1);
        for (int64_t i = 0; i < g.size(); ++i) d[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      const Tensor<T>& a = inval(0);
      const Tensor<T>& b = inval(1);
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i] * b[i];
      }
      if (in_needs(1)) {
        Tensor<T>& d = ingrad(1);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i] * a[i];
      }
      break;
    }
    case Op::kDiv: {
      const Tensor<T>& a = inval(0);
      const Tensor<T>& b = inval(1);
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i] / b[i];
      }
      if (in_needs(1)) {
        Tensor<T>& d = ingrad(1);
        for (int64_t i = 0; i < g.size(); ++i) d[i] -= g[i] * a[i] / (b[i] * b[i]);
      }
      break;
    }
    case Op::kScale: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i] * n.c0;
      }
      break;
    }
    case Op::kAddScalar: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      break;
    }
    case Op::kTanh: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i)
          d[i] += g[i] * (T(1) - n.value[i] * n.value[i]);
      }
      break;
    }
    case Op::kSigmoid: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i)
          d[i] += g[i] * n.value[i] * (T(1) - n.value[i]);
      }
      break;
    }
    case Op::kSilu: {
      if (in_needs(0)) {
        const Tensor<T>& x = inval(0);
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i) {
          T s = T(1) / (T(1) + std::exp(-x[i]));
          d[i] += g[i] * s * (T(1) + x[i] * (T(1) - s));
        }
      }
      break;
    }
    case Op::kExp: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i] * n.value[i];
      }
      break;
    }
    case Op::kLog: {
      if (in_needs(0)) {
        const Tensor<T>& x = inval(0);
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i] / x[i];
      }
      break;
    }
    case Op::kSoftplus: {
      if (in_needs(0)) {
        const Tensor<T>& x = inval(0);
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i)
          d[i] += g[i] / (T(1) + std::exp(-x[i]));
      }
      break;
    }
    case Op::kSumAll: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < d.size(); ++i) d[i] += g[0];
      }
      break;
    }
    case Op::kMeanAll: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        const T s = g[0] / static_cast<T>(d.size());
        for (int64_t i = 0; i < d.size(); ++i) d[i] += s;
      }
      break;
    }
    case Op::kSumLast: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        const int w = inval(0).dim(inval(0).ndim() - 1);
        for (int64_t r = 0; r < g.size(); ++r)
          for (int j = 0; j < w; ++j) d[r * w + j] += g[r];
      }
      break;
    }
    case Op::kMaxConst: {
      if (in_needs(0)) {
        const Tensor<T>& x = inval(0);
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i)
          if (x[i] > n.c0) d[i] += g[i];
      }
      break;
    }
    case Op::kConcatRows: {
      int64_t off = 0;
      for (size_t k = 0; k < n.in.size(); ++k) {
        const Tensor<T>& iv = nodes_[static_cast<size_t>(n.in[k])].value;
        if (nodes_[static_cast<size_t>(n.in[k])].needs_grad) {
          Tensor<T>& d = ensure_grad(n.in[k]);
          for (int64_t i = 0; i < iv.size(); ++i) d[i] += g[off + i];
        }
        off += iv.size();
      }
      break;
    }
    case Op::kConcatLast: {
      const int rows = n.value.dim(0);
      const int ca = n.i0, cb = n.value.dim(1) - n.i0, cw = n.value.dim(1);
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < ca; ++j)
            d[static_cast<int64_t>(r) * ca + j] += g[static_cast<int64_t>(r) * cw + j];
      }
      if (in_needs(1)) {
        Tensor<T>& d = ingrad(1);
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < cb; ++j)
            d[static_cast<int64_t>(r) * cb + j] +=
                g[static_cast<int64_t>(r) * cw + ca + j];
      }
      break;
    }
    case Op::kSliceRows: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        const int64_t rowsz = d.size() / d.dim(0);
        T* dst = d.ptr() + n.i0 * rowsz;
        for (int64_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      }
      break;
    }
    case Op::kSliceLast: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        const int rows = n.value.dim(0), w = n.value.dim(1), dcols = d.dim(1);
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < w; ++j)
            d[static_cast<int64_t>(r) * dcols + n.i0 + j] +=
                g[static_cast<int64_t>(r) * w + j];
      }
      break;
    }
    case Op::kReshape: {
      if (in_needs(0)) {
        Tensor<T>& d = ingrad(0);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      break;
    }
    case Op::kDetach:
      break;
  }
}

template <typename T>
double gradient_check(GradCheckFn<T>& f, std::vector<Tensor<T>> inputs, T eps,
                      int max_coords, uint64_t seed) {
  Tape<T> tape;
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (auto& t : inputs) vars.push_back(tape.leaf(t));
  Var<T> loss = f(tape, vars);
  tape.backward(loss);

  std::vector<Tensor<T>> analytic;
  int64_t total = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].requires_grad) {
      analytic.push_back(tape.has_grad(vars[i]) ? tape.grad(vars[i])
                                                : Tensor<T>(inputs[i].shape()));
      total += inputs[i].size();
    } else {
      analytic.push_back(Tensor<T>());
    }
  }

  auto eval = [&](const std::vector<Tensor<T>>& in) -> double {
    Tape<T> t2;
    std::vector<Var<T>> vs;
    for (auto& t : in) vs.push_back(t2.leaf(t));
    return static_cast<double>(t2.value(f(t2, vs))[0]);
  };

  Rng rng(seed);
  const bool subsample = total > max_coords;
  double max_rel = 0.0;
  int probes = subsample ? max_coords : static_cast<int>(total);
  for (int p = 0; p < probes; ++p) {
    int64_t flat;
    if (subsample) {
      flat = static_cast<int64_t>(rng.uniform() * static_cast<double>(total));
      if (flat >= total) flat = total - 1;
    } else {
      flat = p;
    }
    // locate tensor and coordinate
    size_t ti = 0;
    int64_t off = flat;
    for (; ti < inputs.size(); ++ti) {
      if (!inputs[ti].requires_grad) continue;
      if (off < inputs[ti].size()) break;
      off -= inputs[ti].size();
    }
    std::vector<Tensor<T>> probe;
    probe.reserve(inputs.size());
    for (auto& t : inputs) probe.push_back(t.clone());
    probe[ti][off] = inputs[ti][off] + eps;
    const double fp = eval(probe);
    probe[ti][off] = inputs[ti][off] - eps;
    const double fm = eval(probe);
    const double fd = (fp - fm) / (2.0 * static_cast<double>(eps));
    const double bp = static_cast<double>(analytic[ti][off]);
    const double denom = std::max({std::abs(fd), std::abs(bp), 1e-8});
    max_rel = std::max(max_rel, std::abs(fd - bp) / denom);
  }
  return max_rel;
}

template class Tape<float>;
template class Tape<double>;
template double gradient_check<float>(GradCheckFn<float>&, std::vector<Tensor<float>>,
                                      float, int, uint64_t);
template double gradient_check<double>(GradCheckFn<double>&, std::vector<Tensor<double>>,
                                       double, int, uint64_t);

}  // namespace vtb::dc
