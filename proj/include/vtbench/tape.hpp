#pragma once

#include <array>
#include <string>
#include <vector>

#include "vtbench/tensor.hpp"

namespace vtb::dc {

enum class Op {
  kLeaf,
  kDense,
  kConv2d,
  kDeconv2d,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kTanh,
  kSigmoid,
  kSilu,
  kExp,
  kLog,
  kSoftplus,
  kSumAll,
  kMeanAll,
  kSumLast,
  kMaxConst,
  kConcatRows,
  kConcatLast,
  kSliceRows,
  kSliceLast,
  kReshape,
  kDetach,
};

const char* op_name(Op op);

// Handle into a Tape. Only valid for the tape that produced it.
template <typename T>
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over an eagerly evaluated op record. Each operation
// computes its value immediately and appends a node; backward() walks the
// record in reverse topological order (which is construction order).
template <typename T>
class Tape {
 public:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<int> in;
    Tensor<T> value;
    Tensor<T> grad;  // allocated during backward
    bool needs_grad = false;
    // op parameters
    int i0 = 0, i1 = 0;
    T c0 = T(0);
    Tensor<T> aux;  // cached forward intermediates (im2col matrices)
  };

  Var<T> leaf(const Tensor<T>& value);
  // Leaf that never receives a gradient regardless of the tensor flag.
  Var<T> constant(const Tensor<T>& value);

  // x:[N,I] w:[I,O] b:[O] -> [N,O]
  Var<T> dense(Var<T> x, Var<T> w, Var<T> b);
  // x:[N,C,H,W] w:[OC,C,K,K] b:[OC], stride 2, pad 1 -> [N,OC,H/2,W/2]
  Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b);
  // x:[N,C,H,W] w:[C,OC,K,K] b:[OC], stride 2, pad 1 -> [N,OC,2H,2W]
  Var<T> deconv2d(Var<T> x, Var<T> w, Var<T> b);

  Var<T> add(Var<T> a, Var<T> b);
  Var<T> sub(Var<T> a, Var<T> b);
  Var<T> mul(Var<T> a, Var<T> b);
  Var<T> div(Var<T> a, Var<T> b);
  Var<T> scale(Var<T> x, T c);
  Var<T> add_scalar(Var<T> x, T c);

  Var<T> tanh_(Var<T> x);
  Var<T> sigmoid_(Var<T> x);
  Var<T> silu(Var<T> x);
  Var<T> exp_(Var<T> x);
  Var<T> log_(Var<T> x);
  Var<T> softplus(Var<T> x);

  Var<T> sum_all(Var<T> x);
  Var<T> mean_all(Var<T> x);
  Var<T> sum_last(Var<T> x);
  // Elementwise max(x, c); gradient passes where x > c.
  Var<T> cmax(Var<T> x, T c);

  Var<T> concat_rows(const std::vector<Var<T>>& xs);
  Var<T> concat_last(Var<T> a, Var<T> b);
  Var<T> slice_rows(Var<T> x, int r0, int r1);
  Var<T> slice_last(Var<T> x, int c0, int c1);
  Var<T> reshape(Var<T> x, std::vector<int> shape);
  Var<T> detach(Var<T> x);

  // Convenience: mean((a-b)^2) * numel / rows — i.e. squared error summed
  // over features, averaged over rows. Built from primitive ops.
  Var<T> gaussian_sample(Var<T> mean, Var<T> std, Var<T> noise) {
    return add(mean, mul(std, noise));
  }

  void backward(Var<T> loss);

  const Tensor<T>& value(Var<T> v) const { return node(v).value; }
  const Tensor<T>& grad(Var<T> v) const { return node(v).grad; }
  bool has_grad(Var<T> v) const { return !node(v).grad.empty(); }
  int size() const { return static_cast<int>(nodes_.size()); }
  void clear() { nodes_.clear(); }

 private:
  const Node& node(Var<T> v) const { return nodes_[static_cast<size_t>(v.id)]; }
  Node& node(Var<T> v) { return nodes_[static_cast<size_t>(v.id)]; }
  Var<T> push(Node n);
  Tensor<T>& ensure_grad(int id);
  void backward_node(int id);
  [[noreturn]] void fail(const std::string& msg, Op op, int id) const;

  std::vector<Node> nodes_;
};

// Central-difference gradient verification. Rebuilds the graph through `f`
// for each probe; compares against backward() on all requires_grad inputs.
// Checks every coordinate, or a seeded random subset if there are more than
// `max_coords` of them. Returns the max relative error.
template <typename T>
struct GradCheckFn {
  virtual ~GradCheckFn() = default;
  virtual Var<T> operator()(Tape<T>& tape, const std::vector<Var<T>>& inputs) = 0;
};

template <typename T>
double gradient_check(GradCheckFn<T>& f, std::vector<Tensor<T>> inputs, T eps,
                      int max_coords = 1000, uint64_t seed = 0);

}  // namespace vtb::dc
