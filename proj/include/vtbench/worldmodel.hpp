#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vtbench/config.hpp"
#include "vtbench/rng.hpp"
#include "vtbench/tape.hpp"
#include "vtbench/tensor.hpp"

namespace vtb {

// Binds a parameter set to one tape: each parameter becomes a single leaf
// node per tape so gradients accumulate across reuses. A frozen context
// inserts parameters as constants (no gradient flows into them) while still
// letting gradients pass through the functions they define.
template <typename T>
class TapeCtx {
 public:
  explicit TapeCtx(dc::Tape<T>& tape, bool freeze = false)
      : tape_(tape), freeze_(freeze) {}

  dc::Var<T> var(const dc::Tensor<T>& p) {
    auto it = cache_.find(p.ptr());
    if (it != cache_.end()) return it->second;
    dc::Var<T> v = freeze_ ? tape_.constant(p) : tape_.leaf(p);
    cache_.emplace(p.ptr(), v);
    return v;
  }

  dc::Tape<T>& tape() { return tape_; }

 private:
  dc::Tape<T>& tape_;
  bool freeze_;
  std::unordered_map<const T*, dc::Var<T>> cache_;
};

// Named parameter registry. Tensors are shared handles: optimizer updates
// write through to the layers that registered them.
template <typename T>
class ParamRegistry {
 public:
  dc::Tensor<T>& add(const std::string& name, dc::Tensor<T> t) {
    t.requires_grad = true;
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return tensors_.back();
  }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<dc::Tensor<T>>& tensors() { return tensors_; }
  const std::vector<dc::Tensor<T>>& tensors() const { return tensors_; }
  int64_t count() const {
    int64_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }
  // After backward: gradient per parameter in registry order (zeros where
  // the loss did not touch the parameter).
  std::vector<dc::Tensor<T>> grads(TapeCtx<T>& ctx) const;

 private:
  std::vector<std::string> names_;
  std::vector<dc::Tensor<T>> tensors_;
};

template <typename T>
struct DenseLayer {
  dc::Tensor<T> w, b;
  dc::Var<T> operator()(TapeCtx<T>& c, dc::Var<T> x) const {
    return c.tape().dense(x, c.var(w), c.var(b));
  }
};

template <typename T>
struct ConvLayer {
  dc::Tensor<T> w, b;  // conv: [OC,C,K,K]; deconv: [C,OC,K,K]
};

// Initializers (uniform Glorot for weights, zeros for biases).
template <typename T>
dc::Tensor<T> glorot(Rng& rng, std::vector<int> shape, int fan_in, int fan_out);
template <typename T>
dc::Tensor<T> randn(Rng& rng, std::vector<int> shape, T scale = T(1));

// Training batch, time-major: row index t*B + b.
template <typename T>
struct SeqBatch {
  int B = 0, L = 0, res = 0;
  dc::Tensor<T> vis;   // [L*B, 3, H, W]
  dc::Tensor<T> tac;   // [L*B, 3, H, W]
  dc::Tensor<T> act;   // [L*B, 3]   action that led INTO row t (zero at t=0)
  dc::Tensor<T> rew;   // [L*B, 1]   reward received on arrival (zero at t=0)
  dc::Tensor<T> cont;  // [L*B, 1]   0 iff arrival was a success terminal
};

template <typename T>
struct WmLossResult {
  dc::Var<T> loss;
  // Detached posterior features [L*B, d+z] usable as imagination starts.
  dc::Tensor<T> features;
  // Metric values (already extracted from the tape).
  double recon_vis = 0, recon_tac = 0, reward_mse = 0, cont_bce = 0, kl = 0;
  double total = 0;
};

template <typename T>
class WorldModel {
 public:
  WorldModel(const ModelConfig& mc, int resolution, uint64_t init_seed);

  ParamRegistry<T>& params() { return reg_; }
  const ParamRegistry<T>& params() const { return reg_; }
  const ModelConfig& config() const { return mc_; }
  int resolution() const { return res_; }
  int feat_dim() const { return mc_.d_dim + mc_.z_dim; }

  struct Gauss {
    dc::Var<T> mean, std;
  };

  // Network pieces. Images are [N,3,H,W] vars.
  dc::Var<T> encode(TapeCtx<T>& c, dc::Var<T> vis, dc::Var<T> tac) const;
  dc::Var<T> rssm_core(TapeCtx<T>& c, dc::Var<T> z_prev, dc::Var<T> a_prev,
                       dc::Var<T> d_prev) const;
  Gauss prior(TapeCtx<T>& c, dc::Var<T> d) const;
  Gauss posterior(TapeCtx<T>& c, dc::Var<T> d, dc::Var<T> e) const;
  dc::Var<T> decode_vis(TapeCtx<T>& c, dc::Var<T> feat) const;
  dc::Var<T> decode_tac(TapeCtx<T>& c, dc::Var<T> feat) const;
  dc::Var<T> reward_head(TapeCtx<T>& c, dc::Var<T> feat) const;  // [N,1]
  dc::Var<T> cont_logit(TapeCtx<T>& c, dc::Var<T> feat) const;   // [N,1]

  // Learned episode-start state, broadcast to a batch.
  dc::Var<T> init_d(TapeCtx<T>& c, int batch) const;
  dc::Var<T> init_z(TapeCtx<T>& c, int batch) const;
  const dc::Tensor<T>& init_d_value() const { return init_d_; }
  const dc::Tensor<T>& init_z_value() const { return init_z_; }

  // Diagonal-Gaussian KL, summed over the last axis -> [N,1]-like scalar per
  // row reduced to a batch mean scalar.
  dc::Var<T> kl_divergence(TapeCtx<T>& c, const Gauss& q, const Gauss& p) const;

  // Full sequence loss. Consumes rng for the reparameterization noise.
  WmLossResult<T> world_loss(TapeCtx<T>& c, const SeqBatch<T>& batch,
                             Rng& rng) const;

 private:
  dc::Var<T> encode_one(TapeCtx<T>& c, dc::Var<T> img,
                        const std::vector<ConvLayer<T>>& stack) const;
  dc::Var<T> decode_one(TapeCtx<T>& c, dc::Var<T> feat, const DenseLayer<T>& in,
                        const std::vector<ConvLayer<T>>& stack) const;
  Gauss gauss_head(TapeCtx<T>& c, dc::Var<T> x, const DenseLayer<T>& hidden,
                   const DenseLayer<T>& out) const;
  dc::Var<T> broadcast_rows(TapeCtx<T>& c, const dc::Tensor<T>& p, int n) const;

  ModelConfig mc_;
  int res_;
  ParamRegistry<T> reg_;

  std::vector<ConvLayer<T>> enc_vis_, enc_tac_;
  DenseLayer<T> fuse_;
  DenseLayer<T> gru_in_, gru_parts_;
  DenseLayer<T> prior_h_, prior_o_, post_h_, post_o_;
  DenseLayer<T> dec_vis_in_, dec_tac_in_;
  std::vector<ConvLayer<T>> dec_vis_, dec_tac_;
  DenseLayer<T> rew_h_, rew_o_, cont_h_, cont_o_;
  dc::Tensor<T> init_d_, init_z_;
};

// Encoder/decoder stack depth for a resolution (down to a 2x2 core).
int conv_depth(int resolution);
// Channel width of stage i (0-based), doubling from base, capped at 128.
int stage_channels(int base, int i);

}  // namespace vtb
