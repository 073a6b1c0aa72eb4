#include "vtbench/worldmodel.hpp"

#include <cmath>
#include <stdexcept>

namespace vtb {

using dc::Tape;
using dc::Tensor;
using dc::Var;

int conv_depth(int resolution) {
  int depth = 0, s = resolution;
  while (s > 2) {
    s /= 2;
    ++depth;
  }
  return depth;
}

int stage_channels(int base, int i) {
  int c = base << i;
  return c > 128 ? 128 : c;
}

template <typename T>
Tensor<T> glorot(Rng& rng, std::vector<int> shape, int fan_in, int fan_out) {
  Tensor<T> t(shape);
  const double s = std::sqrt(6.0 / (fan_in + fan_out));
  for (int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(-s, s));
  return t;
}

template <typename T>
Tensor<T> randn(Rng& rng, std::vector<int> shape, T scale) {
  Tensor<T> t(shape);
  for (int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.normal()) * scale;
  return t;
}

template <typename T>
std::vector<Tensor<T>> ParamRegistry<T>::grads(TapeCtx<T>& ctx) const {
  std::vector<Tensor<T>> out;
  out.reserve(tensors_.size());
  for (const auto& t : tensors_) {
    Var<T> v = ctx.var(t);
    if (ctx.tape().has_grad(v))
      out.push_back(ctx.tape().grad(v));
    else
      out.push_back(Tensor<T>(t.shape()));
  }
  return out;
}

namespace {

template <typename T>
DenseLayer<T> make_dense(ParamRegistry<T>& reg, const std::string& name, Rng& rng,
                         int in, int out, bool zero_init = false) {
  DenseLayer<T> l;
  Tensor<T> w = zero_init ? Tensor<T>({in, out})
                          : glorot<T>(rng, {in, out}, in, out);
  l.w = reg.add(name + ".w", std::move(w));
  l.b = reg.add(name + ".b", Tensor<T>({out}));
  return l;
}

template <typename T>
ConvLayer<T> make_conv(ParamRegistry<T>& reg, const std::string& name, Rng& rng,
                       int in_ch, int out_ch) {
  ConvLayer<T> l;
  l.w = reg.add(name + ".w",
                glorot<T>(rng, {out_ch, in_ch, 4, 4}, in_ch * 16, out_ch * 16));
  l.b = reg.add(name + ".b", Tensor<T>({out_ch}));
  return l;
}

template <typename T>
ConvLayer<T> make_deconv(ParamRegistry<T>& reg, const std::string& name, Rng& rng,
                         int in_ch, int out_ch) {
  ConvLayer<T> l;
  l.w = reg.add(name + ".w",
                glorot<T>(rng, {in_ch, out_ch, 4, 4}, in_ch * 16, out_ch * 16));
  l.b = reg.add(name + ".b", Tensor<T>({out_ch}));
  return l;
}

}  // namespace

template <typename T>
WorldModel<T>::WorldModel(const ModelConfig& mc, int resolution, uint64_t init_seed)
    : mc_(mc), res_(resolution) {
  Rng rng(init_seed);
  const int depth = conv_depth(res_);
  const int top_ch = stage_channels(mc_.base_channels, depth - 1);
  const int flat = top_ch * 4;

  for (const char* mod : {"vis", "tac"}) {
    auto& stack = mod[0] == 'v' ? enc_vis_ : enc_tac_;
    int in_ch = 3;
    for (int i = 0; i < depth; ++i) {
      const int out_ch = stage_channels(mc_.base_channels, i);
      stack.push_back(make_conv(reg_, std::string("enc_") + mod + ".conv" +
                                          std::to_string(i),
                                rng, in_ch, out_ch));
      in_ch = out_ch;
    }
  }
  fuse_ = make_dense(reg_, "fuse", rng, 2 * flat, mc_.embed_dim);

  gru_in_ = make_dense(reg_, "gru_in", rng, mc_.z_dim + 3, mc_.d_dim);
  gru_parts_ = make_dense(reg_, "gru_parts", rng, 2 * mc_.d_dim, 3 * mc_.d_dim);
  prior_h_ = make_dense(reg_, "prior_h", rng, mc_.d_dim, mc_.hidden);
  prior_o_ = make_dense(reg_, "prior_o", rng, mc_.hidden, 2 * mc_.z_dim);
  post_h_ = make_dense(reg_, "post_h", rng, mc_.d_dim + mc_.embed_dim, mc_.hidden);
  post_o_ = make_dense(reg_, "post_o", rng, mc_.hidden, 2 * mc_.z_dim);

  dec_vis_in_ = make_dense(reg_, "dec_vis_in", rng, feat_dim(), flat);
  dec_tac_in_ = make_dense(reg_, "dec_tac_in", rng, feat_dim(), flat);
  for (const char* mod : {"vis", "tac"}) {
    auto& stack = mod[0] == 'v' ? dec_vis_ : dec_tac_;
    for (int i = depth - 1; i >= 0; --i) {
      const int in_ch = stage_channels(mc_.base_channels, i);
      const int out_ch = i == 0 ? 3 : stage_channels(mc_.base_channels, i - 1);
      stack.push_back(make_deconv(reg_, std::string("dec_") + mod + ".deconv" +
                                            std::to_string(depth - 1 - i),
                                  rng, in_ch, out_ch));
    }
  }

  rew_h_ = make_dense(reg_, "rew_h", rng, feat_dim(), mc_.hidden);
  rew_o_ = make_dense(reg_, "rew_o", rng, mc_.hidden, 1, /*zero_init=*/true);
  cont_h_ = make_dense(reg_, "cont_h", rng, feat_dim(), mc_.hidden);
  cont_o_ = make_dense(reg_, "cont_o", rng, mc_.hidden, 1, /*zero_init=*/true);

  init_d_ = reg_.add("init_d", Tensor<T>({mc_.d_dim}));
  init_z_ = reg_.add("init_z", Tensor<T>({mc_.z_dim}));
}

template <typename T>
Var<T> WorldModel<T>::broadcast_rows(TapeCtx<T>& c, const Tensor<T>& p,
                                     int n) const {
  Var<T> row = c.tape().reshape(c.var(p), {1, static_cast<int>(p.size())});
  if (n == 1) return row;
  return c.tape().concat_rows(std::vector<Var<T>>(static_cast<size_t>(n), row));
}

template <typename T>
Var<T> WorldModel<T>::init_d(TapeCtx<T>& c, int batch) const {
  return broadcast_rows(c, init_d_, batch);
}

template <typename T>
Var<T> WorldModel<T>::init_z(TapeCtx<T>& c, int batch) const {
  return broadcast_rows(c, init_z_, batch);
}

template <typename T>
Var<T> WorldModel<T>::encode_one(TapeCtx<T>& c, Var<T> img,
                                 const std::vector<ConvLayer<T>>& stack) const {
  auto& t = c.tape();
  Var<T> x = img;
  for (const auto& l : stack)
    x = t.silu(t.conv2d(x, c.var(l.w), c.var(l.b)));
  const auto& shape = t.value(x).shape();
  return t.reshape(x, {shape[0], shape[1] * shape[2] * shape[3]});
}

template <typename T>
Var<T> WorldModel<T>::encode(TapeCtx<T>& c, Var<T> vis, Var<T> tac) const {
  auto& t = c.tape();
  const auto& vs = t.value(vis).shape();
  if (vs.size() != 4 || vs[1] != 3 || vs[2] != res_ || vs[3] != res_)
    throw std::invalid_argument("encode: image shape does not match resolution " +
                                std::to_string(res_));
  Var<T> fv = encode_one(c, vis, enc_vis_);
  Var<T> ft = encode_one(c, tac, enc_tac_);
  return t.silu(fuse_(c, t.concat_last(fv, ft)));
}

template <typename T>
Var<T> WorldModel<T>::rssm_core(TapeCtx<T>& c, Var<T> z_prev, Var<T> a_prev,
                                Var<T> d_prev) const {
  auto& t = c.tape();
  Var<T> x = t.silu(gru_in_(c, t.concat_last(z_prev, a_prev)));
  Var<T> parts = gru_parts_(c, t.concat_last(x, d_prev));
  const int dd = mc_.d_dim;
  Var<T> reset = t.sigmoid_(t.slice_last(parts, 0, dd));
  Var<T> cand = t.tanh_(t.mul(reset, t.slice_last(parts, dd, 2 * dd)));
  Var<T> update = t.sigmoid_(t.add_scalar(t.slice_last(parts, 2 * dd, 3 * dd),
                                          T(-1)));
  // d = d_prev + update * (cand - d_prev)
  return t.add(d_prev, t.mul(update, t.sub(cand, d_prev)));
}

template <typename T>
typename WorldModel<T>::Gauss WorldModel<T>::gauss_head(
    TapeCtx<T>& c, Var<T> x, const DenseLayer<T>& hidden,
    const DenseLayer<T>& out) const {
  auto& t = c.tape();
  Var<T> h = t.silu(hidden(c, x));
  Var<T> o = out(c, h);
  const int dz = mc_.z_dim;
  Gauss g;
  g.mean = t.slice_last(o, 0, dz);
  g.std = t.add_scalar(t.softplus(t.slice_last(o, dz, 2 * dz)), T(0.1));
  return g;
}

template <typename T>
typename WorldModel<T>::Gauss WorldModel<T>::prior(TapeCtx<T>& c, Var<T> d) const {
  return gauss_head(c, d, prior_h_, prior_o_);
}

template <typename T>
typename WorldModel<T>::Gauss WorldModel<T>::posterior(TapeCtx<T>& c, Var<T> d,
                                                       Var<T> e) const {
  return gauss_head(c, c.tape().concat_last(d, e), post_h_, post_o_);
}

template <typename T>
Var<T> WorldModel<T>::decode_one(TapeCtx<T>& c, Var<T> feat,
                                 const DenseLayer<T>& in,
                                 const std::vector<ConvLayer<T>>& stack) const {
  auto& t = c.tape();
  Var<T> h = t.silu(in(c, feat));
  const int n = t.value(feat).dim(0);
  const int top_ch = static_cast<int>(t.value(h).dim(1)) / 4;
  Var<T> x = t.reshape(h, {n, top_ch, 2, 2});
  for (size_t i = 0; i < stack.size(); ++i) {
    x = t.deconv2d(x, c.var(stack[i].w), c.var(stack[i].b));
    x = i + 1 == stack.size() ? t.sigmoid_(x) : t.silu(x);
  }
  return x;
}

template <typename T>
Var<T> WorldModel<T>::decode_vis(TapeCtx<T>& c, Var<T> feat) const {
  return decode_one(c, feat, dec_vis_in_, dec_vis_);
}

template <typename T>
Var<T> WorldModel<T>::decode_tac(TapeCtx<T>& c, Var<T> feat) const {
  return decode_one(c, feat, dec_tac_in_, dec_tac_);
}

template <typename T>
Var<T> WorldModel<T>::reward_head(TapeCtx<T>& c, Var<T> feat) const {
  auto& t = c.tape();
  return rew_o_(c, t.silu(rew_h_(c, feat)));
}

template <typename T>
Var<T> WorldModel<T>::cont_logit(TapeCtx<T>& c, Var<T> feat) const {
  auto& t = c.tape();
  return cont_o_(c, t.silu(cont_h_(c, feat)));
}

template <typename T>
Var<T> WorldModel<T>::kl_divergence(TapeCtx<T>& c, const Gauss& q,
                                    const Gauss& p) const {
  auto& t = c.tape();
  Var<T> dm = t.sub(q.mean, p.mean);
  Var<T> num = t.add(t.mul(q.std, q.std), t.mul(dm, dm));
  Var<T> den = t.scale(t.mul(p.std, p.std), T(2));
  Var<T> per = t.add_scalar(
      t.add(t.sub(t.log_(p.std), t.log_(q.std)), t.div(num, den)), T(-0.5));
  return t.mean_all(t.sum_last(per));
}

template <typename T>
WmLossResult<T> WorldModel<T>::world_loss(TapeCtx<T>& c, const SeqBatch<T>& batch,
                                          Rng& rng) const {
  if (batch.L < 1) throw std::invalid_argument("world_loss: need L >= 1");
  auto& t = c.tape();
  const int B = batch.B, L = batch.L;

  Var<T> vis_all = t.constant(batch.vis);
  Var<T> tac_all = t.constant(batch.tac);
  Var<T> act_all = t.constant(batch.act);
  Var<T> e_all = encode(c, vis_all, tac_all);

  Var<T> d = init_d(c, B);
  Var<T> z = init_z(c, B);
  Var<T> kl_sum;
  double kl_raw_sum = 0.0;  // unclamped posterior-prior KL, reporting only
  std::vector<Var<T>> feats;
  feats.reserve(static_cast<size_t>(L));

  for (int step = 0; step < L; ++step) {
    Var<T> a_t = t.slice_rows(act_all, step * B, (step + 1) * B);
    d = rssm_core(c, z, a_t, d);
    Var<T> e_t = t.slice_rows(e_all, step * B, (step + 1) * B);
    Gauss pri = prior(c, d);
    Gauss post = posterior(c, d, e_t);
    Var<T> noise = t.constant(randn<T>(rng, {B, mc_.z_dim}));
    z = t.gaussian_sample(post.mean, post.std, noise);

    Gauss post_sg{t.detach(post.mean), t.detach(post.std)};
    Gauss pri_sg{t.detach(pri.mean), t.detach(pri.std)};
    Var<T> kl_prior = t.cmax(kl_divergence(c, post_sg, pri), T(mc_.free_bits));
    Var<T> kl_post = t.cmax(kl_divergence(c, post, pri_sg), T(mc_.free_bits));
    kl_raw_sum += static_cast<double>(t.value(kl_divergence(c, post_sg, pri_sg))[0]);
    Var<T> kl_t = t.add(t.scale(kl_prior, T(mc_.kl_balance)),
                        t.scale(kl_post, T(1) - T(mc_.kl_balance)));
    kl_sum = kl_sum.valid() ? t.add(kl_sum, kl_t) : kl_t;
    feats.push_back(t.concat_last(d, z));
  }

  Var<T> feat_all = t.concat_rows(feats);  // [L*B, d+z], t-major

  auto sq_err = [&](Var<T> a, Var<T> b) {
    Var<T> diff = t.sub(a, b);
    return t.sum_all(t.mul(diff, diff));
  };
  const T inv_b = T(1) / T(B);
  Var<T> recon_vis = t.scale(sq_err(decode_vis(c, feat_all), vis_all), inv_b);
  Var<T> recon_tac = t.scale(sq_err(decode_tac(c, feat_all), tac_all), inv_b);

  Var<T> rew_hat = reward_head(c, feat_all);
  Var<T> rew_loss =
      t.scale(sq_err(rew_hat, t.constant(batch.rew)), T(mc_.reward_weight) * inv_b);

  Var<T> logit = cont_logit(c, feat_all);
  Var<T> cont_t = t.constant(batch.cont);
  // Stable bernoulli nll from logits: softplus(l) - c*l.
  Var<T> bce = t.sub(t.softplus(logit), t.mul(cont_t, logit));
  Var<T> cont_loss = t.scale(t.sum_all(bce), T(mc_.continue_weight) * inv_b);

  Var<T> loss = t.add(t.add(recon_vis, recon_tac), t.add(rew_loss, cont_loss));
  loss = t.add(loss, t.scale(kl_sum, T(mc_.kl_weight)));

  WmLossResult<T> out;
  out.loss = loss;
  out.features = t.value(feat_all).clone();
  out.features.requires_grad = false;
  const int64_t px = batch.vis.size() / B;
  out.recon_vis = static_cast<double>(t.value(recon_vis)[0]) / (L * (px / L));
  out.recon_tac = static_cast<double>(t.value(recon_tac)[0]) / (L * (px / L));
  out.reward_mse = static_cast<double>(t.value(rew_loss)[0]) / L;
  out.cont_bce = static_cast<double>(t.value(cont_loss)[0]) / L;
  out.kl = kl_raw_sum / L;
  out.total = static_cast<double>(t.value(loss)[0]);
  return out;
}

template class ParamRegistry<float>;
template class ParamRegistry<double>;
template class WorldModel<float>;
template class WorldModel<double>;
template Tensor<float> glorot<float>(Rng&, std::vector<int>, int, int);
template Tensor<double> glorot<double>(Rng&, std::vector<int>, int, int);
template Tensor<float> randn<float>(Rng&, std::vector<int>, float);
template Tensor<double> randn<double>(Rng&, std::vector<int>, double);

}  // namespace vtb
