#include "vtbench/replay.hpp"

#include <cmath>
#include <stdexcept>

namespace vtb {

namespace {

uint8_t quantize(float v) {
  float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return static_cast<uint8_t>(std::lround(c * 255.f));
}

void append_quantized(std::vector<uint8_t>& out, const Image& img) {
  const float* p = img.ptr();
  size_t n = img.size();
  for (size_t i = 0; i < n; ++i) out.push_back(quantize(p[i]));
}

// Interleaved uint8 {H,W,3} -> planar float rows of a [N,3,H,W] tensor.
void decode_into(float* dst, const uint8_t* src, int hw) {
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < hw; ++p)
      dst[c * hw + p] = static_cast<float>(src[p * 3 + c]) * (1.f / 255.f);
}

}  // namespace

ReplayBuffer::ReplayBuffer(int capacity_steps, int resolution)
    : capacity_(capacity_steps), res_(resolution) {
  if (capacity_steps <= 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::begin_episode() {
  if (open_) throw std::logic_error("begin_episode while an episode is open");
  current_ = Episode{};
  open_ = true;
}

void ReplayBuffer::add_step(const Observation& obs, const Eigen::Vector3d& action_in,
                            float reward_in, float cont) {
  if (!open_) throw std::logic_error("add_step without begin_episode");
  if (obs.vis.dim(0) != res_ || obs.vis.dim(1) != res_)
    throw std::invalid_argument("observation resolution does not match buffer");
  append_quantized(current_.vis, obs.vis);
  append_quantized(current_.tac, obs.tac);
  for (int k = 0; k < 3; ++k) current_.act.push_back(static_cast<float>(action_in[k]));
  current_.rew.push_back(reward_in);
  current_.cont.push_back(cont);
  current_.len += 1;
}

void ReplayBuffer::end_episode() {
  if (!open_) throw std::logic_error("end_episode without begin_episode");
  open_ = false;
  if (current_.len == 0) return;
  total_steps_ += current_.len;
  episodes_.push_back(std::move(current_));
  while (total_steps_ > capacity_ && episodes_.size() > 1) {
    total_steps_ -= episodes_.front().len;
    episodes_.pop_front();
  }
}

bool ReplayBuffer::can_sample(int L) const {
  for (const auto& e : episodes_)
    if (windows(e, L) > 0) return true;
  return false;
}

SeqBatch<float> ReplayBuffer::sample(int B, int L, Rng& rng) const {
  if (L < 1 || B < 1) throw std::invalid_argument("sample needs B >= 1, L >= 1");
  int64_t total = 0;
  for (const auto& e : episodes_) total += windows(e, L);
  if (total == 0) throw std::logic_error("no episode long enough to sample");

  SeqBatch<float> batch;
  batch.B = B;
  batch.L = L;
  batch.res = res_;
  int hw = res_ * res_;
  int frame = hw * 3;
  batch.vis = dc::Tensor<float>({L * B, 3, res_, res_}, 0.f);
  batch.tac = dc::Tensor<float>({L * B, 3, res_, res_}, 0.f);
  batch.act = dc::Tensor<float>({L * B, 3}, 0.f);
  batch.rew = dc::Tensor<float>({L * B, 1}, 0.f);
  batch.cont = dc::Tensor<float>({L * B, 1}, 0.f);

  for (int b = 0; b < B; ++b) {
    int64_t pick = rng.uniform_int(static_cast<int>(total));
    const Episode* ep = nullptr;
    int start = 0;
    for (const auto& e : episodes_) {
      int64_t w = windows(e, L);
      if (pick < w) {
        ep = &e;
        start = static_cast<int>(pick);
        break;
      }
      pick -= w;
    }
    for (int t = 0; t < L; ++t) {
      int row = t * B + b;
      int src = start + t;
      decode_into(batch.vis.ptr() + static_cast<size_t>(row) * frame,
                  ep->vis.data() + static_cast<size_t>(src) * frame, hw);
      decode_into(batch.tac.ptr() + static_cast<size_t>(row) * frame,
                  ep->tac.data() + static_cast<size_t>(src) * frame, hw);
      for (int k = 0; k < 3; ++k) batch.act.ptr()[row * 3 + k] = ep->act[src * 3 + k];
      batch.rew.ptr()[row] = ep->rew[src];
      batch.cont.ptr()[row] = ep->cont[src];
    }
  }
  return batch;
}

}  // namespace vtb
