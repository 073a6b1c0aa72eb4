#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <deque>
#include <vector>

#include "vtbench/rng.hpp"
#include "vtbench/sensors.hpp"
#include "vtbench/worldmodel.hpp"

namespace vtb {

// Episode-granular sequence store. Observations are quantized to 8 bits per
// channel to keep 50k-step runs in memory; rows are
// (obs_t, action-into-t, reward-into-t, continue_t). Sampled windows never
// cross episode boundaries; whole episodes are evicted FIFO at capacity.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity_steps, int resolution);

  void begin_episode();
  void add_step(const Observation& obs, const Eigen::Vector3d& action_in,
                float reward_in, float cont);
  void end_episode();

  int steps() const { return total_steps_; }
  int episodes() const { return static_cast<int>(episodes_.size()); }
  // True when at least one full window of length L is available.
  bool can_sample(int L) const;

  // Uniform over all valid (episode, start) windows; t-major batch layout.
  SeqBatch<float> sample(int B, int L, Rng& rng) const;

 private:
  struct Episode {
    std::vector<uint8_t> vis, tac;  // len * res * res * 3, interleaved
    std::vector<float> act;         // len * 3
    std::vector<float> rew, cont;   // len
    int len = 0;
  };

  int64_t windows(const Episode& e, int L) const {
    return e.len >= L ? e.len - L + 1 : 0;
  }

  int capacity_;
  int res_;
  std::deque<Episode> episodes_;
  Episode current_;
  bool open_ = false;
  int total_steps_ = 0;
};

}  // namespace vtb
