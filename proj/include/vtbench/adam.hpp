#pragma once

#include <cstdint>
#include <vector>

#include "vtbench/tensor.hpp"

namespace vtb::dc {

// In-place global-norm gradient clipping across a whole parameter group.
// Returns the pre-clip norm.
float clip_global_norm(std::vector<Tensor<float>>& grads, float max_norm);

// Adam with bias correction. Moment buffers are created to match the
// parameter list on the first step; they are exposed so training state can
// be checkpointed exactly.
class Adam {
 public:
  explicit Adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f,
                float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Tensors are shared handles: updates write through to the owners' buffers.
  void step(std::vector<Tensor<float>>& params,
            const std::vector<Tensor<float>>& grads);

  float lr() const { return lr_; }
  int64_t steps() const { return t_; }
  std::vector<Tensor<float>>& m() { return m_; }
  std::vector<Tensor<float>>& v() { return v_; }
  void set_steps(int64_t t) { t_ = t; }

 private:
  float lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<float>> m_, v_;
};

}  // namespace vtb::dc
