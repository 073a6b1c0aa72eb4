#include "vtbench/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace vtb::dc {

float clip_global_norm(std::vector<Tensor<float>>& grads, float max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (int64_t i = 0; i < g.size(); ++i)
      sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
  const float norm = static_cast<float>(std::sqrt(sq));
  if (norm > max_norm && norm > 0.0f) {
    const float s = max_norm / norm;
    for (auto& g : grads)
      for (int64_t i = 0; i < g.size(); ++i) g[i] *= s;
  }
  return norm;
}

void Adam::step(std::vector<Tensor<float>>& params,
                const std::vector<Tensor<float>>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam: param/grad count mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("adam: state does not match parameter list");
  ++t_;
  const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor<float>& p = params[k];
    const Tensor<float>& g = grads[k];
    Tensor<float>& m = m_[k];
    Tensor<float>& v = v_[k];
    if (p.size() != g.size())
      throw std::invalid_argument("adam: grad shape mismatch at index " +
                                  std::to_string(k));
    for (int64_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0f - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0f - beta2_) * g[i] * g[i];
      const float mh = m[i] / bc1;
      const float vh = v[i] / bc2;
      p[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

}  // namespace vtb::dc
