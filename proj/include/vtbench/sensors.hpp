#pragma once

#include "vtbench/env.hpp"
#include "vtbench/rng.hpp"
#include "vtbench/tensor.hpp"

namespace vtb {

// Images are float tensors of shape {H, W, 3}, values in [0,1], row 0 at the
// top of the view.
using Image = dc::Tensor<float>;

struct Observation {
  Image vis;
  Image tac;
};

enum class Camera : uint8_t { SideX };  // orthographic, looking along +x

struct SensorConfig {
  int resolution = 16;  // one of {16, 32, 64}
  float vis_noise_sigma = 0.0f;
  float tac_noise_sigma = 0.0f;
  Camera camera = Camera::SideX;
  void validate() const;
};

// View geometry shared by the renderer and its tests.
namespace view {
inline constexpr double kFov = 0.128;        // m covered by the image square
inline constexpr double kYHalf = 0.064;      // view y in [cy-kYHalf, cy+kYHalf]
inline constexpr double kZBelow = 0.038;     // view z in [cz-kZBelow, cz+kZAbove]
inline constexpr double kZAbove = 0.090;
inline constexpr double kPegLen = 0.040;     // rendered peg length, m
inline constexpr double kDepthDimMin = 0.55; // photometric x-depth cue range
inline constexpr double kDepthDimSpan = 0.45;
}  // namespace view

double pixels_per_m(const SensorConfig& cfg);

Image render_visual(const EnvState& state, const HoleSpec& spec,
                    const SensorConfig& cfg);
Image render_tactile(const EnvState& state, const SensorConfig& cfg);

Observation render_observation(const EnvState& state, const HoleSpec& spec,
                               const SensorConfig& cfg);

// Adds per-pixel Gaussian noise (independent sigma per modality), then clips
// to [0,1]. Consumes vis noise first, then tac.
Observation add_noise(const Observation& obs, const SensorConfig& cfg, Rng& rng);

}  // namespace vtb
