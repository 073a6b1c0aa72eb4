#include "vtbench/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vtb {

namespace {

constexpr float kBg[3] = {0.13f, 0.15f, 0.20f};
constexpr float kPlate[3] = {0.55f, 0.55f, 0.58f};
constexpr float kPeg[3] = {0.85f, 0.55f, 0.25f};
constexpr float kGrip[3] = {0.30f, 0.32f, 0.36f};
constexpr float kGel[3] = {0.07f, 0.09f, 0.11f};
constexpr float kDot[3] = {0.55f, 0.58f, 0.62f};

struct ViewMap {
  double y0, z1, ppm;  // world y at col 0 edge; world z at row 0 edge (top)
  int res;
  double col_lo(int c) const { return y0 + c / ppm; }
  double row_hi(int r) const { return z1 - r / ppm; }
};

ViewMap make_view(const HoleSpec& spec, const SensorConfig& cfg) {
  ViewMap v;
  v.res = cfg.resolution;
  v.ppm = pixels_per_m(cfg);
  v.y0 = spec.center.y() - view::kYHalf;
  v.z1 = spec.center.z() + view::kZAbove;
  return v;
}

void fill(Image& img, const float* color) {
  for (int64_t i = 0; i < img.size(); i += 3) {
    img[i] = color[0];
    img[i + 1] = color[1];
    img[i + 2] = color[2];
  }
}

void blend(Image& img, int r, int c, const float* color, double cov) {
  if (cov <= 0.0) return;
  const float a = static_cast<float>(std::min(1.0, cov));
  float* px = img.ptr() + (static_cast<int64_t>(r) * img.dim(1) + c) * 3;
  for (int k = 0; k < 3; ++k) px[k] = (1.0f - a) * px[k] + a * color[k];
}

double overlap(double lo, double hi, double a, double b) {
  return std::max(0.0, std::min(hi, b) - std::max(lo, a));
}

// Axis-aligned rectangle with exact per-pixel coverage, optional per-row
// horizontal shear (dy per meter of height above z_ref).
void draw_rect(Image& img, const ViewMap& v, double wy0, double wy1, double wz0,
               double wz1, const float* color, double shear = 0.0,
               double z_ref = 0.0) {
  if (wy1 <= wy0 || wz1 <= wz0) return;
  const double px = 1.0 / v.ppm;
  for (int r = 0; r < v.res; ++r) {
    const double rz1 = v.row_hi(r), rz0 = rz1 - px;
    const double vcov = overlap(rz0, rz1, wz0, wz1) * v.ppm;
    if (vcov <= 0.0) continue;
    const double zc = 0.5 * (std::max(rz0, wz0) + std::min(rz1, wz1));
    const double dy = shear * (zc - z_ref);
    for (int c = 0; c < v.res; ++c) {
      const double cy0 = v.col_lo(c), cy1 = cy0 + px;
      const double hcov = overlap(cy0, cy1, wy0 + dy, wy1 + dy) * v.ppm;
      blend(img, r, c, color, vcov * hcov);
    }
  }
}

}  // namespace

void SensorConfig::validate() const {
  if (resolution != 16 && resolution != 32 && resolution != 64)
    throw std::invalid_argument("resolution must be one of 16, 32, 64");
  if (vis_noise_sigma < 0.0f || tac_noise_sigma < 0.0f)
    throw std::invalid_argument("noise sigma must be >= 0");
}

double pixels_per_m(const SensorConfig& cfg) {
  return cfg.resolution / view::kFov;
}

Image render_visual(const EnvState& state, const HoleSpec& spec,
                    const SensorConfig& cfg) {
  cfg.validate();
  const ViewMap v = make_view(spec, cfg);
  Image img({cfg.resolution, cfg.resolution, 3});
  fill(img, kBg);

  // Plate slab with the hole opening as a gap down to the bore bottom.
  const double plate_top = spec.plate_z();
  const double plate_bot = plate_top - spec.hole_depth();
  draw_rect(img, v, v.y0, v.y0 + view::kFov, plate_bot, plate_top, kPlate);
  const double half_gap = 0.5e-3 * (spec.peg_diameter_mm + spec.tol_mm);
  draw_rect(img, v, spec.center.y() - half_gap, spec.center.y() + half_gap,
            plate_bot, plate_top, kBg);

  // Photometric depth cue: brightness encodes x (distance toward the
  // camera); this is the only rendered signal for the x axis.
  const double xf = std::clamp(
      (state.p_e.x() - (spec.center.x() - 0.05)) / 0.1, 0.0, 1.0);
  const float df =
      static_cast<float>(view::kDepthDimMin + view::kDepthDimSpan * xf);
  float peg_c[3], grip_c[3];
  for (int k = 0; k < 3; ++k) {
    peg_c[k] = kPeg[k] * df;
    grip_c[k] = kGrip[k] * df;
  }

  // Peg: rectangle standing on the tip, sheared by the visible lean
  // (rotation about x shows in a y-z view; rotation about y does not).
  const double py = state.p_e.y();
  const double half_w = 0.5e-3 * spec.peg_diameter_mm;
  const double shear = std::tan(state.theta.x() * M_PI / 180.0);
  draw_rect(img, v, py - half_w, py + half_w, state.p_e.z(),
            state.p_e.z() + view::kPegLen, peg_c, shear, state.p_e.z());

  // Gripper fingers flanking the peg above the tip.
  for (int side = -1; side <= 1; side += 2) {
    const double b0 = py + side * 0.013, b1 = py + side * 0.018;
    draw_rect(img, v, std::min(b0, b1), std::max(b0, b1),
              state.p_e.z() + 0.028, state.p_e.z() + 0.052, grip_c, shear,
              state.p_e.z());
  }
  return img;
}

Image render_tactile(const EnvState& state, const SensorConfig& cfg) {
  cfg.validate();
  const int res = cfg.resolution;
  Image img({res, res, 3});
  fill(img, kGel);

  const double fn = state.contact == Contact::Free ? 0.0 : state.f_normal;
  const Eigen::Vector2d fs =
      state.contact == Contact::Free ? Eigen::Vector2d(0, 0) : state.f_shear;

  const double bright = 1.0 + 0.8 * (1.0 - std::exp(-fn / 4.0));
  float dot_c[3];
  for (int k = 0; k < 3; ++k)
    dot_c[k] = std::min(1.0f, static_cast<float>(kDot[k] * bright));

  const double k_gel = 0.04 * res;  // px per N of shear
  const double dx = k_gel * fs.x(), dy = k_gel * fs.y();
  const double radius = res / 20.0;

  for (int j = 0; j < 6; ++j) {
    for (int i = 0; i < 6; ++i) {
      const double cx = (i + 1) * res / 7.0 + dx;
      const double cy = (j + 1) * res / 7.0 + dy;
      const int r0 = std::max(0, static_cast<int>(cy - radius - 1));
      const int r1 = std::min(res - 1, static_cast<int>(cy + radius + 1));
      const int c0 = std::max(0, static_cast<int>(cx - radius - 1));
      const int c1 = std::min(res - 1, static_cast<int>(cx + radius + 1));
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const double d = std::hypot(c + 0.5 - cx, r + 0.5 - cy);
          const double cov = std::clamp(radius - d + 0.5, 0.0, 1.0);
          blend(img, r, c, dot_c, cov);
        }
      }
    }
  }
  return img;
}

Observation render_observation(const EnvState& state, const HoleSpec& spec,
                               const SensorConfig& cfg) {
  return Observation{render_visual(state, spec, cfg),
                     render_tactile(state, cfg)};
}

Observation add_noise(const Observation& obs, const SensorConfig& cfg, Rng& rng) {
  Observation out{obs.vis.clone(), obs.tac.clone()};
  if (cfg.vis_noise_sigma > 0.0f)
    for (int64_t i = 0; i < out.vis.size(); ++i)
      out.vis[i] = std::clamp(out.vis[i] + cfg.vis_noise_sigma * rng.normal_f(),
                              0.0f, 1.0f);
  if (cfg.tac_noise_sigma > 0.0f)
    for (int64_t i = 0; i < out.tac.size(); ++i)
      out.tac[i] = std::clamp(out.tac[i] + cfg.tac_noise_sigma * rng.normal_f(),
                              0.0f, 1.0f);
  return out;
}

}  // namespace vtb
