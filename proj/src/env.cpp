#include "vtbench/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vtb {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

bool finite3(const Eigen::Vector3d& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

// Clamp |theta_i| to the cap without changing sign.
void cap_theta(Eigen::Vector2d& theta) {
  for (int i = 0; i < 2; ++i)
    theta[i] = std::clamp(theta[i], -geo::kThetaCapDeg, geo::kThetaCapDeg);
}

struct HoleFrame {
  Eigen::Matrix3d R;   // hole -> world
  Eigen::Vector3d c;   // hole entry center
  Eigen::Vector3d to_world(const Eigen::Vector2d& lat, double depth) const {
    return c + R * Eigen::Vector3d(lat.x(), lat.y(), -depth);
  }
  Eigen::Vector3d to_hole(const Eigen::Vector3d& p) const {
    return R.transpose() * (p - c);
  }
};

HoleFrame frame(const HoleSpec& spec) {
  return HoleFrame{hole_rotation(spec), spec.center};
}

// Shared in-hole kinematics: lateral clamp to the bore, tilt accumulation
// and relaxation, descent with jamming, exit on ascent. `delta` is a world
// displacement; `s.p_e` must already lie on/inside the bore.
void in_hole_move(EnvState& s, const Eigen::Vector3d& delta, const HoleSpec& spec) {
  const HoleFrame hf = frame(spec);
  const double clearance = spec.clearance();
  const Eigen::Vector3d q = hf.to_hole(s.p_e);
  Eigen::Vector2d lat(q.x(), q.y());
  double depth = std::max(0.0, -q.z());
  const Eigen::Vector3d dq = hf.R.transpose() * delta;

  // Lateral motion, clamped to the bore radius.
  const double r_before = lat.norm();
  Eigen::Vector2d att = lat + Eigen::Vector2d(dq.x(), dq.y());
  const double r_att = att.norm();
  if (r_att > clearance) {
    const double excess = r_att - clearance;
    const Eigen::Vector2d u = att / r_att;
    att = u * clearance;
    s.f_shear = -geo::kWallStiffness * excess * u;
    // Pushing along hole-x leans the peg about y and vice versa.
    s.theta.y() += geo::kTiltGainDegPerM * excess * u.x();
    s.theta.x() += geo::kTiltGainDegPerM * excess * u.y();
    cap_theta(s.theta);
    s.contact = Contact::WallContact;
  } else {
    const double correction = std::max(0.0, r_before - r_att);
    if (correction > 0.0) {
      const double f = 1.0 - geo::kRelaxPerClearance *
                                 std::min(1.0, correction / clearance);
      s.theta *= f;
    }
    s.contact = Contact::Free;
  }
  lat = att;

  // Axial motion.
  if (dq.z() < 0.0) {  // descending
    if (s.theta.cwiseAbs().maxCoeff() > geo::kThetaJamDeg) {
      s.f_normal += geo::kPressStiffness * (-dq.z());
      s.contact = Contact::Jammed;
    } else {
      double depth_new = depth - dq.z();
      if (depth_new > spec.hole_depth()) {
        s.f_normal += geo::kPressStiffness * (depth_new - spec.hole_depth());
        depth_new = spec.hole_depth();
        s.contact = Contact::SurfaceRest;  // resting on the hole bottom
      }
      depth = depth_new;
    }
  } else if (dq.z() > 0.0) {  // ascending
    const double depth_new = depth - dq.z();
    if (depth_new <= 0.0) {
      s.p_e = hf.to_world(lat, 0.0);
      s.p_e.z() += -depth_new;  // leftover ascent continues in free space
      s.insertion_depth = 0.0;
      s.theta.setZero();
      s.contact = Contact::Free;
      return;
    }
    depth = depth_new;
  }

  s.p_e = hf.to_world(lat, depth);
  s.insertion_depth = depth;
}

// Resolve a blocked-or-admitted landing at the plate plane with `budget`
// meters of unspent descent. `s.p_e.z` must equal the plate plane.
void land(EnvState& s, double budget, const Eigen::Vector3d& slide,
          const HoleSpec& spec) {
  const HoleFrame hf = frame(spec);
  const double clearance = spec.clearance();
  Eigen::Vector2d off = lateral_offset(s.p_e, spec);
  const double r = off.norm();

  if (r <= clearance + geo::kGeomEps) {
    in_hole_move(s, Eigen::Vector3d(0, 0, -budget), spec);
    return;
  }
  if (r <= clearance + spec.chamfer() + geo::kGeomEps && budget > 0.0) {
    // Chamfer lead-in: recentering costs descent one-for-one (45 degrees).
    const double needed = r - clearance;
    const double moved = std::min(needed, budget);
    const Eigen::Vector2d off2 = off * ((r - moved) / r);
    s.p_e += hf.R * Eigen::Vector3d(off2.x() - off.x(), off2.y() - off.y(), 0.0);
    s.p_e.z() = spec.plate_z();
    if (budget >= needed) {
      in_hole_move(s, Eigen::Vector3d(0, 0, -(budget - needed)), spec);
      if (s.insertion_depth == 0.0 && s.contact == Contact::Free)
        s.contact = Contact::SurfaceRest;
      return;
    }
    s.f_normal += geo::kDragStiffness * moved;  // sliding down the cone
    s.contact = Contact::SurfaceRest;
    return;
  }
  // Fully blocked by the plate.
  if (budget > 0.0) {
    s.f_normal += geo::kPressStiffness * budget;
    s.f_shear += -geo::kDragStiffness * Eigen::Vector2d(slide.x(), slide.y());
  }
  s.contact = Contact::SurfaceRest;
}

void free_move(EnvState& s, const Eigen::Vector3d& delta, const HoleSpec& spec) {
  s.p_e.x() += delta.x();
  s.p_e.y() += delta.y();
  const double tz = s.p_e.z() + delta.z();
  if (tz >= spec.plate_z() - geo::kGeomEps) {
    s.p_e.z() = tz;
    s.contact = Contact::Free;
    return;
  }
  const double budget = spec.plate_z() - tz;
  s.p_e.z() = spec.plate_z();
  land(s, budget, delta, spec);
}

void surface_move(EnvState& s, const Eigen::Vector3d& delta, const HoleSpec& spec) {
  s.p_e.x() += delta.x();
  s.p_e.y() += delta.y();
  if (delta.z() > 0.0) {
    s.p_e.z() += delta.z();
    s.contact = Contact::Free;
    return;
  }
  if (delta.z() == 0.0) {
    // Sliding on the plate without pressing; may drift over the opening.
    land(s, 0.0, delta, spec);
    return;
  }
  land(s, -delta.z(), delta, spec);
}

}  // namespace

void HoleSpec::validate() const {
  if (!finite3(center)) throw std::invalid_argument("hole center not finite");
  if (!(tol_mm > 0.0)) throw std::invalid_argument("tol must be > 0");
  if (alpha_deg < 0.0 || alpha_deg > 10.0)
    throw std::invalid_argument("alpha must be within [0, 10] degrees");
  if (!(hole_depth_mm > 0.0)) throw std::invalid_argument("hole_depth must be > 0");
  if (!(peg_diameter_mm > 0.0))
    throw std::invalid_argument("peg_diameter must be > 0");
  if (chamfer_width_mm < 0.0)
    throw std::invalid_argument("chamfer_width must be >= 0");
}

Workspace Workspace::around(const HoleSpec& spec, double half) {
  Workspace ws;
  ws.lo = spec.center - Eigen::Vector3d(half, half, half);
  ws.hi = spec.center + Eigen::Vector3d(half, half, half);
  return ws;
}

bool Workspace::contains(const Eigen::Vector3d& p) const {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

void Workspace::validate(const HoleSpec& spec) const {
  if (!finite3(lo) || !finite3(hi))
    throw std::invalid_argument("workspace bounds not finite");
  if (!((lo.array() < hi.array()).all()))
    throw std::invalid_argument("workspace lo must be < hi component-wise");
  if (!contains(spec.center))
    throw std::invalid_argument("workspace must contain the hole entry point");
}

const char* contact_name(Contact c) {
  switch (c) {
    case Contact::Free: return "free";
    case Contact::SurfaceRest: return "surface";
    case Contact::WallContact: return "wall";
    case Contact::Jammed: return "jammed";
  }
  return "?";
}

GoalSpec GoalSpec::at_depth(const HoleSpec& spec, double depth_mm) {
  GoalSpec g;
  g.p_g = spec.center +
          hole_rotation(spec) * Eigen::Vector3d(0, 0, -1e-3 * depth_mm);
  return g;
}

Eigen::Matrix3d hole_rotation(const HoleSpec& spec) {
  const double a = spec.alpha_deg * kDegToRad;
  const double ca = std::cos(a), sa = std::sin(a);
  Eigen::Matrix3d r;
  r << ca, 0, sa, 0, 1, 0, -sa, 0, ca;
  return r;
}

Eigen::Vector2d lateral_offset(const Eigen::Vector3d& p, const HoleSpec& spec) {
  const Eigen::Vector3d q = hole_rotation(spec).transpose() * (p - spec.center);
  return {q.x(), q.y()};
}

EnvState env_reset(const HoleSpec& spec, const Workspace& ws, Rng& rng) {
  spec.validate();
  ws.validate(spec);
  const double z_lo = spec.plate_z() + 0.010;
  const double z_mid = 0.5 * (ws.lo.z() + ws.hi.z());
  const double z_min = std::max(z_lo, z_mid);
  if (z_min >= ws.hi.z())
    throw std::invalid_argument("workspace too shallow for start sampling");
  EnvState s;
  s.p_e.x() = rng.uniform(ws.lo.x(), ws.hi.x());
  s.p_e.y() = rng.uniform(ws.lo.y(), ws.hi.y());
  s.p_e.z() = rng.uniform(z_min, ws.hi.z());
  return s;
}

Action clamp_action(const Action& a, const EnvState& state, const Workspace& ws,
                    double delta_max) {
  Action out;
  for (int i = 0; i < 3; ++i) {
    double d = std::clamp(a.delta[i], -delta_max, delta_max);
    d = std::clamp(d, ws.lo[i] - state.p_e[i], ws.hi[i] - state.p_e[i]);
    out.delta[i] = d;
  }
  return out;
}

EnvState env_step(const EnvState& state, const Action& a, const HoleSpec& spec,
                  const Workspace& ws) {
  if (!finite3(a.delta) || !finite3(state.p_e))
    throw std::domain_error("env step: non-finite action or state");
  EnvState s = state;
  s.step += 1;
  s.f_normal = 0.0;
  s.f_shear.setZero();

  if (s.insertion_depth > 0.0) {
    in_hole_move(s, a.delta, spec);
  } else if (s.p_e.z() <= spec.plate_z() + geo::kGeomEps) {
    surface_move(s, a.delta, spec);
  } else {
    free_move(s, a.delta, spec);
  }

  // Defensive: keep the tracked point inside the workspace box.
  s.p_e = s.p_e.cwiseMax(ws.lo).cwiseMin(ws.hi);
  return s;
}

bool in_goal(const Eigen::Vector3d& p_e, const GoalSpec& goal) {
  const Eigen::Vector3d d = (goal.p_g - p_e).cwiseAbs();
  return (d.array() < 1e-3 * goal.box_halfwidth_mm.array()).all();
}

PegEnv::PegEnv(const HoleSpec& spec, int max_steps, double delta_max)
    : spec_(spec),
      ws_(Workspace::around(spec)),
      goal_(GoalSpec::at_depth(spec)),
      max_steps_(max_steps),
      delta_max_(delta_max) {
  spec_.validate();
  ws_.validate(spec_);
}

const EnvState& PegEnv::reset(uint64_t seed) {
  Rng rng(seed);
  state_ = env_reset(spec_, ws_, rng);
  return state_;
}

const EnvState& PegEnv::step(const Action& a) {
  const Action c = clamp_action(a, state_, ws_, delta_max_);
  state_ = env_step(state_, c, spec_, ws_);
  return state_;
}

}  // namespace vtb
