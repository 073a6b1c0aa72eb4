#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "vtbench/rng.hpp"

namespace vtb {

// Geometry defaults (meters / degrees). tol and chamfer_width are diametral,
// matching the machining convention for clearances; per-side values are half.
namespace geo {
inline constexpr double kPegDiameterMm = 20.0;
inline constexpr double kHoleDepthMm = 30.0;
inline constexpr double kGoalDepthMm = 25.0;
inline constexpr double kChamferMm = 1.0;
inline constexpr double kDeltaMax = 0.005;       // m per axis per step
inline constexpr double kWorkspaceHalf = 0.05;   // m around hole entry
inline constexpr int kTimeoutSteps = 150;
inline constexpr double kControlDtSeconds = 0.1; // 10 Hz control
inline constexpr double kThetaJamDeg = 10.0;
inline constexpr double kThetaCapDeg = 15.0;
inline constexpr double kTiltGainDegPerM = 1500.0;  // deg per m of wall excess
inline constexpr double kRelaxPerClearance = 0.5;   // tilt decay per full correction
inline constexpr double kPressStiffness = 2000.0;   // N per m of blocked descent
inline constexpr double kWallStiffness = 2000.0;    // N per m of lateral excess
inline constexpr double kDragStiffness = 200.0;     // N per m of pressed slide
inline constexpr double kGeomEps = 1e-9;            // m
}  // namespace geo

struct HoleSpec {
  Eigen::Vector3d center{0.0, 0.0, 0.0};  // top-center of hole opening, m
  double tol_mm = 2.0;                    // diametral clearance, mm
  double alpha_deg = 0.0;                 // hole-axis tilt about y, deg
  double peg_diameter_mm = geo::kPegDiameterMm;
  double hole_depth_mm = geo::kHoleDepthMm;
  double chamfer_width_mm = geo::kChamferMm;

  double clearance() const { return 0.5e-3 * tol_mm; }          // per side, m
  double chamfer() const { return 0.5e-3 * chamfer_width_mm; }  // per side, m
  double hole_depth() const { return 1e-3 * hole_depth_mm; }
  double plate_z() const { return center.z(); }
  void validate() const;  // throws std::invalid_argument on bad fields
};

struct Workspace {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
  static Workspace around(const HoleSpec& spec, double half = geo::kWorkspaceHalf);
  bool contains(const Eigen::Vector3d& p) const;
  void validate(const HoleSpec& spec) const;
};

enum class Contact : uint8_t { Free, SurfaceRest, WallContact, Jammed };
const char* contact_name(Contact c);

struct EnvState {
  Eigen::Vector3d p_e{0, 0, 0};    // tracked peg-tip position, m
  Eigen::Vector2d theta{0, 0};     // passive tilt about (x, y), deg
  double insertion_depth = 0.0;    // m along hole axis
  Contact contact = Contact::Free;
  double f_normal = 0.0;           // N, reaction against blocked descent
  Eigen::Vector2d f_shear{0, 0};   // N, lateral reaction
  int step = 0;
};

struct GoalSpec {
  Eigen::Vector3d p_g{0, 0, 0};
  Eigen::Vector3d box_halfwidth_mm{5.0, 5.0, 5.0};
  // Goal point at the given insertion depth on the (possibly tilted) axis.
  static GoalSpec at_depth(const HoleSpec& spec, double depth_mm = geo::kGoalDepthMm);
};

struct Action {
  Eigen::Vector3d delta{0, 0, 0};  // m
};

// World <-> hole-frame rotation: hole frame is the plate frame rotated by
// alpha about y. Columns of the returned matrix are the hole axes in world.
Eigen::Matrix3d hole_rotation(const HoleSpec& spec);

// Component of (p - hole axis) perpendicular to the axis, in the hole frame.
Eigen::Vector2d lateral_offset(const Eigen::Vector3d& p, const HoleSpec& spec);

EnvState env_reset(const HoleSpec& spec, const Workspace& ws, Rng& rng);

Action clamp_action(const Action& a, const EnvState& state, const Workspace& ws,
                    double delta_max = geo::kDeltaMax);

EnvState env_step(const EnvState& state, const Action& a, const HoleSpec& spec,
                  const Workspace& ws);

bool in_goal(const Eigen::Vector3d& p_e, const GoalSpec& goal);

// Convenience wrapper owning spec/workspace/goal/state for rollouts.
class PegEnv {
 public:
  PegEnv(const HoleSpec& spec, int max_steps = geo::kTimeoutSteps,
         double delta_max = geo::kDeltaMax);

  const EnvState& reset(uint64_t seed);
  const EnvState& step(const Action& a);  // clamps the action internally

  const EnvState& state() const { return state_; }
  const HoleSpec& spec() const { return spec_; }
  const Workspace& workspace() const { return ws_; }
  const GoalSpec& goal() const { return goal_; }
  int max_steps() const { return max_steps_; }
  double delta_max() const { return delta_max_; }

 private:
  HoleSpec spec_;
  Workspace ws_;
  GoalSpec goal_;
  EnvState state_;
  int max_steps_;
  double delta_max_;
};

}  // namespace vtb
