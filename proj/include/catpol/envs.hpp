#pragma once

// Differentiable toy control tasks. Dynamics are written once, templated on
// the value type, so the graph-building step and the plain evaluation step
// share every floating-point operation.

#include "catpol/gradcore.hpp"
#include "catpol/rng.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace catpol {

enum class EnvKind { TwoGoal, Pendulum, SmoothReacher };

struct EnvSpec {
    std::string name;
    Eigen::Index state_dim = 0;
    Eigen::Index action_dim = 0;
    double dt = 0.1;
    int episode_horizon = 1;
    double reward_min = 0.0;
    double reward_max = 1.0;
};

struct Env {
    EnvKind kind = EnvKind::TwoGoal;
    EnvSpec spec;
    /// Pendulum only; zero gives the energy-conserving variant.
    double damping = 0.05;
};

/// "two_goal" | "pendulum" | "smooth_reacher"
Env make_env(std::string_view name);
std::vector<std::string> env_names();

struct EnvState {
    Mat values; // 1 x state_dim
    int step_count = 0;
};

template <class X>
struct Transition {
    X next_state;
    X reward; // B x 1
};

namespace two_goal {
inline constexpr double kDt = 0.1;
inline constexpr double kAccelMax = 2.0;
inline constexpr double kVelocityDecay = 0.9;
inline constexpr double kSharpness = 8.0;
inline constexpr double kGoalX = 1.0; // goals at (+-1, 0)
} // namespace two_goal

namespace pendulum {
inline constexpr double kGravity = 9.8;
inline constexpr double kLength = 1.0;
inline constexpr double kMass = 1.0;
inline constexpr double kTorqueMax = 2.0;
inline constexpr double kDt = 0.05;
inline constexpr double kMaxSpeed = 8.0;
inline constexpr double kLinearSpeed = 6.0; // soft clamp is exact identity below this
} // namespace pendulum

namespace reacher {
inline constexpr double kLink1 = 0.5;
inline constexpr double kLink2 = 0.5;
inline constexpr double kDt = 0.05;
inline constexpr double kSpeedScale = 2.0;
inline constexpr double kRewardWidth = 0.01;
inline constexpr double kTargetRadiusMin = 0.2;
inline constexpr double kTargetRadiusMax = 0.95;
} // namespace reacher

EnvState reset(const Env& env, Rng& rng);

/// Batched (B rows) differentiable transition; reward is computed on the
/// next state. Throws on non-finite input or actions outside [-1, 1].
Transition<Var> step_diff(const Env& env, Var state, Var action);
/// Same arithmetic on plain values.
Transition<Mat> step_values(const Env& env, const Mat& state, const Mat& action);

struct EvalStep {
    EnvState next;
    double reward = 0.0;
    bool done = false;
};

/// Single-state step with horizon bookkeeping. Dynamics are deterministic; the
/// generator is accepted for interface symmetry and left untouched.
EvalStep step_eval(const Env& env, const EnvState& state, const Mat& action, Rng& rng);

/// Pendulum mechanical energy per unit mass, 0.5 l^2 w^2 + g l cos(theta),
/// with theta = 0 upright.
double pendulum_energy(const Mat& state);
/// Reacher fingertip position (B x 2).
Mat reacher_tip(const Mat& state);

} // namespace catpol
