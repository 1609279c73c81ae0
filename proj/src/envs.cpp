#include "catpol/envs.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace catpol {

Env make_env(std::string_view name)
{
    Env env;
    if (name == "two_goal") {
        env.kind = EnvKind::TwoGoal;
        env.spec = {"two_goal", 4, 2, two_goal::kDt, 60};
    } else if (name == "pendulum") {
        env.kind = EnvKind::Pendulum;
        env.spec = {"pendulum", 3, 1, pendulum::kDt, 200};
    } else if (name == "smooth_reacher") {
        env.kind = EnvKind::SmoothReacher;
        env.spec = {"smooth_reacher", 8, 2, reacher::kDt, 100};
    } else {
        throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
    }
    return env;
}

std::vector<std::string> env_names() { return {"two_goal", "pendulum", "smooth_reacher"}; }

EnvState reset(const Env& env, Rng& rng)
{
    auto jitter = [&rng] { return (2.0 * rng.uniform() - 1.0) * 0.05; };
    EnvState s;
    s.values = Mat::Zero(1, env.spec.state_dim);
    switch (env.kind) {
    case EnvKind::TwoGoal:
        s.values(0, 0) = jitter();
        s.values(0, 1) = jitter();
        break;
    case EnvKind::Pendulum: {
        const double theta = std::numbers::pi + jitter();
        s.values(0, 0) = std::cos(theta);
        s.values(0, 1) = std::sin(theta);
        break;
    }
    case EnvKind::SmoothReacher: {
        const double q1 = jitter();
        const double q2 = jitter();
        s.values(0, 0) = std::cos(q1);
        s.values(0, 1) = std::sin(q1);
        s.values(0, 2) = std::cos(q2);
        s.values(0, 3) = std::sin(q2);
        const double radius =
            reacher::kTargetRadiusMin + (reacher::kTargetRadiusMax - reacher::kTargetRadiusMin) * rng.uniform();
        const double angle = (2.0 * rng.uniform() - 1.0) * std::numbers::pi;
        s.values(0, 6) = radius * std::cos(angle);
        s.values(0, 7) = radius * std::sin(angle);
        break;
    }
    }
    return s;
}

namespace {

template <class X>
std::pair<X, X> rotate(const X& c, const X& s, const X& angle)
{
    X ca = cos_op(angle);
    X sa = sin_op(angle);
    return {sub(mul(c, ca), mul(s, sa)), add(mul(s, ca), mul(c, sa))};
}

template <class X>
Transition<X> two_goal_step(const X& state, const X& action)
{
    using namespace two_goal;
    X px = slice_cols(state, 0, 1);
    X py = slice_cols(state, 1, 1);
    X vx = slice_cols(state, 2, 1);
    X vy = slice_cols(state, 3, 1);
    X ax = slice_cols(action, 0, 1);
    X ay = slice_cols(action, 1, 1);

    X vx2 = add(scale(vx, kVelocityDecay), scale(ax, kDt * kAccelMax));
    X vy2 = add(scale(vy, kVelocityDecay), scale(ay, kDt * kAccelMax));
    X px2 = add(px, scale(vx2, kDt));
    X py2 = add(py, scale(vy2, kDt));

    X py_sq = square(py2);
    X d1 = add(square(add_scalar(px2, -kGoalX)), py_sq);
    X d2 = add(square(add_scalar(px2, kGoalX)), py_sq);
    X r = scale(add(exp_op(scale(d1, -kSharpness)), exp_op(scale(d2, -kSharpness))), 0.5);
    return {concat_cols(std::vector<X>{px2, py2, vx2, vy2}), r};
}

template <class X>
Transition<X> pendulum_step(const X& state, const X& action, double damping)
{
    using namespace pendulum;
    X c = slice_cols(state, 0, 1);
    X s = slice_cols(state, 1, 1);
    X w = slice_cols(state, 2, 1);
    X a = slice_cols(action, 0, 1);

    // theta = 0 is upright, so gravity pushes away from it.
    X accel = add(add(scale(s, kGravity / kLength), scale(a, kTorqueMax / (kMass * kLength * kLength))),
                  scale(w, -damping));
    X w2 = soft_clamp(add(w, scale(accel, kDt)), kLinearSpeed, kMaxSpeed);
    auto [c2, s2] = rotate(c, s, scale(w2, kDt));
    X r = scale(add_scalar(c2, 1.0), 0.5);
    return {concat_cols(std::vector<X>{c2, s2, w2}), r};
}

template <class X>
Transition<X> reacher_step(const X& state, const X& action)
{
    using namespace reacher;
    X c1 = slice_cols(state, 0, 1);
    X s1 = slice_cols(state, 1, 1);
    X c2 = slice_cols(state, 2, 1);
    X s2 = slice_cols(state, 3, 1);
    X target = slice_cols(state, 6, 2);

    X w = scale(action, kSpeedScale);
    X w1 = slice_cols(w, 0, 1);
    X w2 = slice_cols(w, 1, 1);
    auto [nc1, ns1] = rotate(c1, s1, scale(w1, kDt));
    auto [nc2, ns2] = rotate(c2, s2, scale(w2, kDt));

    // cos/sin of the absolute angle of link 2
    X c12 = sub(mul(nc1, nc2), mul(ns1, ns2));
    X s12 = add(mul(ns1, nc2), mul(nc1, ns2));
    X tip_x = add(scale(nc1, kLink1), scale(c12, kLink2));
    X tip_y = add(scale(ns1, kLink1), scale(s12, kLink2));
    X tip = concat_cols(std::vector<X>{tip_x, tip_y});
    X dist_sq = row_sum(square(sub(tip, target)));
    X r = exp_op(scale(dist_sq, -1.0 / kRewardWidth));
    return {concat_cols(std::vector<X>{nc1, ns1, nc2, ns2, w1, w2, target}), r};
}

template <class X>
Transition<X> dispatch(const Env& env, const X& state, const X& action)
{
    switch (env.kind) {
    case EnvKind::TwoGoal: return two_goal_step(state, action);
    case EnvKind::Pendulum: return pendulum_step(state, action, env.damping);
    case EnvKind::SmoothReacher: return reacher_step(state, action);
    }
    throw std::logic_error("unreachable");
}

void check_inputs(const Env& env, const Mat& state, const Mat& action)
{
    if (state.cols() != env.spec.state_dim || action.cols() != env.spec.action_dim || state.rows() != action.rows())
        throw std::invalid_argument(env.spec.name + ": state/action shape mismatch");
    if (!all_finite(state))
        throw std::domain_error(env.spec.name + ": non-finite state");
    if (!all_finite(action))
        throw std::domain_error(env.spec.name + ": non-finite action");
    if (action.cwiseAbs().maxCoeff() > 1.0)
        throw std::invalid_argument(env.spec.name + ": action outside [-1, 1]");
}

} // namespace

Transition<Var> step_diff(const Env& env, Var state, Var action)
{
    check_inputs(env, state.value(), action.value());
    return dispatch(env, state, action);
}

Transition<Mat> step_values(const Env& env, const Mat& state, const Mat& action)
{
    check_inputs(env, state, action);
    return dispatch(env, state, action);
}

EvalStep step_eval(const Env& env, const EnvState& state, const Mat& action, Rng& /*rng*/)
{
    if (state.step_count >= env.spec.episode_horizon)
        throw std::logic_error(env.spec.name + ": episode already finished");
    Transition<Mat> t = step_values(env, state.values, action);
    EvalStep out;
    out.next.values = std::move(t.next_state);
    out.next.step_count = state.step_count + 1;
    out.reward = t.reward(0, 0);
    out.done = out.next.step_count >= env.spec.episode_horizon;
    return out;
}

double pendulum_energy(const Mat& state)
{
    using namespace pendulum;
    const double w = state(0, 2);
    return 0.5 * kLength * kLength * w * w + kGravity * kLength * state(0, 0);
}

Mat reacher_tip(const Mat& state)
{
    using namespace reacher;
    Mat tip(state.rows(), 2);
    for (Eigen::Index r = 0; r < state.rows(); ++r) {
        const double c1 = state(r, 0), s1 = state(r, 1), c2 = state(r, 2), s2 = state(r, 3);
        tip(r, 0) = kLink1 * c1 + kLink2 * (c1 * c2 - s1 * s2);
        tip(r, 1) = kLink1 * s1 + kLink2 * (s1 * c2 + c1 * s2);
    }
    return tip;
}

} // namespace catpol
