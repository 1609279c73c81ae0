#include "support.hpp"

#include "catpol/envs.hpp"

#include <doctest.h>

#include <numbers>

using namespace catpol;
using namespace catpol::testing;

namespace {

Mat pendulum_state(double theta, double omega)
{
    Mat s(1, 3);
    s << std::cos(theta), std::sin(theta), omega;
    return s;
}

} // namespace

TEST_CASE("environment registry")
{
    CHECK(env_names() == std::vector<std::string>{"two_goal", "pendulum", "smooth_reacher"});
    CHECK_THROWS_AS(make_env("cartpole"), std::invalid_argument);

    const Env tg = make_env("two_goal");
    CHECK(tg.spec.state_dim == 4);
    CHECK(tg.spec.action_dim == 2);
    CHECK(tg.spec.episode_horizon == 60);
    const Env pd = make_env("pendulum");
    CHECK(pd.spec.state_dim == 3);
    CHECK(pd.spec.action_dim == 1);
    CHECK(pd.spec.episode_horizon == 200);
    const Env rc = make_env("smooth_reacher");
    CHECK(rc.spec.state_dim == 8);
    CHECK(rc.spec.action_dim == 2);
    CHECK(rc.spec.episode_horizon == 100);
    for (const auto& name : env_names()) {
        const Env e = make_env(name);
        CHECK(e.spec.dt > 0.0);
        CHECK(e.spec.reward_min == 0.0);
        CHECK(e.spec.reward_max == 1.0);
    }
}

TEST_CASE("reset states")
{
    Rng rng(1);
    const Env tg = make_env("two_goal");
    for (int i = 0; i < 100; ++i) {
        const EnvState s = reset(tg, rng);
        CHECK(s.step_count == 0);
        CHECK(std::abs(s.values(0, 0)) <= 0.05);
        CHECK(std::abs(s.values(0, 1)) <= 0.05);
        CHECK(s.values(0, 2) == 0.0);
        CHECK(s.values(0, 3) == 0.0);
    }
    const Env pd = make_env("pendulum");
    for (int i = 0; i < 100; ++i) {
        const Mat v = reset(pd, rng).values;
        CHECK(v(0, 0) < -0.99); // hanging down
        CHECK(v(0, 0) * v(0, 0) + v(0, 1) * v(0, 1) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(v(0, 2) == 0.0);
    }
    const Env rc = make_env("smooth_reacher");
    for (int i = 0; i < 100; ++i) {
        const Mat v = reset(rc, rng).values;
        const double r = std::hypot(v(0, 6), v(0, 7));
        CHECK(r >= reacher::kTargetRadiusMin);
        CHECK(r <= reacher::kTargetRadiusMax);
    }
    for (const auto& name : env_names()) {
        const Env e = make_env(name);
        Rng a(9), b(9);
        CHECK(reset(e, a).values == reset(e, b).values);
    }
}

TEST_CASE("two_goal at rest with zero action")
{
    const Env env = make_env("two_goal");
    const Transition<Mat> tr = step_values(env, Mat::Zero(1, 4), Mat::Zero(1, 2));
    CHECK(tr.next_state.isZero());
    CHECK(tr.reward(0, 0) == doctest::Approx(std::exp(-8.0)).epsilon(1e-15));
    CHECK(tr.reward(0, 0) == doctest::Approx(3.35e-4).epsilon(1e-2));
}

TEST_CASE("two_goal double integrator arithmetic")
{
    const Env env = make_env("two_goal");
    Mat s(1, 4);
    s << 0.2, -0.1, 0.5, 1.0;
    Mat a(1, 2);
    a << 0.5, -1.0;
    const Transition<Mat> tr = step_values(env, s, a);
    const double vx = 0.9 * 0.5 + 0.1 * 0.5 * 2.0;
    const double vy = 0.9 * 1.0 - 0.1 * 1.0 * 2.0;
    CHECK(tr.next_state(0, 2) == doctest::Approx(vx).epsilon(1e-15));
    CHECK(tr.next_state(0, 3) == doctest::Approx(vy).epsilon(1e-15));
    CHECK(tr.next_state(0, 0) == doctest::Approx(0.2 + 0.1 * vx).epsilon(1e-15));
    CHECK(tr.next_state(0, 1) == doctest::Approx(-0.1 + 0.1 * vy).epsilon(1e-15));
}

TEST_CASE("two_goal reward is mirror symmetric and bounded")
{
    const Env env = make_env("two_goal");
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        Mat s = random_mat(rng, 1, 4, 1.5);
        Mat m = s;
        m(0, 0) = -m(0, 0);
        m(0, 2) = -m(0, 2);
        Mat a = uniform_mat(rng, 1, 2, -1.0, 1.0);
        Mat am = a;
        am(0, 0) = -am(0, 0);
        CHECK(step_values(env, s, a).reward(0, 0) == step_values(env, m, am).reward(0, 0));
    }
    // At a goal the reward is at its largest but still below one.
    Mat at_goal(1, 4);
    at_goal << 1.0, 0.0, 0.0, 0.0;
    const double r = step_values(env, at_goal, Mat::Zero(1, 2)).reward(0, 0);
    CHECK(r == doctest::Approx(0.5 * (1.0 + std::exp(-32.0))).epsilon(1e-15));
}

TEST_CASE("rewards stay within the declared range")
{
    Rng rng(3);
    for (const auto& name : env_names()) {
        CAPTURE(name);
        const Env env = make_env(name);
        double lo = 1.0, hi = 0.0;
        for (int chunk = 0; chunk < 100; ++chunk) {
            const Mat s = random_states(env, rng, 10'000);
            const Mat a = uniform_mat(rng, 10'000, env.spec.action_dim, -1.0, 1.0);
            const Mat r = step_values(env, s, a).reward;
            lo = std::min(lo, r.minCoeff());
            hi = std::max(hi, r.maxCoeff());
        }
        CHECK(lo >= env.spec.reward_min);
        CHECK(hi <= env.spec.reward_max);
    }
}

TEST_CASE("pendulum upright at rest earns full reward")
{
    const Env env = make_env("pendulum");
    const Transition<Mat> tr = step_values(env, pendulum_state(0.0, 0.0), Mat::Zero(1, 1));
    CHECK(tr.reward(0, 0) == 1.0);
}

TEST_CASE("pendulum falls away from upright and torque is too weak to hold it sideways")
{
    const Env env = make_env("pendulum");
    Mat s = pendulum_state(0.1, 0.0);
    for (int t = 0; t < 10; ++t)
        s = step_values(env, s, Mat::Zero(1, 1)).next_state;
    CHECK(std::atan2(s(0, 1), s(0, 0)) > 0.1);

    // Horizontal with full opposing torque still accelerates downward.
    const Mat h = step_values(env, pendulum_state(std::numbers::pi / 2, 0.0), Mat::Constant(1, 1, -1.0)).next_state;
    CHECK(h(0, 2) > 0.0);
}

TEST_CASE("pendulum angular speed is bounded")
{
    const Env env = make_env("pendulum");
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        Mat s = pendulum_state(rng.uniform() * 6.0, 30.0 * rng.normal());
        const Mat a = uniform_mat(rng, 1, 1, -1.0, 1.0);
        const Mat n = step_values(env, s, a).next_state;
        CHECK(std::abs(n(0, 2)) <= pendulum::kMaxSpeed);
        CHECK(n(0, 0) * n(0, 0) + n(0, 1) * n(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("undamped pendulum has no secular energy drift")
{
    Env env = make_env("pendulum");
    env.damping = 0.0;
    for (double amplitude : {0.1, 0.5, 1.0, 2.0, 3.0}) {
        CAPTURE(amplitude);
        Mat s = pendulum_state(std::numbers::pi - amplitude, 0.0);
        const int steps = 4000;
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int t = 0; t < steps; ++t) {
            const double e = pendulum_energy(s);
            sx += t;
            sy += e;
            sxx += double(t) * t;
            sxy += t * e;
            s = step_values(env, s, Mat::Zero(1, 1)).next_state;
        }
        const double slope = (steps * sxy - sx * sy) / (steps * sxx - sx * sx);
        CHECK(std::abs(slope) <= 1e-3);
    }
}

TEST_CASE("reacher fingertip kinematics")
{
    const Env env = make_env("smooth_reacher");
    Mat s = Mat::Zero(1, 8);
    s(0, 0) = 1.0;
    s(0, 2) = 1.0; // both joints at zero: arm straight along x
    s(0, 6) = 1.0;
    CHECK(reacher_tip(s)(0, 0) == doctest::Approx(1.0));
    CHECK(reacher_tip(s)(0, 1) == doctest::Approx(0.0));
    const Transition<Mat> tr = step_values(env, s, Mat::Zero(1, 2));
    CHECK(tr.reward(0, 0) == doctest::Approx(1.0));
    // Joint speeds follow the action directly.
    Mat a(1, 2);
    a << 0.5, -0.25;
    const Mat n = step_values(env, s, a).next_state;
    CHECK(n(0, 4) == doctest::Approx(1.0));
    CHECK(n(0, 5) == doctest::Approx(-0.5));
    CHECK(std::atan2(n(0, 1), n(0, 0)) == doctest::Approx(0.05));
}

TEST_CASE("step gradients match central differences")
{
    Rng rng(5);
    for (const auto& name : env_names()) {
        CAPTURE(name);
        const Env env = make_env(name);
        for (int trial = 0; trial < 5; ++trial) {
            const Mat s = random_states(env, rng, 3);
            const Mat a = uniform_mat(rng, 3, env.spec.action_dim, -0.95, 0.95);
            const Mat w = random_mat(rng, 3, env.spec.state_dim);
            const double err = max_fd_error(
                [&](Tape& t, const std::vector<Var>& v) {
                    const Transition<Var> tr = step_diff(env, v[0], v[1]);
                    return add(sum(mul(tr.next_state, t.constant(w))), sum(tr.reward));
                },
                {s, a});
            CHECK(err <= 1e-6);
            const double reward_err = max_fd_error(
                [&](Tape& t, const std::vector<Var>& v) { return sum(step_diff(env, t.constant(s), v[0]).reward); },
                {a});
            CHECK(reward_err <= 1e-6);
        }
    }
}

TEST_CASE("graph and value steps agree bitwise")
{
    Rng rng(6);
    for (const auto& name : env_names()) {
        const Env env = make_env(name);
        const Mat s = random_states(env, rng, 16);
        const Mat a = uniform_mat(rng, 16, env.spec.action_dim, -1.0, 1.0);
        Tape t;
        const Transition<Var> g = step_diff(env, t.constant(s), t.constant(a));
        const Transition<Mat> v = step_values(env, s, a);
        CHECK(g.next_state.value() == v.next_state);
        CHECK(g.reward.value() == v.reward);

        EnvState one{s.row(0), 0};
        const EvalStep e = step_eval(env, one, a.row(0), rng);
        CHECK(e.next.values == v.next_state.row(0));
        CHECK(e.reward == v.reward(0, 0));
    }
}

TEST_CASE("episodes end at the horizon")
{
    const Env env = make_env("two_goal");
    Rng rng(7);
    EnvState s = reset(env, rng);
    bool done = false;
    int steps = 0;
    while (!done) {
        const EvalStep e = step_eval(env, s, Mat::Zero(1, 2), rng);
        s = e.next;
        done = e.done;
        ++steps;
        CHECK(s.step_count == steps);
    }
    CHECK(steps == env.spec.episode_horizon);
    CHECK_THROWS_AS(step_eval(env, s, Mat::Zero(1, 2), rng), std::logic_error);
}

TEST_CASE("invalid inputs are rejected")
{
    const Env env = make_env("two_goal");
    Mat s = Mat::Zero(1, 4);
    CHECK_THROWS_AS(step_values(env, s, Mat::Constant(1, 2, 1.5)), std::invalid_argument);
    CHECK_THROWS_AS(step_values(env, Mat::Zero(1, 3), Mat::Zero(1, 2)), std::invalid_argument);
    s(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(step_values(env, s, Mat::Zero(1, 2)), std::domain_error);
    CHECK_THROWS_AS(step_values(env, Mat::Zero(1, 4), Mat::Constant(1, 2, INFINITY)), std::domain_error);
}
