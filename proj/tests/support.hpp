#pragma once

#include "catpol/envs.hpp"
#include "catpol/gradcore.hpp"
#include "catpol/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace catpol::testing {

inline Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0)
{
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = scale * rng.normal();
    return m;
}

inline Mat uniform_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double lo, double hi)
{
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = lo + (hi - lo) * rng.uniform();
    return m;
}

/// |a - b| / max(|a|, |b|, floor). Central differences at eps = 1e-6 carry
/// rounding noise near 1e-10 * |f|, so gradients well below one compare absolutely.
inline double rel_error(double a, double b, double floor = 1.0)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Start states spread beyond the reset distribution.
inline Mat random_states(const Env& env, Rng& rng, Eigen::Index n)
{
    Mat s(n, env.spec.state_dim);
    for (Eigen::Index i = 0; i < n; ++i)
        s.row(i) = reset(env, rng).values;
    if (env.kind == EnvKind::TwoGoal)
        s += random_mat(rng, n, env.spec.state_dim, 0.8);
    if (env.kind == EnvKind::Pendulum) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double th = std::numbers::pi * (2.0 * rng.uniform() - 1.0);
            s.row(i) << std::cos(th), std::sin(th), 4.0 * rng.normal();
        }
    }
    if (env.kind == EnvKind::SmoothReacher) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double a = std::numbers::pi * (2.0 * rng.uniform() - 1.0);
            const double b = std::numbers::pi * (2.0 * rng.uniform() - 1.0);
            s(i, 0) = std::cos(a);
            s(i, 1) = std::sin(a);
            s(i, 2) = std::cos(b);
            s(i, 3) = std::sin(b);
        }
    }
    return s;
}

/// Builds a scalar loss from leaf values on a fresh tape.
using ScalarGraph = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Worst relative error between tape gradients and central differences of
/// the same graph evaluated on perturbed leaves.
inline double max_fd_error(const ScalarGraph& f, std::vector<Mat> leaves, double eps = 1e-6)
{
    Tape tape;
    std::vector<Var> vars;
    for (const auto& m : leaves)
        vars.push_back(tape.parameter(m));
    tape.backward(f(tape, vars));

    auto eval = [&](const std::vector<Mat>& at) {
        Tape t;
        std::vector<Var> vs;
        for (const auto& m : at)
            vs.push_back(t.parameter(m));
        return f(t, vs).value()(0, 0);
    };

    double worst = 0.0;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        for (Eigen::Index i = 0; i < leaves[k].size(); ++i) {
            const double orig = leaves[k].data()[i];
            leaves[k].data()[i] = orig + eps;
            const double up = eval(leaves);
            leaves[k].data()[i] = orig - eps;
            const double down = eval(leaves);
            leaves[k].data()[i] = orig;
            const double fd = (up - down) / (2.0 * eps);
            worst = std::max(worst, rel_error(vars[k].grad().data()[i], fd));
        }
    }
    return worst;
}

} // namespace catpol::testing
