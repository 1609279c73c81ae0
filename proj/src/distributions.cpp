#include "catpol/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace catpol {

std::string to_string(SampleMethod m)
{
    switch (m) {
    case SampleMethod::STE: return "STE";
    case SampleMethod::GumbelSoft: return "GumbelSoft";
    case SampleMethod::GumbelHard: return "GumbelHard";
    }
    return "?";
}

SampleMethod parse_sample_method(std::string_view name)
{
    if (name == "STE")
        return SampleMethod::STE;
    if (name == "GumbelSoft")
        return SampleMethod::GumbelSoft;
    if (name == "GumbelHard")
        return SampleMethod::GumbelHard;
    throw std::invalid_argument("unknown estimator method '" + std::string(name) + "'");
}

void GumbelConfig::validate() const
{
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw std::invalid_argument("gumbel temperature must be positive, got " + std::to_string(temperature));
}

double gumbel_from_uniform(double u)
{
    u = std::clamp(u, kUniformFloor, 1.0 - kUniformFloor);
    return -std::log(-std::log(u));
}

Mat sample_gumbel(Eigen::Index rows, Eigen::Index cols, Rng& rng)
{
    Mat g(rows, cols);
    for (Eigen::Index i = 0; i < g.size(); ++i)
        g.data()[i] = gumbel_from_uniform(rng.uniform());
    return g;
}

ModeSample gumbel_softmax(Var logits, const GumbelConfig& cfg, Rng& rng)
{
    return gumbel_softmax(logits, cfg, sample_gumbel(logits.rows(), logits.cols(), rng));
}

ModeSample gumbel_softmax(Var logits, const GumbelConfig& cfg, const Mat& gumbel_noise)
{
    cfg.validate();
    if (!all_finite(logits.value()))
        throw std::invalid_argument("gumbel_softmax: non-finite logits");
    Tape& tape = *logits.tape;
    Var perturbed = add(logits, tape.constant(gumbel_noise));
    Var soft = softmax_rows(scale(perturbed, 1.0 / cfg.temperature));
    if (!cfg.hard)
        return {soft, false, SampleMethod::GumbelSoft};
    const auto idx = argmax_rows(soft.value());
    Var hard = straight_through(one_hot_rows(idx, soft.cols()), soft);
    return {hard, true, SampleMethod::GumbelHard};
}

Eigen::Index categorical_index(const Eigen::Ref<const Row>& probs, double u)
{
    double acc = 0.0;
    Eigen::Index last = 0;
    for (Eigen::Index k = 0; k < probs.size(); ++k) {
        if (probs[k] <= 0.0)
            continue;
        acc += probs[k];
        last = k;
        if (u < acc)
            return k;
    }
    return last;
}

ModeSample ste_categorical(Var logits, Rng& rng)
{
    Eigen::VectorXd u(logits.rows());
    for (Eigen::Index r = 0; r < u.size(); ++r)
        u[r] = rng.uniform();
    return ste_categorical(logits, u);
}

ModeSample ste_categorical(Var logits, const Eigen::VectorXd& uniforms)
{
    if (uniforms.size() != logits.rows())
        throw std::invalid_argument("ste_categorical: need one uniform per logits row");
    if (!all_finite(logits.value()))
        throw std::invalid_argument("ste_categorical: non-finite logits");
    Var probs = softmax_rows(logits);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r)
        idx[static_cast<std::size_t>(r)] = categorical_index(probs.value().row(r), uniforms[r]);
    Var z = straight_through(one_hot_rows(idx, logits.cols()), probs);
    return {z, true, SampleMethod::STE};
}

SquashedGaussianParams make_squashed_gaussian(Var mean, Var raw_log_std)
{
    if (mean.rows() != raw_log_std.rows() || mean.cols() != raw_log_std.cols())
        throw std::invalid_argument("squashed gaussian: mean/log_std shape mismatch");
    return {mean, clamp(raw_log_std, kLogStdMin, kLogStdMax)};
}

SquashedSample squashed_gaussian_sample(const SquashedGaussianParams& params, Rng& rng)
{
    Mat eps(params.mean.rows(), params.mean.cols());
    for (Eigen::Index i = 0; i < eps.size(); ++i)
        eps.data()[i] = rng.normal();
    return squashed_gaussian_sample(params, eps);
}

SquashedSample squashed_gaussian_sample(const SquashedGaussianParams& params, const Mat& eps)
{
    Tape& tape = *params.mean.tape;
    Var noise = mul(exp_op(params.log_std), tape.constant(eps));
    Var pre = add(params.mean, noise);
    return {tanh_op(clamp(pre, -kPreTanhLimit, kPreTanhLimit)), pre};
}

Eigen::VectorXd gaussian_entropy(const Mat& log_std)
{
    const double per_dim = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
    return (log_std.rowwise().sum().array() + per_dim * static_cast<double>(log_std.cols())).matrix();
}

} // namespace catpol
