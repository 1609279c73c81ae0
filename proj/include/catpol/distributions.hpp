#pragma once

#include "catpol/gradcore.hpp"
#include "catpol/rng.hpp"

#include <string>
#include <string_view>

namespace catpol {

enum class SampleMethod { STE, GumbelSoft, GumbelHard };

std::string to_string(SampleMethod m);
SampleMethod parse_sample_method(std::string_view name);

/// Relaxation temperature (lambda / tau) and whether the forward pass is hard.
struct GumbelConfig {
    double temperature = 2.0;
    bool hard = true;

    void validate() const;
};

/// A factorized mode sample: one row per categorical factor (possibly stacked
/// over a batch), each row on the probability simplex.
struct ModeSample {
    Var z;
    bool hard = false;
    SampleMethod source = SampleMethod::STE;

    const Mat& value() const { return z.value(); }
};

/// Pre-squash diagonal Gaussian. Construct through `make_squashed_gaussian`,
/// which clamps the log standard deviation.
struct SquashedGaussianParams {
    Var mean;
    Var log_std;
};

struct SquashedSample {
    Var action;   // tanh(pre_tanh), strictly inside (-1, 1)
    Var pre_tanh; // mean + exp(log_std) * eps
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kUniformFloor = 1e-12;
// tanh(15) is still below 1.0 in double precision, so clamping the pre-squash
// value here keeps every action strictly inside (-1, 1).
inline constexpr double kPreTanhLimit = 15.0;

/// g = -log(-log u) with u clamped to (1e-12, 1 - 1e-12).
double gumbel_from_uniform(double u);
Mat sample_gumbel(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Concrete / Gumbel-Softmax sample of each logits row. With `cfg.hard` the
/// forward value is the row argmax one-hot and the backward pass is the soft
/// sample's.
ModeSample gumbel_softmax(Var logits, const GumbelConfig& cfg, Rng& rng);
ModeSample gumbel_softmax(Var logits, const GumbelConfig& cfg, const Mat& gumbel_noise);

/// Exact categorical one-hot draw per row; backward passes the upstream
/// adjoint unchanged onto softmax(logits) and then through the softmax
/// Jacobian to the logits.
ModeSample ste_categorical(Var logits, Rng& rng);
/// Same, with one explicit Uniform(0,1) draw per row (inverse-CDF sampling).
ModeSample ste_categorical(Var logits, const Eigen::VectorXd& uniforms);

/// Index k with cumsum(p)[k-1] <= u < cumsum(p)[k]; falls back to the last
/// index with non-zero mass when rounding leaves u above the total.
Eigen::Index categorical_index(const Eigen::Ref<const Row>& probs, double u);

SquashedGaussianParams make_squashed_gaussian(Var mean, Var raw_log_std);
SquashedSample squashed_gaussian_sample(const SquashedGaussianParams& params, Rng& rng);
SquashedSample squashed_gaussian_sample(const SquashedGaussianParams& params, const Mat& eps);

/// Entropy of the pre-squash Gaussian, sum_i (log_std_i + 0.5 log(2 pi e)),
/// evaluated per row.
Eigen::VectorXd gaussian_entropy(const Mat& log_std);

} // namespace catpol
