#pragma once

// Exact-gradient oracle and estimator statistics on small, enumerable mode
// spaces.

#include "catpol/distributions.hpp"
#include "catpol/gradcore.hpp"
#include "catpol/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace catpol {

inline constexpr std::int64_t kMaxEnumeratedModes = 1296;

enum class ObjectiveKind { Linear, Quadratic, Custom };

std::string to_string(ObjectiveKind k);
ObjectiveKind parse_objective_kind(std::string_view name);

/// Scalar objective of a flattened mode. `eval` maps a B x (N*M) batch of
/// (soft or hard) modes to B x 1 values using recorded ops.
struct ObjectiveSpec {
    Eigen::Index n_factors = 1;
    Eigen::Index n_classes = 2;
    ObjectiveKind kind = ObjectiveKind::Custom;
    std::function<Var(Var)> eval;

    void validate() const;
};

/// f(z) = <w, z>, w is (N*M) x 1.
ObjectiveSpec linear_objective(Eigen::Index n_factors, Eigen::Index n_classes, const Mat& w);
/// f(z) = z^T Q z, Q is (N*M) x (N*M).
ObjectiveSpec quadratic_objective(Eigen::Index n_factors, Eigen::Index n_classes, const Mat& q);
/// Random linear / quadratic objective with entries ~ N(0, 1).
ObjectiveSpec random_objective(ObjectiveKind kind, Eigen::Index n_factors, Eigen::Index n_classes, Rng& rng);

/// All M^N one-hot mode matrices (each N x M) in lexicographic order, factor 0
/// most significant; position i has mode index i.
std::vector<Mat> enumerate_modes(Eigen::Index n_factors, Eigen::Index n_classes);

/// Gradient of E_{b ~ prod_i Cat(softmax(logits_i))}[f(b)] w.r.t. the N x M
/// logits, by exact enumeration.
Mat exact_categorical_grad(const Mat& logits, const ObjectiveSpec& obj);
double exact_categorical_expectation(const Mat& logits, const ObjectiveSpec& obj);

struct EstimatorReport {
    SampleMethod method = SampleMethod::STE;
    double temperature = 0.0;
    std::int64_t n_samples = 0;
    Mat mean_grad;  // N x M
    Mat exact_grad; // N x M, categorical objective
    Mat variance;   // N x M elementwise sample variance
    double bias_norm = 0.0;
    double variance_trace = 0.0;
    double std_error_norm = 0.0;
    /// "categorical" for STE / GumbelHard; "relaxation" for GumbelSoft, whose
    /// mean targets the relaxed objective rather than the categorical one.
    std::string bias_kind;
};

/// Draws n_samples independent single-sample gradient estimates of
/// d f(sample(logits)) / d logits with the named backward rule.
EstimatorReport estimator_stats(SampleMethod method, const Mat& logits, const ObjectiveSpec& obj, double temperature,
                                std::int64_t n_samples, Rng& rng);

struct ChiSquareResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

/// Pearson goodness of fit with M-1 degrees of freedom. Throws when an
/// expected count falls below 5.
ChiSquareResult chi_square_fit(std::span<const std::int64_t> counts, std::span<const double> probs);

} // namespace catpol
