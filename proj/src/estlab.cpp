#include "catpol/estlab.hpp"

#include "catpol/policy.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace catpol {

std::string to_string(ObjectiveKind k)
{
    switch (k) {
    case ObjectiveKind::Linear: return "linear";
    case ObjectiveKind::Quadratic: return "quadratic";
    case ObjectiveKind::Custom: return "custom";
    }
    return "?";
}

ObjectiveKind parse_objective_kind(std::string_view name)
{
    if (name == "linear")
        return ObjectiveKind::Linear;
    if (name == "quadratic")
        return ObjectiveKind::Quadratic;
    throw std::invalid_argument("unknown objective '" + std::string(name) + "'");
}

namespace {

void check_enumerable(Eigen::Index n_factors, Eigen::Index n_classes)
{
    if (n_factors < 1 || n_classes < 2)
        throw std::invalid_argument("mode space needs N >= 1 and M >= 2");
    if (!mode_space_fits(n_factors, n_classes) || mode_count(n_factors, n_classes) > kMaxEnumeratedModes)
        throw std::invalid_argument("mode space M^N exceeds the enumeration cap of " +
                                    std::to_string(kMaxEnumeratedModes));
}

} // namespace

void ObjectiveSpec::validate() const
{
    if (n_factors > 4 || n_classes > 6)
        throw std::invalid_argument("objective: need N <= 4 and M <= 6");
    check_enumerable(n_factors, n_classes);
    if (!eval)
        throw std::invalid_argument("objective: no evaluation function");
}

ObjectiveSpec linear_objective(Eigen::Index n_factors, Eigen::Index n_classes, const Mat& w)
{
    if (w.rows() != n_factors * n_classes || w.cols() != 1)
        throw std::invalid_argument("linear objective: w must be (N*M) x 1");
    ObjectiveSpec obj{n_factors, n_classes, ObjectiveKind::Linear, {}};
    obj.eval = [w](Var z) { return matmul(z, z.tape->constant(w)); };
    obj.validate();
    return obj;
}

ObjectiveSpec quadratic_objective(Eigen::Index n_factors, Eigen::Index n_classes, const Mat& q)
{
    const Eigen::Index d = n_factors * n_classes;
    if (q.rows() != d || q.cols() != d)
        throw std::invalid_argument("quadratic objective: Q must be (N*M) x (N*M)");
    ObjectiveSpec obj{n_factors, n_classes, ObjectiveKind::Quadratic, {}};
    obj.eval = [q](Var z) { return row_sum(mul(matmul(z, z.tape->constant(q)), z)); };
    obj.validate();
    return obj;
}

ObjectiveSpec random_objective(ObjectiveKind kind, Eigen::Index n_factors, Eigen::Index n_classes, Rng& rng)
{
    const Eigen::Index d = n_factors * n_classes;
    auto gaussian = [&rng](Eigen::Index r, Eigen::Index c) {
        Mat m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = rng.normal();
        return m;
    };
    switch (kind) {
    case ObjectiveKind::Linear: return linear_objective(n_factors, n_classes, gaussian(d, 1));
    case ObjectiveKind::Quadratic: return quadratic_objective(n_factors, n_classes, gaussian(d, d));
    case ObjectiveKind::Custom: break;
    }
    throw std::invalid_argument("random_objective: custom objectives have no generator");
}

std::vector<Mat> enumerate_modes(Eigen::Index n_factors, Eigen::Index n_classes)
{
    check_enumerable(n_factors, n_classes);
    const std::int64_t count = mode_count(n_factors, n_classes);
    std::vector<Mat> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i)
        out.push_back(one_hot_rows(decode_mode(i, n_factors, n_classes), n_classes));
    return out;
}

namespace {

struct ExpectationGraph {
    Var logits;
    Var expectation;
};

ExpectationGraph build_expectation(Tape& tape, const Mat& logits, const ObjectiveSpec& obj)
{
    obj.validate();
    const Eigen::Index n = obj.n_factors;
    const Eigen::Index m = obj.n_classes;
    if (logits.rows() != n || logits.cols() != m)
        throw std::invalid_argument("logits shape does not match the objective");

    const auto modes = enumerate_modes(n, m);
    const auto k = static_cast<Eigen::Index>(modes.size());
    Mat flat_modes(k, n * m);
    for (Eigen::Index i = 0; i < k; ++i)
        flat_modes.row(i) = reshape(modes[static_cast<std::size_t>(i)], 1, n * m);

    Var l = tape.parameter(logits);
    Var probs = reshape(softmax_rows(l), 1, n * m);
    // P(mode) = prod_i p_i(b_i); factor i selects its class through the one-hot block.
    Var joint;
    for (Eigen::Index i = 0; i < n; ++i) {
        Var p_i = reshape(slice_cols(probs, i * m, m), m, 1);
        Var pick = matmul(tape.constant(flat_modes.middleCols(i * m, m)), p_i);
        joint = i == 0 ? pick : mul(joint, pick);
    }
    Var f = stop_gradient(obj.eval(tape.constant(flat_modes)));
    return {l, sum(mul(joint, f))};
}

} // namespace

Mat exact_categorical_grad(const Mat& logits, const ObjectiveSpec& obj)
{
    Tape tape;
    auto g = build_expectation(tape, logits, obj);
    tape.backward(g.expectation);
    return g.logits.grad();
}

double exact_categorical_expectation(const Mat& logits, const ObjectiveSpec& obj)
{
    Tape tape;
    return build_expectation(tape, logits, obj).expectation.value()(0, 0);
}

EstimatorReport estimator_stats(SampleMethod method, const Mat& logits, const ObjectiveSpec& obj, double temperature,
                                std::int64_t n_samples, Rng& rng)
{
    obj.validate();
    if (n_samples < 1000)
        throw std::invalid_argument("estimator_stats: need at least 1000 samples");
    if (method != SampleMethod::STE)
        GumbelConfig{temperature, true}.validate();
    const Eigen::Index n = obj.n_factors;
    const Eigen::Index m = obj.n_classes;
    const Eigen::Index d = n * m;
    if (logits.rows() != n || logits.cols() != m)
        throw std::invalid_argument("logits shape does not match the objective");

    constexpr std::int64_t kChunk = 8192;
    Row mean = Row::Zero(d);
    Row m2 = Row::Zero(d);
    std::int64_t seen = 0;
    for (std::int64_t done = 0; done < n_samples; done += kChunk) {
        const auto c = static_cast<Eigen::Index>(std::min(kChunk, n_samples - done));
        Tape tape;
        Var tiled = tape.parameter(logits.replicate(c, 1));
        ModeSample z;
        switch (method) {
        case SampleMethod::STE: z = ste_categorical(tiled, rng); break;
        case SampleMethod::GumbelSoft: z = gumbel_softmax(tiled, {temperature, false}, rng); break;
        case SampleMethod::GumbelHard: z = gumbel_softmax(tiled, {temperature, true}, rng); break;
        }
        Var f = obj.eval(reshape(z.z, c, d));
        tape.backward(sum(f));
        const Mat per_sample = reshape(tiled.grad(), c, d);

        // Chan et al. pairwise combination of chunk moments.
        const Row chunk_mean = per_sample.colwise().mean();
        const Row chunk_m2 = (per_sample.rowwise() - chunk_mean).array().square().colwise().sum().matrix();
        const auto na = static_cast<double>(seen);
        const auto nb = static_cast<double>(c);
        const Row delta = chunk_mean - mean;
        mean += delta * (nb / (na + nb));
        m2 += chunk_m2 + (delta.array().square() * (na * nb / (na + nb))).matrix();
        seen += c;
    }

    EstimatorReport r;
    r.method = method;
    r.temperature = method == SampleMethod::STE ? 0.0 : temperature;
    r.n_samples = n_samples;
    r.mean_grad = reshape(mean, n, m);
    r.variance = reshape(m2 / static_cast<double>(n_samples - 1), n, m);
    r.exact_grad = exact_categorical_grad(logits, obj);
    r.bias_norm = (r.mean_grad - r.exact_grad).norm();
    r.variance_trace = r.variance.sum();
    r.std_error_norm = std::sqrt(r.variance_trace / static_cast<double>(n_samples));
    r.bias_kind = method == SampleMethod::GumbelSoft ? "relaxation" : "categorical";
    return r;
}

ChiSquareResult chi_square_fit(std::span<const std::int64_t> counts, std::span<const double> probs)
{
    if (counts.size() != probs.size() || counts.size() < 2)
        throw std::invalid_argument("chi_square_fit: need matching counts and probabilities for >= 2 classes");
    double total = 0.0;
    for (auto c : counts)
        total += static_cast<double>(c);
    ChiSquareResult res;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double expected = total * probs[i];
        if (expected < 5.0)
            throw std::invalid_argument("chi_square_fit: expected count below 5 in class " + std::to_string(i));
        const double diff = static_cast<double>(counts[i]) - expected;
        res.statistic += diff * diff / expected;
    }
    res.dof = static_cast<int>(counts.size()) - 1;
    res.p_value = boost::math::gamma_q(0.5 * res.dof, 0.5 * res.statistic);
    return res;
}

} // namespace catpol
