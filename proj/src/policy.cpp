#include "catpol/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace catpol {

// ---------------------------------------------------------------------------
// MLP

MlpParams make_mlp(const std::vector<Eigen::Index>& dims, Rng& rng)
{
    if (dims.size() < 2)
        throw std::invalid_argument("make_mlp: need at least input and output widths");
    MlpParams mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const Eigen::Index in = dims[i];
        const Eigen::Index out = dims[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        Layer<Mat> layer;
        layer.weight.resize(in, out);
        for (Eigen::Index j = 0; j < layer.weight.size(); ++j)
            layer.weight.data()[j] = (2.0 * rng.uniform() - 1.0) * limit;
        layer.bias = Mat::Zero(1, out);
        layer.act = (i + 2 == dims.size()) ? Activation::Linear : Activation::Elu;
        mlp.push_back(std::move(layer));
    }
    return mlp;
}

void validate_mlp(const MlpParams& mlp)
{
    if (mlp.empty())
        throw std::invalid_argument("mlp has no layers");
    for (std::size_t i = 0; i < mlp.size(); ++i) {
        const auto& l = mlp[i];
        if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols())
            throw std::invalid_argument("mlp layer " + std::to_string(i) + ": bias shape does not match weight");
        if (i > 0 && mlp[i - 1].weight.cols() != l.weight.rows())
            throw std::invalid_argument("mlp layer " + std::to_string(i) + ": widths do not chain");
    }
    if (mlp.back().act != Activation::Linear)
        throw std::invalid_argument("mlp: final layer must be linear");
}

Eigen::Index mlp_input_width(const MlpParams& mlp) { return mlp.front().weight.rows(); }
Eigen::Index mlp_output_width(const MlpParams& mlp) { return mlp.back().weight.cols(); }

Mlp<Var> bind_mlp(Tape& tape, const MlpParams& mlp)
{
    Mlp<Var> out;
    out.reserve(mlp.size());
    for (const auto& l : mlp)
        out.push_back({tape.parameter(l.weight), tape.parameter(l.bias), l.act});
    return out;
}

// ---------------------------------------------------------------------------
// Construction

void MultimodalPolicy::validate() const
{
    validate_mlp(f_b);
    validate_mlp(f_a);
    if (n_factors < 1 || n_classes < 2)
        throw std::invalid_argument("multimodal policy: need N >= 1 factors and M >= 2 classes");
    if (mlp_output_width(f_b) != n_factors * n_classes)
        throw std::invalid_argument("multimodal policy: f_b output width must be N*M");
    if (mlp_input_width(f_a) != n_factors * n_classes)
        throw std::invalid_argument("multimodal policy: f_a input width must be N*M");
    if (mlp_output_width(f_a) != 2 * action_dim)
        throw std::invalid_argument("multimodal policy: f_a output width must be 2k");
    gumbel.validate();
}

void UnimodalPolicy::validate() const
{
    validate_mlp(f);
    if (f.size() != 4)
        throw std::invalid_argument("unimodal policy: expected three hidden layers");
    if (mlp_output_width(f) != 2 * action_dim)
        throw std::invalid_argument("unimodal policy: output width must be 2k");
}

MultimodalPolicy make_multimodal_policy(const PolicyDims& d, ModeMethod method, const GumbelConfig& gumbel, Rng& rng)
{
    MultimodalPolicy pol;
    const Eigen::Index nm = d.n_factors * d.n_classes;
    pol.f_b = make_mlp({d.state_dim, d.hidden, d.hidden, nm}, rng);
    pol.f_a = make_mlp({nm, d.hidden, d.hidden, 2 * d.action_dim}, rng);
    pol.n_factors = d.n_factors;
    pol.n_classes = d.n_classes;
    pol.action_dim = d.action_dim;
    pol.gumbel = gumbel;
    pol.method = method;
    pol.validate();
    return pol;
}

UnimodalPolicy make_unimodal_policy(const PolicyDims& d, Rng& rng)
{
    UnimodalPolicy pol;
    pol.f = make_mlp({d.state_dim, d.hidden, d.hidden, d.hidden, 2 * d.action_dim}, rng);
    pol.action_dim = d.action_dim;
    pol.validate();
    return pol;
}

BoundMultimodal bind_policy(Tape& tape, const MultimodalPolicy& pol)
{
    return {&pol, bind_mlp(tape, pol.f_b), bind_mlp(tape, pol.f_a)};
}

BoundUnimodal bind_policy(Tape& tape, const UnimodalPolicy& pol) { return {&pol, bind_mlp(tape, pol.f)}; }

BoundPolicy bind_policy(Tape& tape, const Policy& pol)
{
    return std::visit([&](const auto& p) -> BoundPolicy { return bind_policy(tape, p); }, pol);
}

namespace {

void append_mlp(std::vector<NamedTensor>& out, const std::string& prefix, MlpParams& mlp)
{
    for (std::size_t i = 0; i < mlp.size(); ++i) {
        out.push_back({prefix + "." + std::to_string(i) + ".weight", &mlp[i].weight});
        out.push_back({prefix + "." + std::to_string(i) + ".bias", &mlp[i].bias});
    }
}

} // namespace

std::vector<NamedTensor> named_parameters(Policy& pol)
{
    std::vector<NamedTensor> out;
    if (auto* m = std::get_if<MultimodalPolicy>(&pol)) {
        append_mlp(out, "policy.f_b", m->f_b);
        append_mlp(out, "policy.f_a", m->f_a);
    } else {
        append_mlp(out, "policy.f", std::get<UnimodalPolicy>(pol).f);
    }
    return out;
}

std::vector<Var> parameter_vars(const Mlp<Var>& bound)
{
    std::vector<Var> out;
    for (const auto& l : bound) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

std::vector<Var> parameter_vars(const BoundPolicy& bound)
{
    if (const auto* m = std::get_if<BoundMultimodal>(&bound)) {
        auto out = parameter_vars(m->f_b);
        auto fa = parameter_vars(m->f_a);
        out.insert(out.end(), fa.begin(), fa.end());
        return out;
    }
    return parameter_vars(std::get<BoundUnimodal>(bound).f);
}

// ---------------------------------------------------------------------------
// Mode indices

bool mode_space_fits(Eigen::Index n_factors, Eigen::Index n_classes)
{
    constexpr std::int64_t limit = std::int64_t{1} << 62;
    std::int64_t c = 1;
    for (Eigen::Index i = 0; i < n_factors; ++i) {
        if (c > limit / n_classes)
            return false;
        c *= n_classes;
    }
    return true;
}

std::int64_t mode_count(Eigen::Index n_factors, Eigen::Index n_classes)
{
    if (!mode_space_fits(n_factors, n_classes))
        throw std::overflow_error("mode space M^N does not fit a 64-bit index");
    std::int64_t c = 1;
    for (Eigen::Index i = 0; i < n_factors; ++i)
        c *= n_classes;
    return c;
}

std::int64_t encode_mode(std::span<const Eigen::Index> argmaxes, Eigen::Index n_classes)
{
    std::int64_t idx = 0;
    for (auto a : argmaxes) {
        if (a < 0 || a >= n_classes)
            throw std::out_of_range("encode_mode: class index out of range");
        idx = idx * n_classes + a;
    }
    return idx;
}

std::vector<Eigen::Index> decode_mode(std::int64_t index, Eigen::Index n_factors, Eigen::Index n_classes)
{
    if (index < 0 || index >= mode_count(n_factors, n_classes))
        throw std::out_of_range("decode_mode: index out of range");
    std::vector<Eigen::Index> out(static_cast<std::size_t>(n_factors));
    for (Eigen::Index i = n_factors; i-- > 0;) {
        out[static_cast<std::size_t>(i)] = index % n_classes;
        index /= n_classes;
    }
    return out;
}

std::vector<std::int64_t> mode_indices(const Mat& mode, Eigen::Index n_factors, Eigen::Index n_classes)
{
    const Mat blocks = reshape(mode, mode.rows() * n_factors, n_classes);
    const auto arg = argmax_rows(blocks);
    const bool exact = mode_space_fits(n_factors, n_classes);
    std::vector<std::int64_t> out(static_cast<std::size_t>(mode.rows()));
    for (Eigen::Index b = 0; b < mode.rows(); ++b) {
        auto row = std::span(arg).subspan(static_cast<std::size_t>(b * n_factors), static_cast<std::size_t>(n_factors));
        if (exact) {
            out[static_cast<std::size_t>(b)] = encode_mode(row, n_classes);
            continue;
        }
        // Too many modes for an exact index (e.g. 16x16): use a stable hash.
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (auto a : row) {
            h ^= static_cast<std::uint64_t>(a);
            h *= 0x100000001b3ULL;
        }
        out[static_cast<std::size_t>(b)] = static_cast<std::int64_t>(h >> 1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Acting

namespace {

void check_state_width(const MlpParams& mlp, Eigen::Index cols)
{
    if (cols != mlp_input_width(mlp))
        throw std::invalid_argument("state width " + std::to_string(cols) + " does not match policy input " +
                                    std::to_string(mlp_input_width(mlp)));
}

ActionSample gaussian_head(Var head, Eigen::Index k, Rng& rng, const ActOptions& opts)
{
    auto parts = split_cols(head, {k, k});
    SquashedGaussianParams params = make_squashed_gaussian(parts[0], parts[1]);
    SquashedSample s = opts.zero_action_noise
                           ? squashed_gaussian_sample(params, Mat::Zero(head.rows(), k))
                           : squashed_gaussian_sample(params, rng);
    ActionSample out;
    out.action = s.action;
    out.pre_tanh = s.pre_tanh;
    out.mean = params.mean;
    out.log_std = params.log_std;
    return out;
}

ActionValue greedy_head(const Mat& head, Eigen::Index k)
{
    auto parts = split_cols(head, {k, k});
    ActionValue out;
    out.mean = parts[0];
    out.log_std = clamp(parts[1], kLogStdMin, kLogStdMax);
    out.pre_tanh = out.mean;
    out.action = tanh_op(clamp(out.mean, -kPreTanhLimit, kPreTanhLimit));
    return out;
}

} // namespace

Var mode_logits(const BoundMultimodal& pol, Var state)
{
    const auto& p = *pol.policy;
    check_state_width(p.f_b, state.cols());
    Var flat = mlp_forward(pol.f_b, state);
    return reshape(flat, state.rows() * p.n_factors, p.n_classes);
}

Mat mode_logits(const MultimodalPolicy& pol, const Mat& state)
{
    check_state_width(pol.f_b, state.cols());
    return reshape(mlp_forward(pol.f_b, state), state.rows() * pol.n_factors, pol.n_classes);
}

ActionSample act(const BoundMultimodal& pol, Var state, Rng& rng, const ActOptions& opts)
{
    const auto& p = *pol.policy;
    Tape& tape = *state.tape;
    const Eigen::Index batch = state.rows();
    const Eigen::Index width = p.n_factors * p.n_classes;

    Var mode;
    if (opts.fixed_mode) {
        if (opts.fixed_mode->rows() != batch || opts.fixed_mode->cols() != width)
            throw std::invalid_argument("act: fixed mode must be B x (N*M)");
        check_state_width(p.f_b, state.cols());
        mode = tape.constant(*opts.fixed_mode);
    } else {
        Var logits = mode_logits(pol, state);
        ModeSample sample = p.method == ModeMethod::STE ? ste_categorical(logits, rng)
                                                        : gumbel_softmax(logits, p.gumbel, rng);
        mode = reshape(sample.z, batch, width);
    }

    ActionSample out = gaussian_head(mlp_forward(pol.f_a, mode), p.action_dim, rng, opts);
    out.mode_index = mode_indices(mode.value(), p.n_factors, p.n_classes);
    out.mode = mode;
    return out;
}

ActionSample act_unimodal(const BoundUnimodal& pol, Var state, Rng& rng, const ActOptions& opts)
{
    check_state_width(pol.policy->f, state.cols());
    return gaussian_head(mlp_forward(pol.f, state), pol.policy->action_dim, rng, opts);
}

ActionSample act(const BoundPolicy& pol, Var state, Rng& rng, const ActOptions& opts)
{
    if (const auto* m = std::get_if<BoundMultimodal>(&pol))
        return act(*m, state, rng, opts);
    return act_unimodal(std::get<BoundUnimodal>(pol), state, rng, opts);
}

ActionSample act(const MultimodalPolicy& pol, const Mat& state, Rng& rng, Tape& tape, const ActOptions& opts)
{
    BoundMultimodal bound = bind_policy(tape, pol);
    return act(bound, tape.constant(state), rng, opts);
}

ActionValue act_deterministic(const MultimodalPolicy& pol, const Mat& state)
{
    const Eigen::Index batch = state.rows();
    const Mat probs = softmax_rows(mode_logits(pol, state));
    const Mat mode = reshape(one_hot_rows(argmax_rows(probs), pol.n_classes), batch, pol.n_factors * pol.n_classes);
    ActionValue out = greedy_head(mlp_forward(pol.f_a, mode), pol.action_dim);
    out.mode_index = mode_indices(mode, pol.n_factors, pol.n_classes);
    out.mode = mode;
    return out;
}

ActionValue act_deterministic(const UnimodalPolicy& pol, const Mat& state)
{
    check_state_width(pol.f, state.cols());
    return greedy_head(mlp_forward(pol.f, state), pol.action_dim);
}

ActionValue act_deterministic(const Policy& pol, const Mat& state)
{
    return std::visit([&](const auto& p) { return act_deterministic(p, state); }, pol);
}

ModeHistogram mode_usage_histogram(const MultimodalPolicy& pol, const Mat& states)
{
    if (states.rows() == 0)
        throw std::invalid_argument("mode_usage_histogram: no states");
    ModeHistogram h;
    for (auto idx : act_deterministic(pol, states).mode_index)
        ++h.counts[idx];
    h.distinct = static_cast<std::int64_t>(h.counts.size());
    h.total = states.rows();
    return h;
}

} // namespace catpol
