#pragma once

#include "catpol/distributions.hpp"
#include "catpol/gradcore.hpp"
#include "catpol/rng.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace catpol {

enum class Activation { Elu, Linear };

template <class X>
struct Layer {
    X weight; // in x out
    X bias;   // 1 x out
    Activation act = Activation::Linear;
};

/// Dense MLP; hidden layers use ELU (alpha = 1), the last layer is linear.
template <class X>
using Mlp = std::vector<Layer<X>>;

using MlpParams = Mlp<Mat>;

/// Glorot-uniform weights, zero biases. `dims` = {in, hidden..., out}.
MlpParams make_mlp(const std::vector<Eigen::Index>& dims, Rng& rng);
void validate_mlp(const MlpParams& mlp);
Eigen::Index mlp_input_width(const MlpParams& mlp);
Eigen::Index mlp_output_width(const MlpParams& mlp);
Mlp<Var> bind_mlp(Tape& tape, const MlpParams& mlp);

template <class X>
X mlp_forward(const Mlp<X>& layers, X x)
{
    for (const auto& layer : layers) {
        x = add_bias(matmul(x, layer.weight), layer.bias);
        if (layer.act == Activation::Elu)
            x = elu(x);
    }
    return x;
}

enum class ModeMethod { STE, Gumbel };

struct PolicyDims {
    Eigen::Index state_dim = 0;
    Eigen::Index action_dim = 0;
    Eigen::Index n_factors = 4;
    Eigen::Index n_classes = 4;
    Eigen::Index hidden = 64;
};

/// Two-stage policy: state -> f_b -> N x M mode sample -> f_a -> squashed
/// Gaussian. f_a sees only the flattened mode (factor 0's one-hot first).
struct MultimodalPolicy {
    MlpParams f_b; // state_dim -> h -> h -> N*M
    MlpParams f_a; // N*M -> h -> h -> 2k
    Eigen::Index n_factors = 4;
    Eigen::Index n_classes = 4;
    Eigen::Index action_dim = 1;
    GumbelConfig gumbel;
    ModeMethod method = ModeMethod::STE;

    void validate() const;
};

/// Gaussian baseline: state -> h -> h -> h -> 2k.
struct UnimodalPolicy {
    MlpParams f;
    Eigen::Index action_dim = 1;

    void validate() const;
};

using Policy = std::variant<MultimodalPolicy, UnimodalPolicy>;

MultimodalPolicy make_multimodal_policy(const PolicyDims& dims, ModeMethod method, const GumbelConfig& gumbel,
                                        Rng& rng);
UnimodalPolicy make_unimodal_policy(const PolicyDims& dims, Rng& rng);

struct BoundMultimodal {
    const MultimodalPolicy* policy = nullptr;
    Mlp<Var> f_b;
    Mlp<Var> f_a;
};

struct BoundUnimodal {
    const UnimodalPolicy* policy = nullptr;
    Mlp<Var> f;
};

using BoundPolicy = std::variant<BoundMultimodal, BoundUnimodal>;

BoundMultimodal bind_policy(Tape& tape, const MultimodalPolicy& pol);
BoundUnimodal bind_policy(Tape& tape, const UnimodalPolicy& pol);
BoundPolicy bind_policy(Tape& tape, const Policy& pol);

struct NamedTensor {
    std::string name;
    Mat* value;
};

/// Parameters in a fixed order; `parameter_vars` returns the bound nodes in
/// the same order.
std::vector<NamedTensor> named_parameters(Policy& pol);
std::vector<Var> parameter_vars(const BoundPolicy& bound);
std::vector<Var> parameter_vars(const Mlp<Var>& bound);

/// One sampled (or greedy) action per batch row.
template <class X>
struct ActionSampleT {
    X action;   // B x k, strictly inside (-1, 1)
    X pre_tanh; // B x k
    X mean;     // B x k
    X log_std;  // B x k, clamped
    std::optional<X> mode;                // B x (N*M); empty for the baseline
    std::vector<std::int64_t> mode_index; // one mixed-radix index per row
};

using ActionSample = ActionSampleT<Var>;
using ActionValue = ActionSampleT<Mat>;

struct ActOptions {
    /// Forces the Gaussian noise to zero (action = tanh(mean)).
    bool zero_action_noise = false;
    /// Uses this B x (N*M) mode instead of sampling one.
    std::optional<Mat> fixed_mode;
};

/// (B*N) x M logits, one N x M block per state row.
Var mode_logits(const BoundMultimodal& pol, Var state);
Mat mode_logits(const MultimodalPolicy& pol, const Mat& state);

ActionSample act(const BoundMultimodal& pol, Var state, Rng& rng, const ActOptions& opts = {});
ActionSample act_unimodal(const BoundUnimodal& pol, Var state, Rng& rng, const ActOptions& opts = {});
ActionSample act(const BoundPolicy& pol, Var state, Rng& rng, const ActOptions& opts = {});
ActionSample act(const MultimodalPolicy& pol, const Mat& state, Rng& rng, Tape& tape, const ActOptions& opts = {});

/// Greedy action: per-factor argmax mode (lowest index on ties), action = tanh(mean).
ActionValue act_deterministic(const MultimodalPolicy& pol, const Mat& state);
ActionValue act_deterministic(const UnimodalPolicy& pol, const Mat& state);
ActionValue act_deterministic(const Policy& pol, const Mat& state);

/// Mixed-radix encoding, factor 0 most significant.
std::int64_t encode_mode(std::span<const Eigen::Index> argmaxes, Eigen::Index n_classes);
std::vector<Eigen::Index> decode_mode(std::int64_t index, Eigen::Index n_factors, Eigen::Index n_classes);
/// Mode index of every row of a B x (N*M) mode matrix. When M^N exceeds
/// 2^62 the index is a stable hash of the argmaxes instead.
std::vector<std::int64_t> mode_indices(const Mat& mode, Eigen::Index n_factors, Eigen::Index n_classes);
std::int64_t mode_count(Eigen::Index n_factors, Eigen::Index n_classes);
bool mode_space_fits(Eigen::Index n_factors, Eigen::Index n_classes);

struct ModeHistogram {
    std::map<std::int64_t, std::int64_t> counts;
    std::int64_t distinct = 0;
    std::int64_t total = 0;
};

ModeHistogram mode_usage_histogram(const MultimodalPolicy& pol, const Mat& states);

} // namespace catpol
