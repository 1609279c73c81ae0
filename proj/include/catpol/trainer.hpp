#pragma once

#include "catpol/envs.hpp"
#include "catpol/gradcore.hpp"
#include "catpol/policy.hpp"
#include "catpol/rng.hpp"

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace catpol {

enum class PolicyMethod { STE, Gumbel, Unimodal };

std::string to_string(PolicyMethod m);
PolicyMethod parse_policy_method(std::string_view name);

struct TrainConfig {
    std::string env = "two_goal";
    PolicyMethod method = PolicyMethod::STE;
    double gamma = 0.99;
    double lambda = 0.95; // lambda-return weighting, not the Gumbel temperature
    int horizon = 16;
    int batch = 32;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    int updates = 1000;
    int eval_every = 100;
    int eval_episodes = 10;
    std::uint64_t seed = 0;
    Eigen::Index n_factors = 4;
    Eigen::Index n_classes = 4;
    Eigen::Index hidden = 64;
    double temperature = 2.0;
    bool gumbel_hard = true;
    double grad_clip = 100.0;
    double fresh_start_fraction = 0.5;
    bool record_wall_time = false;

    void validate() const;
};

/// state_dim -> h -> h -> 1
using ValueNet = MlpParams;

ValueNet make_value_net(Eigen::Index state_dim, Eigen::Index hidden, Rng& rng);
Policy make_policy(const TrainConfig& cfg, const EnvSpec& spec, Rng& rng);

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads);
    std::int64_t steps() const { return t_; }
    const std::vector<Mat>& first_moments() const { return m_; }
    const std::vector<Mat>& second_moments() const { return v_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Mat> m_;
    std::vector<Mat> v_;
};

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::vector<Mat>& grads, double max_norm);

/// One H-step differentiable rollout. states/values have H+1 entries (the last
/// is the bootstrap); actions/rewards have H.
struct RolloutBatch {
    std::vector<Var> states;
    std::vector<ActionSample> actions;
    std::vector<Var> rewards;
    std::vector<Var> values;
};

/// Tape plus the parameter nodes a rollout was built against.
struct RolloutGraph {
    std::unique_ptr<Tape> tape;
    BoundPolicy policy;
    Mlp<Var> value;
    RolloutBatch batch;
};

class RolloutError : public std::runtime_error {
public:
    RolloutError(const std::string& what, int step)
        : std::runtime_error(what + " (rollout step " + std::to_string(step) + ")")
        , step_(step)
    {
    }
    int step() const { return step_; }

private:
    int step_;
};

RolloutGraph rollout(const Policy& policy, const ValueNet& value, const Env& env, const Mat& starts,
                     const TrainConfig& cfg, Rng& rng, const ActOptions& opts = {});

/// V(t) = r_t + gamma * ((1 - lambda) v_{t+1} + lambda V(t+1)), V(H) = v_H.
template <class X>
std::vector<X> lambda_returns(const std::vector<X>& rewards, const std::vector<X>& values, double gamma, double lambda)
{
    if (values.size() != rewards.size() + 1)
        throw std::invalid_argument("lambda_returns: need H rewards and H+1 values");
    const std::size_t h = rewards.size();
    std::vector<X> out(h);
    X next = values[h];
    for (std::size_t t = h; t-- > 0;) {
        X mix = add(scale(values[t + 1], 1.0 - lambda), scale(next, lambda));
        out[t] = add(rewards[t], scale(mix, gamma));
        next = out[t];
    }
    return out;
}

/// -mean_b sum_t V(t); backward and an Adam step on the policy only.
double actor_update(Policy& policy, RolloutGraph& graph, const TrainConfig& cfg, Adam& adam);
/// mean 0.5 (v(s_t) - stop_gradient(V(t)))^2; Adam step on the value net only.
double critic_update(ValueNet& value, RolloutGraph& graph, const TrainConfig& cfg, Adam& adam);

Var actor_loss(const RolloutGraph& graph, const TrainConfig& cfg);
Var critic_loss(const RolloutGraph& graph, const TrainConfig& cfg);

struct EvalReport {
    double return_mean = 0.0;
    double return_std = 0.0;
    std::vector<double> returns;
    Mat final_states;              // episodes x state_dim
    std::optional<ModeHistogram> modes; // multimodal policies only
};

/// Runs `episodes` full episodes in lockstep. Deterministic evaluation uses
/// act_deterministic; `stochastic` samples with act instead.
EvalReport evaluate(const Policy& policy, const Env& env, int episodes, Rng& rng, bool stochastic = false);

struct GoalOutcome {
    double left = 0.0;  // fraction ending within `radius` of (-1, 0)
    double right = 0.0; // fraction ending within `radius` of (+1, 0)
};

GoalOutcome two_goal_outcomes(const Mat& final_states, double radius = 0.3);

struct MetricsRow {
    std::int64_t update_step = 0;
    std::int64_t env_steps = 0;
    double eval_return_mean = 0.0;
    double eval_return_std = 0.0;
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    std::int64_t distinct_modes_used = 0;
    double wall_ms = 0.0;
};

using TrainingRecord = std::vector<MetricsRow>;

struct TrainResult {
    TrainingRecord record;
    Policy policy;
    ValueNet value;
    Rng rng; // policy-noise stream after training
};

TrainResult train(const TrainConfig& cfg);

} // namespace catpol
