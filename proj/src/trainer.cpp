#include "catpol/trainer.hpp"

#include <chrono>
#include <cmath>

namespace catpol {

std::string to_string(PolicyMethod m)
{
    switch (m) {
    case PolicyMethod::STE: return "STE";
    case PolicyMethod::Gumbel: return "Gumbel";
    case PolicyMethod::Unimodal: return "Unimodal";
    }
    return "?";
}

PolicyMethod parse_policy_method(std::string_view name)
{
    if (name == "STE")
        return PolicyMethod::STE;
    if (name == "Gumbel")
        return PolicyMethod::Gumbel;
    if (name == "Unimodal")
        return PolicyMethod::Unimodal;
    throw std::invalid_argument("unknown policy method '" + std::string(name) + "'");
}

void TrainConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
    if (!(gamma >= 0.0 && gamma < 1.0))
        fail("gamma must be in [0, 1)");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        fail("lambda must be in [0, 1]");
    if (horizon < 1)
        fail("horizon must be >= 1");
    if (batch < 1)
        fail("batch must be >= 1");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0))
        fail("learning rates must be positive");
    if (updates < 0)
        fail("updates must be >= 0");
    if (eval_every < 1)
        fail("eval_every must be >= 1");
    if (eval_episodes < 1)
        fail("eval_episodes must be >= 1");
    if (n_factors < 1 || n_classes < 2)
        fail("need n_factors >= 1 and n_classes >= 2");
    if (hidden < 1)
        fail("hidden must be >= 1");
    if (!(temperature > 0.0))
        fail("temperature must be positive");
    if (!(grad_clip > 0.0))
        fail("grad_clip must be positive");
    if (!(fresh_start_fraction >= 0.0 && fresh_start_fraction <= 1.0))
        fail("fresh_start_fraction must be in [0, 1]");
    make_env(env);
}

ValueNet make_value_net(Eigen::Index state_dim, Eigen::Index hidden, Rng& rng)
{
    return make_mlp({state_dim, hidden, hidden, 1}, rng);
}

Policy make_policy(const TrainConfig& cfg, const EnvSpec& spec, Rng& rng)
{
    PolicyDims dims{spec.state_dim, spec.action_dim, cfg.n_factors, cfg.n_classes, cfg.hidden};
    if (cfg.method == PolicyMethod::Unimodal)
        return make_unimodal_policy(dims, rng);
    const ModeMethod mm = cfg.method == PolicyMethod::STE ? ModeMethod::STE : ModeMethod::Gumbel;
    return make_multimodal_policy(dims, mm, GumbelConfig{cfg.temperature, cfg.gumbel_hard}, rng);
}

// ---------------------------------------------------------------------------
// Optimisation

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr)
    , beta1_(beta1)
    , beta2_(beta2)
    , eps_(eps)
{
}

void Adam::step(const std::vector<Mat*>& params, const std::vector<Mat>& grads)
{
    if (params.size() != grads.size())
        throw std::invalid_argument("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
        for (const Mat* p : params) {
            m_.push_back(Mat::Zero(p->rows(), p->cols()));
            v_.push_back(Mat::Zero(p->rows(), p->cols()));
        }
    }
    if (m_.size() != params.size())
        throw std::invalid_argument("adam: parameter set changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat& p = *params[i];
        if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols())
            throw std::invalid_argument("adam: gradient shape mismatch");
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
        p.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

double clip_global_norm(std::vector<Mat>& grads, double max_norm)
{
    double sq = 0.0;
    for (const auto& g : grads)
        sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& g : grads)
            g *= f;
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Rollouts and losses

RolloutGraph rollout(const Policy& policy, const ValueNet& value, const Env& env, const Mat& starts,
                     const TrainConfig& cfg, Rng& rng, const ActOptions& opts)
{
    if (starts.cols() != env.spec.state_dim || starts.rows() < 1)
        throw std::invalid_argument("rollout: start states must be B x state_dim");
    RolloutGraph g;
    g.tape = std::make_unique<Tape>();
    Tape& tape = *g.tape;
    g.policy = bind_policy(tape, policy);
    g.value = bind_mlp(tape, value);

    RolloutBatch& b = g.batch;
    Var state = tape.constant(starts);
    b.states.push_back(state);
    b.values.push_back(mlp_forward(g.value, state));
    for (int t = 0; t < cfg.horizon; ++t) {
        try {
            ActionSample a = act(g.policy, state, rng, opts);
            Transition<Var> tr = step_diff(env, state, a.action);
            if (!all_finite(tr.next_state.value()) || !all_finite(tr.reward.value()))
                throw std::domain_error("non-finite transition");
            state = tr.next_state;
            b.actions.push_back(std::move(a));
            b.rewards.push_back(tr.reward);
            b.states.push_back(state);
            b.values.push_back(mlp_forward(g.value, state));
            if (!all_finite(b.values.back().value()))
                throw std::domain_error("non-finite value estimate");
        } catch (const std::exception& e) {
            throw RolloutError(e.what(), t);
        }
    }
    return g;
}

namespace {

Var sum_over_time(const std::vector<Var>& xs)
{
    Var acc = xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i)
        acc = add(acc, xs[i]);
    return acc;
}

std::vector<Mat> collect_grads(const std::vector<Var>& vars)
{
    std::vector<Mat> out;
    out.reserve(vars.size());
    for (const auto& v : vars)
        out.push_back(v.grad());
    return out;
}

void require_finite_loss(double loss, const char* which)
{
    if (!std::isfinite(loss))
        throw std::runtime_error(std::string(which) + " loss is not finite");
}

std::vector<Mat*> value_params(ValueNet& value)
{
    std::vector<Mat*> out;
    for (auto& l : value) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

} // namespace

Var actor_loss(const RolloutGraph& graph, const TrainConfig& cfg)
{
    const auto returns = lambda_returns(graph.batch.rewards, graph.batch.values, cfg.gamma, cfg.lambda);
    return scale(mean(sum_over_time(returns)), -1.0);
}

Var critic_loss(const RolloutGraph& graph, const TrainConfig& cfg)
{
    const auto returns = lambda_returns(graph.batch.rewards, graph.batch.values, cfg.gamma, cfg.lambda);
    std::vector<Var> residuals;
    for (std::size_t t = 0; t < returns.size(); ++t)
        residuals.push_back(sub(graph.batch.values[t], stop_gradient(returns[t])));
    return scale(mean(square(concat_cols(residuals))), 0.5);
}

double actor_update(Policy& policy, RolloutGraph& graph, const TrainConfig& cfg, Adam& adam)
{
    Var loss = actor_loss(graph, cfg);
    const double value = loss.value()(0, 0);
    require_finite_loss(value, "actor");
    graph.tape->zero_grads();
    graph.tape->backward(loss);

    std::vector<Mat> grads = collect_grads(parameter_vars(graph.policy));
    clip_global_norm(grads, cfg.grad_clip);
    std::vector<Mat*> params;
    for (auto& p : named_parameters(policy))
        params.push_back(p.value);
    adam.step(params, grads);
    return value;
}

double critic_update(ValueNet& value, RolloutGraph& graph, const TrainConfig& cfg, Adam& adam)
{
    Var loss = critic_loss(graph, cfg);
    const double v = loss.value()(0, 0);
    require_finite_loss(v, "critic");
    graph.tape->zero_grads();
    graph.tape->backward(loss);
    adam.step(value_params(value), collect_grads(parameter_vars(graph.value)));
    return v;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate(const Policy& policy, const Env& env, int episodes, Rng& rng, bool stochastic)
{
    if (episodes < 1)
        throw std::invalid_argument("evaluate: need at least one episode");
    const auto n = static_cast<Eigen::Index>(episodes);
    Mat state(n, env.spec.state_dim);
    for (Eigen::Index e = 0; e < n; ++e)
        state.row(e) = reset(env, rng).values;

    const auto* multimodal = std::get_if<MultimodalPolicy>(&policy);
    EvalReport report;
    if (multimodal)
        report.modes = ModeHistogram{};
    Eigen::VectorXd returns = Eigen::VectorXd::Zero(n);

    for (int t = 0; t < env.spec.episode_horizon; ++t) {
        ActionValue greedy = act_deterministic(policy, state);
        if (multimodal) {
            for (auto idx : greedy.mode_index)
                ++report.modes->counts[idx];
            report.modes->total += n;
        }
        Mat action;
        if (stochastic) {
            Tape tape;
            BoundPolicy bound = bind_policy(tape, policy);
            action = act(bound, tape.constant(state), rng).action.value();
        } else {
            action = std::move(greedy.action);
        }
        Transition<Mat> tr = step_values(env, state, action);
        returns += tr.reward.col(0);
        state = std::move(tr.next_state);
    }
    if (multimodal)
        report.modes->distinct = static_cast<std::int64_t>(report.modes->counts.size());

    report.returns.assign(returns.data(), returns.data() + n);
    report.return_mean = returns.mean();
    report.return_std = std::sqrt((returns.array() - report.return_mean).square().mean());
    report.final_states = std::move(state);
    return report;
}

GoalOutcome two_goal_outcomes(const Mat& final_states, double radius)
{
    GoalOutcome out;
    const double r2 = radius * radius;
    for (Eigen::Index e = 0; e < final_states.rows(); ++e) {
        const double x = final_states(e, 0);
        const double y = final_states(e, 1);
        if ((x - two_goal::kGoalX) * (x - two_goal::kGoalX) + y * y < r2)
            out.right += 1.0;
        else if ((x + two_goal::kGoalX) * (x + two_goal::kGoalX) + y * y < r2)
            out.left += 1.0;
    }
    const auto n = static_cast<double>(final_states.rows());
    out.left /= n;
    out.right /= n;
    return out;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(const TrainConfig& cfg)
{
    cfg.validate();
    const Env env = make_env(cfg.env);
    Rng init_rng = Rng::stream(cfg.seed, "init");
    Rng env_rng = Rng::stream(cfg.seed, "env");
    Rng policy_rng = Rng::stream(cfg.seed, "policy-noise");

    TrainResult result{{}, make_policy(cfg, env.spec, init_rng), {}, policy_rng};
    result.value = make_value_net(env.spec.state_dim, cfg.hidden, init_rng);
    Adam actor_opt(cfg.actor_lr);
    Adam critic_opt(cfg.critic_lr);

    const auto clock_start = std::chrono::steady_clock::now();
    auto eval_row = [&](std::int64_t update, double actor_l, double critic_l) {
        Rng eval_rng = Rng::stream(cfg.seed, "eval");
        EvalReport rep = evaluate(result.policy, env, cfg.eval_episodes, eval_rng);
        MetricsRow row;
        row.update_step = update;
        row.env_steps = update * cfg.batch * cfg.horizon;
        row.eval_return_mean = rep.return_mean;
        row.eval_return_std = rep.return_std;
        row.actor_loss = actor_l;
        row.critic_loss = critic_l;
        row.distinct_modes_used = rep.modes ? rep.modes->distinct : 0;
        if (cfg.record_wall_time)
            row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - clock_start)
                              .count();
        result.record.push_back(row);
    };

    eval_row(0, 0.0, 0.0);

    const auto batch = static_cast<Eigen::Index>(cfg.batch);
    const auto fresh = static_cast<Eigen::Index>(std::ceil(cfg.fresh_start_fraction * static_cast<double>(batch)));
    // Mid-episode states visited by the previous rollout, with their episode step.
    Mat retained;
    std::vector<int> retained_steps;
    std::vector<int> start_steps(static_cast<std::size_t>(batch), 0);
    for (int u = 1; u <= cfg.updates; ++u) {
        Mat starts(batch, env.spec.state_dim);
        for (Eigen::Index i = 0; i < batch; ++i) {
            auto& step = start_steps[static_cast<std::size_t>(i)];
            if (retained.rows() == 0 || i < fresh) {
                starts.row(i) = reset(env, env_rng).values;
                step = 0;
            } else {
                const auto pick = static_cast<Eigen::Index>(env_rng() % static_cast<std::uint64_t>(retained.rows()));
                starts.row(i) = retained.row(pick);
                step = retained_steps[static_cast<std::size_t>(pick)];
            }
        }

        RolloutGraph graph = rollout(result.policy, result.value, env, starts, cfg, policy_rng);
        const double c_loss = critic_update(result.value, graph, cfg, critic_opt);
        const double a_loss = actor_update(result.policy, graph, cfg, actor_opt);

        std::vector<Eigen::Index> keep_t, keep_b;
        retained_steps.clear();
        for (int t = 1; t <= cfg.horizon; ++t)
            for (Eigen::Index i = 0; i < batch; ++i) {
                const int step = start_steps[static_cast<std::size_t>(i)] + t;
                if (step < env.spec.episode_horizon) {
                    keep_t.push_back(t);
                    keep_b.push_back(i);
                    retained_steps.push_back(step);
                }
            }
        retained.resize(static_cast<Eigen::Index>(keep_t.size()), env.spec.state_dim);
        for (std::size_t k = 0; k < keep_t.size(); ++k)
            retained.row(static_cast<Eigen::Index>(k)) =
                graph.batch.states[static_cast<std::size_t>(keep_t[k])].value().row(keep_b[k]);

        if (u % cfg.eval_every == 0 || u == cfg.updates)
            eval_row(u, a_loss, c_loss);
    }
    result.rng = policy_rng;
    return result;
}

} // namespace catpol
