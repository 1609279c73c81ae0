#pragma once

// Experiment commands behind the `catpol` executable. Each returns the process
// exit code: 0 success, 1 runtime failure, 2 configuration or format error.

#include "catpol/checkpoint.hpp"
#include "catpol/config.hpp"
#include "catpol/trainer.hpp"

#include <iosfwd>
#include <string>

namespace catpol {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitFormat = 2;

inline constexpr const char* kMetricsHeader =
    "update_step,env_steps,eval_return_mean,eval_return_std,actor_loss,critic_loss,distinct_modes_used,wall_ms";
inline constexpr const char* kAggregateHeader = "update_step,env_steps,return_mean,return_std,n_seeds";
inline constexpr const char* kEstlabHeader = "method,temperature,seed,n_factors,n_classes,objective,n_samples,"
                                             "bias_norm,variance_trace,std_error_norm,exact_grad_norm,bias_kind";
inline constexpr const char* kSweepHeader = "cell,n_factors,n_classes,n_seeds,final_return_mean,final_return_std";
inline constexpr const char* kSweepRunsHeader = "cell,seed,final_return";

std::string metrics_csv(const TrainingRecord& record);

Checkpoint make_checkpoint(const TrainConfig& cfg, TrainResult& result);

struct RestoredRun {
    TrainConfig config;
    Policy policy;
    ValueNet value;
    Rng rng;
};

/// Rebuilds the networks described by the checkpoint's config echo and fills
/// them from the tensor table. Throws CheckpointError on any mismatch.
RestoredRun restore_checkpoint(const Checkpoint& ckpt);

/// Text report printed by `catpol eval`. Deterministic given its arguments.
std::string eval_report(const TrainConfig& cfg, const Policy& policy, const Rng& rng, int episodes, bool stochastic);

/// One row per (method, temperature, seed) grid cell, header included.
std::string estlab_csv(const EstlabConfig& cfg);

int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_eval(const std::string& checkpoint_path, int episodes, bool stochastic, std::ostream& out, std::ostream& err);
int cmd_estlab(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_sweep(const std::string& config_path, std::ostream& out, std::ostream& err);

} // namespace catpol
