#include "catpol/commands.hpp"

#include "catpol/estlab.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace catpol {

namespace fs = std::filesystem;

namespace {

std::vector<NamedTensor> value_tensors(ValueNet& value)
{
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < value.size(); ++i) {
        out.push_back({"value." + std::to_string(i) + ".weight", &value[i].weight});
        out.push_back({"value." + std::to_string(i) + ".bias", &value[i].bias});
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out)
        throw std::runtime_error("failed writing '" + path.string() + "'");
}

fs::path prepare_dir(const std::string& configured)
{
    fs::path dir = resolve_output_dir(configured);
    fs::create_directories(dir);
    return dir;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs)
{
    MeanStd r;
    if (xs.empty())
        return r;
    for (double x : xs)
        r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    for (double x : xs)
        r.std += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(r.std / static_cast<double>(xs.size()));
    return r;
}

std::string aggregate_csv(const std::vector<TrainingRecord>& records)
{
    std::ostringstream o;
    o << kAggregateHeader << "\n";
    std::map<std::int64_t, std::pair<std::int64_t, std::vector<double>>> by_step;
    for (const auto& rec : records)
        for (const auto& row : rec) {
            auto& slot = by_step[row.update_step];
            slot.first = row.env_steps;
            slot.second.push_back(row.eval_return_mean);
        }
    for (const auto& [step, slot] : by_step) {
        const MeanStd ms = mean_std(slot.second);
        o << step << "," << slot.first << "," << format_number(ms.mean) << "," << format_number(ms.std) << ","
          << slot.second.size() << "\n";
    }
    return o.str();
}

double final_return(const TrainingRecord& rec) { return rec.empty() ? 0.0 : rec.back().eval_return_mean; }

template <class Fn>
int guarded(std::ostream& err, Fn&& fn)
{
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "catpol: config error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const CheckpointError& e) {
        err << "catpol: checkpoint error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const std::exception& e) {
        err << "catpol: " << e.what() << "\n";
        return kExitRuntime;
    }
}

struct SeedRun {
    std::uint64_t seed = 0;
    TrainingRecord record;
};

std::vector<SeedRun> run_seeds(const RunConfig& run, const fs::path& dir, const std::string& prefix, std::ostream& out)
{
    const std::size_t n = run.seeds.size();
    std::vector<SeedRun> runs(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            TrainConfig cfg = run.train;
            cfg.seed = run.seeds[i];
            TrainResult result = train(cfg);
            const std::string tag = prefix + "seed" + std::to_string(cfg.seed);
            write_text(dir / ("metrics_" + tag + ".csv"), metrics_csv(result.record));
            save_checkpoint((dir / ("checkpoint_" + tag + ".bin")).string(), make_checkpoint(cfg, result));
            runs[i] = {cfg.seed, std::move(result.record)};
        }
    };
    // Runs share nothing; each output file has exactly one writer.
    std::vector<std::future<void>> pool;
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(run.workers), n);
    for (std::size_t t = 1; t < threads; ++t)
        pool.push_back(std::async(std::launch::async, worker));
    worker();
    for (auto& f : pool)
        f.get();

    for (const auto& r : runs)
        out << prefix << "seed" << r.seed << ": final eval return " << format_number(final_return(r.record)) << "\n";
    return runs;
}

} // namespace

std::string metrics_csv(const TrainingRecord& record)
{
    std::ostringstream o;
    o << kMetricsHeader << "\n";
    for (const auto& r : record)
        o << r.update_step << "," << r.env_steps << "," << format_number(r.eval_return_mean) << ","
          << format_number(r.eval_return_std) << "," << format_number(r.actor_loss) << ","
          << format_number(r.critic_loss) << "," << r.distinct_modes_used << "," << format_number(r.wall_ms) << "\n";
    return o.str();
}

Checkpoint make_checkpoint(const TrainConfig& cfg, TrainResult& result)
{
    Checkpoint ckpt;
    for (const auto& t : named_parameters(result.policy))
        ckpt.tensors.emplace_back(t.name, *t.value);
    for (const auto& t : value_tensors(result.value))
        ckpt.tensors.emplace_back(t.name, *t.value);
    ckpt.config = format_train_config(cfg);
    ckpt.rng_state = result.rng.state();
    return ckpt;
}

RestoredRun restore_checkpoint(const Checkpoint& ckpt)
{
    TrainConfig cfg;
    try {
        cfg = parse_train_config_text(ckpt.config);
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("embedded config: ") + e.what());
    }
    const Env env = make_env(cfg.env);
    Rng init = Rng::stream(cfg.seed, "init");
    RestoredRun run{cfg, make_policy(cfg, env.spec, init), make_value_net(env.spec.state_dim, cfg.hidden, init), Rng{}};

    std::size_t expected = 0;
    auto fill = [&](const std::vector<NamedTensor>& slots) {
        for (const auto& slot : slots) {
            const Mat& m = ckpt.tensor(slot.name);
            if (m.rows() != slot.value->rows() || m.cols() != slot.value->cols())
                throw CheckpointError("tensor '" + slot.name + "' has shape " + std::to_string(m.rows()) + "x" +
                                      std::to_string(m.cols()) + ", expected " + std::to_string(slot.value->rows()) +
                                      "x" + std::to_string(slot.value->cols()));
            *slot.value = m;
            ++expected;
        }
    };
    fill(named_parameters(run.policy));
    fill(value_tensors(run.value));
    if (expected != ckpt.tensors.size())
        throw CheckpointError("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, expected " +
                              std::to_string(expected));
    run.rng.set_state(ckpt.rng_state);
    return run;
}

std::string eval_report(const TrainConfig& cfg, const Policy& policy, const Rng& rng, int episodes, bool stochastic)
{
    if (episodes < 1)
        throw ConfigError("--episodes must be >= 1");
    const Env env = make_env(cfg.env);
    std::ostringstream o;
    o << "env: " << cfg.env << "\n"
      << "method: " << to_string(cfg.method) << "\n"
      << "episodes: " << episodes << "\n";

    Rng eval_rng = Rng::stream(cfg.seed, "eval");
    const EvalReport det = evaluate(policy, env, episodes, eval_rng, false);
    o << "deterministic return: " << format_number(det.return_mean) << " +- " << format_number(det.return_std) << "\n";
    if (det.modes) {
        o << "distinct modes: " << det.modes->distinct << " of " << det.modes->total << " decisions\n";
        for (const auto& [mode, count] : det.modes->counts)
            o << "  mode " << mode << ": " << count << "\n";
    }

    if (stochastic) {
        Rng sample_rng = rng;
        const EvalReport sto = evaluate(policy, env, episodes, sample_rng, true);
        o << "stochastic return: " << format_number(sto.return_mean) << " +- " << format_number(sto.return_std)
          << "\n";
        if (env.kind == EnvKind::TwoGoal) {
            const GoalOutcome g = two_goal_outcomes(sto.final_states);
            o << "goal left: " << format_number(g.left) << "\n"
              << "goal right: " << format_number(g.right) << "\n"
              << "goal none: " << format_number(1.0 - g.left - g.right) << "\n";
        }
    }
    return o.str();
}

std::string estlab_csv(const EstlabConfig& cfg)
{
    std::ostringstream o;
    o << kEstlabHeader << "\n";
    for (std::uint64_t seed : cfg.seeds) {
        Rng instance = Rng::stream(seed, "estlab-instance");
        Mat logits(cfg.n_factors, cfg.n_classes);
        for (Eigen::Index i = 0; i < logits.size(); ++i)
            logits.data()[i] = instance.normal();
        const ObjectiveSpec obj = random_objective(cfg.objective, cfg.n_factors, cfg.n_classes, instance);
        const double exact_norm = exact_categorical_grad(logits, obj).norm();
        for (SampleMethod method : cfg.methods) {
            for (double temperature : cfg.temperatures) {
                Rng rng = Rng::stream(seed, "estlab");
                const EstimatorReport r = estimator_stats(method, logits, obj, temperature, cfg.n_samples, rng);
                o << to_string(method) << "," << format_number(temperature) << "," << seed << "," << cfg.n_factors
                  << "," << cfg.n_classes << "," << to_string(cfg.objective) << "," << cfg.n_samples << ","
                  << format_number(r.bias_norm) << "," << format_number(r.variance_trace) << ","
                  << format_number(r.std_error_norm) << "," << format_number(exact_norm) << "," << r.bias_kind
                  << "\n";
            }
        }
    }
    return o.str();
}

int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const KeyValues kv = KeyValues::load(config_path);
        const RunConfig run = parse_run_config(kv);
        kv.reject_unused();
        const fs::path dir = prepare_dir(run.output_dir);

        const auto runs = run_seeds(run, dir, "", out);
        std::vector<TrainingRecord> records;
        std::vector<double> finals;
        nlohmann::ordered_json summary;
        summary["env"] = run.train.env;
        summary["method"] = to_string(run.train.method);
        summary["updates"] = run.train.updates;
        for (const auto& r : runs) {
            records.push_back(r.record);
            finals.push_back(final_return(r.record));
            summary["final_return"][std::to_string(r.seed)] = final_return(r.record);
        }
        const MeanStd ms = mean_std(finals);
        summary["final_return_mean"] = ms.mean;
        summary["final_return_std"] = ms.std;
        write_text(dir / "aggregate.csv", aggregate_csv(records));
        write_text(dir / "summary.json", summary.dump(2) + "\n");
        out << "final eval return over " << runs.size() << " seeds: " << format_number(ms.mean) << " +- "
            << format_number(ms.std) << "\n"
            << "outputs written to " << dir.string() << "\n";
        return kExitOk;
    });
}

int cmd_eval(const std::string& checkpoint_path, int episodes, bool stochastic, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const RestoredRun run = restore_checkpoint(load_checkpoint(checkpoint_path));
        out << eval_report(run.config, run.policy, run.rng, episodes, stochastic);
        return kExitOk;
    });
}

int cmd_estlab(const std::string& config_path, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const KeyValues kv = KeyValues::load(config_path);
        const EstlabConfig cfg = parse_estlab_config(kv);
        kv.reject_unused();
        const fs::path dir = prepare_dir(cfg.output_dir);
        const std::string csv = estlab_csv(cfg);
        write_text(dir / "estlab.csv", csv);
        out << csv;
        return kExitOk;
    });
}

int cmd_sweep(const std::string& config_path, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const KeyValues kv = KeyValues::load(config_path);
        const SweepConfig sweep = parse_sweep_config(kv);
        kv.reject_unused();
        if (sweep.run.train.method == PolicyMethod::Unimodal)
            throw ConfigError("sweep requires a multimodal method (STE or Gumbel)");
        const fs::path dir = prepare_dir(sweep.run.output_dir);

        std::ostringstream table;
        std::ostringstream runs_csv;
        table << kSweepHeader << "\n";
        runs_csv << kSweepRunsHeader << "\n";
        for (const SweepCell& cell : sweep.cells) {
            RunConfig run = sweep.run;
            run.train.n_factors = cell.n_factors;
            run.train.n_classes = cell.n_classes;
            try {
                run.train.validate();
            } catch (const std::invalid_argument& e) {
                throw ConfigError("sweep cell " + cell.label() + ": " + e.what());
            }
            const auto runs = run_seeds(run, dir, cell.label() + "_", out);
            std::vector<double> finals;
            for (const auto& r : runs) {
                finals.push_back(final_return(r.record));
                runs_csv << cell.label() << "," << r.seed << "," << format_number(finals.back()) << "\n";
            }
            const MeanStd ms = mean_std(finals);
            table << cell.label() << "," << cell.n_factors << "," << cell.n_classes << "," << finals.size() << ","
                  << format_number(ms.mean) << "," << format_number(ms.std) << "\n";
        }
        write_text(dir / "sweep.csv", table.str());
        write_text(dir / "sweep_runs.csv", runs_csv.str());
        out << table.str();
        return kExitOk;
    });
}

} // namespace catpol
