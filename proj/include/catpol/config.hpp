#pragma once

// Flat "key = value" configuration files with '#' comments.

#include "catpol/distributions.hpp"
#include "catpol/estlab.hpp"
#include "catpol/trainer.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace catpol {

/// Malformed or semantically invalid configuration (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KeyValues {
public:
    static KeyValues parse(std::string_view text);
    static KeyValues load(const std::string& path);

    bool has(const std::string& key) const { return values_.contains(key); }
    std::string get(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

    /// Throws ConfigError naming the first key that was never read.
    void reject_unused() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

struct RunConfig {
    TrainConfig train;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::string output_dir = "out";
    int workers = 1;
};

struct SweepCell {
    Eigen::Index n_factors = 4;
    Eigen::Index n_classes = 4;

    std::string label() const; // "NxM"
};

struct SweepConfig {
    RunConfig run;
    std::vector<SweepCell> cells;
};

struct EstlabConfig {
    std::vector<SampleMethod> methods{SampleMethod::STE, SampleMethod::GumbelSoft};
    std::vector<double> temperatures{0.5, 2.0};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    Eigen::Index n_factors = 2;
    Eigen::Index n_classes = 3;
    ObjectiveKind objective = ObjectiveKind::Linear;
    std::int64_t n_samples = 100000;
    std::string output_dir = "out";
};

/// Reads the train-config keys shared by every command; leaves other keys unread.
TrainConfig read_train_config(const KeyValues& kv);
RunConfig parse_run_config(const KeyValues& kv);
SweepConfig parse_sweep_config(const KeyValues& kv);
EstlabConfig parse_estlab_config(const KeyValues& kv);
SweepCell parse_cell(std::string_view label);

/// Canonical config text for a single training run (used as checkpoint echo).
std::string format_train_config(const TrainConfig& cfg);
TrainConfig parse_train_config_text(std::string_view text);

/// Shortest decimal text that round-trips to the same double.
std::string format_number(double v);

/// CATPOL_OUT overrides the configured directory when set and non-empty.
std::string resolve_output_dir(const std::string& configured);

} // namespace catpol
