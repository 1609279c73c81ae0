#include "catpol/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace catpol {

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text)
{
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
    return value;
}

std::vector<std::string> split_list(std::string_view text)
{
    std::vector<std::string> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        auto item = trim(text.substr(0, comma));
        if (!item.empty())
            out.emplace_back(item);
        if (comma == std::string_view::npos)
            break;
        text.remove_prefix(comma + 1);
    }
    return out;
}

std::vector<std::uint64_t> parse_seeds(const KeyValues& kv, const std::vector<std::uint64_t>& fallback)
{
    if (!kv.has("seeds"))
        return fallback;
    std::vector<std::uint64_t> seeds;
    for (const auto& s : kv.get_list("seeds", {}))
        seeds.push_back(parse_number<std::uint64_t>("seeds", s));
    if (seeds.empty())
        throw ConfigError("config key 'seeds': at least one seed is required");
    return seeds;
}

} // namespace

KeyValues KeyValues::parse(std::string_view text)
{
    KeyValues kv;
    int line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (!kv.values_.emplace(key, value).second)
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const
{
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string KeyValues::require(const std::string& key) const
{
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end())
        throw ConfigError("missing required config key '" + key + "'");
    return it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const
{
    return has(key) ? parse_number<double>(key, get(key, "")) : (used_.insert(key), fallback);
}

std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) const
{
    return has(key) ? parse_number<std::int64_t>(key, get(key, "")) : (used_.insert(key), fallback);
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const
{
    if (!has(key)) {
        used_.insert(key);
        return fallback;
    }
    const std::string v = get(key, "");
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> KeyValues::get_list(const std::string& key, const std::vector<std::string>& fallback) const
{
    if (!has(key)) {
        used_.insert(key);
        return fallback;
    }
    return split_list(get(key, ""));
}

void KeyValues::reject_unused() const
{
    for (const auto& [key, value] : values_)
        if (!used_.contains(key))
            throw ConfigError("unknown config key '" + key + "'");
}

std::string SweepCell::label() const { return std::to_string(n_factors) + "x" + std::to_string(n_classes); }

SweepCell parse_cell(std::string_view label)
{
    const auto x = label.find('x');
    if (x == std::string_view::npos)
        throw ConfigError("sweep cell '" + std::string(label) + "': expected NxM");
    SweepCell c;
    c.n_factors = parse_number<Eigen::Index>("cells", std::string(label.substr(0, x)));
    c.n_classes = parse_number<Eigen::Index>("cells", std::string(label.substr(x + 1)));
    if (c.n_factors < 1 || c.n_classes < 2)
        throw ConfigError("sweep cell '" + std::string(label) + "': need N >= 1 and M >= 2");
    return c;
}

TrainConfig read_train_config(const KeyValues& kv)
{
    TrainConfig c;
    try {
        c.env = kv.get("env", c.env);
        c.method = parse_policy_method(kv.get("method", to_string(c.method)));
        c.gamma = kv.get_double("gamma", c.gamma);
        c.lambda = kv.get_double("lambda", c.lambda);
        c.horizon = static_cast<int>(kv.get_int("horizon", c.horizon));
        c.batch = static_cast<int>(kv.get_int("batch", c.batch));
        c.actor_lr = kv.get_double("actor_lr", c.actor_lr);
        c.critic_lr = kv.get_double("critic_lr", c.critic_lr);
        c.updates = static_cast<int>(kv.get_int("updates", c.updates));
        c.eval_every = static_cast<int>(kv.get_int("eval_every", c.eval_every));
        c.eval_episodes = static_cast<int>(kv.get_int("eval_episodes", c.eval_episodes));
        c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
        c.n_factors = kv.get_int("n_factors", c.n_factors);
        c.n_classes = kv.get_int("n_classes", c.n_classes);
        c.hidden = kv.get_int("hidden", c.hidden);
        c.temperature = kv.get_double("temperature", c.temperature);
        c.gumbel_hard = kv.get_bool("gumbel_hard", c.gumbel_hard);
        c.grad_clip = kv.get_double("grad_clip", c.grad_clip);
        c.fresh_start_fraction = kv.get_double("fresh_start_fraction", c.fresh_start_fraction);
        c.record_wall_time = kv.get_bool("record_wall_time", c.record_wall_time);
        c.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

RunConfig parse_run_config(const KeyValues& kv)
{
    RunConfig r;
    r.train = read_train_config(kv);
    r.seeds = parse_seeds(kv, r.seeds);
    r.output_dir = kv.get("output_dir", r.output_dir);
    r.workers = static_cast<int>(kv.get_int("workers", r.workers));
    if (r.workers < 1)
        throw ConfigError("config key 'workers' must be >= 1");
    return r;
}

SweepConfig parse_sweep_config(const KeyValues& kv)
{
    SweepConfig s;
    for (const auto& label : kv.get_list("cells", {"4x4", "8x8", "1x64"}))
        s.cells.push_back(parse_cell(label));
    if (s.cells.empty())
        throw ConfigError("config key 'cells': at least one cell is required");
    s.run = parse_run_config(kv);
    return s;
}

EstlabConfig parse_estlab_config(const KeyValues& kv)
{
    EstlabConfig e;
    try {
        if (kv.has("methods")) {
            e.methods.clear();
            for (const auto& m : kv.get_list("methods", {}))
                e.methods.push_back(parse_sample_method(m));
        } else {
            kv.get("methods", "");
        }
        if (kv.has("temperatures")) {
            e.temperatures.clear();
            for (const auto& t : kv.get_list("temperatures", {}))
                e.temperatures.push_back(parse_number<double>("temperatures", t));
        } else {
            kv.get("temperatures", "");
        }
        e.seeds = parse_seeds(kv, e.seeds);
        e.n_factors = kv.get_int("n_factors", e.n_factors);
        e.n_classes = kv.get_int("n_classes", e.n_classes);
        e.objective = parse_objective_kind(kv.get("objective", to_string(e.objective)));
        e.n_samples = kv.get_int("n_samples", e.n_samples);
        e.output_dir = kv.get("output_dir", e.output_dir);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
    if (e.methods.empty() || e.temperatures.empty())
        throw ConfigError("estlab config: methods and temperatures must be non-empty");
    for (double t : e.temperatures)
        if (!(t > 0.0))
            throw ConfigError("estlab config: temperatures must be positive");
    if (e.n_samples < 1000)
        throw ConfigError("estlab config: n_samples must be >= 1000");
    if (e.n_factors < 1 || e.n_factors > 4 || e.n_classes < 2 || e.n_classes > 6 ||
        mode_count(e.n_factors, e.n_classes) > kMaxEnumeratedModes)
        throw ConfigError("estlab config: mode space must satisfy N <= 4, M <= 6, M^N <= 1296");
    return e;
}

std::string format_train_config(const TrainConfig& c)
{
    std::ostringstream o;
    o << "env = " << c.env << "\n"
      << "method = " << to_string(c.method) << "\n"
      << "gamma = " << format_number(c.gamma) << "\n"
      << "lambda = " << format_number(c.lambda) << "\n"
      << "horizon = " << c.horizon << "\n"
      << "batch = " << c.batch << "\n"
      << "actor_lr = " << format_number(c.actor_lr) << "\n"
      << "critic_lr = " << format_number(c.critic_lr) << "\n"
      << "updates = " << c.updates << "\n"
      << "eval_every = " << c.eval_every << "\n"
      << "eval_episodes = " << c.eval_episodes << "\n"
      << "seed = " << c.seed << "\n"
      << "n_factors = " << c.n_factors << "\n"
      << "n_classes = " << c.n_classes << "\n"
      << "hidden = " << c.hidden << "\n"
      << "temperature = " << format_number(c.temperature) << "\n"
      << "gumbel_hard = " << (c.gumbel_hard ? "true" : "false") << "\n"
      << "grad_clip = " << format_number(c.grad_clip) << "\n"
      << "fresh_start_fraction = " << format_number(c.fresh_start_fraction) << "\n"
      << "record_wall_time = " << (c.record_wall_time ? "true" : "false") << "\n";
    return o.str();
}

TrainConfig parse_train_config_text(std::string_view text)
{
    KeyValues kv = KeyValues::parse(text);
    TrainConfig c = read_train_config(kv);
    kv.reject_unused();
    return c;
}

std::string format_number(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string resolve_output_dir(const std::string& configured)
{
    if (const char* env = std::getenv("CATPOL_OUT"); env != nullptr && *env != '\0')
        return env;
    return configured;
}

} // namespace catpol
