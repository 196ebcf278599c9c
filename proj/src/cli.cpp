#include "cvrace/cli.hpp"

#include "cvrace/error.hpp"
#include "cvrace/studentized_range.hpp"
#include "cvrace/thread_pool.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace cvrace::cli {

using nlohmann::ordered_json;

std::string_view to_string(Mode mode) noexcept
{
    switch (mode) {
    case Mode::compare:
        return "compare";
    case Mode::simultaneous:
        return "simultaneous";
    case Mode::tune:
        break;
    }
    return "tune";
}

namespace {

Mode parse_mode(const std::string& s)
{
    if (s == "tune") {
        return Mode::tune;
    }
    if (s == "compare" || s == "tune_then_compare") {
        return Mode::compare;
    }
    if (s == "simultaneous") {
        return Mode::simultaneous;
    }
    throw ConfigError("unknown mode '" + s + "' (expected tune, compare or simultaneous)");
}

Blocking parse_blocking(const std::string& s)
{
    if (s == "splits_only") {
        return Blocking::splits_only;
    }
    if (s == "actives_first") {
        return Blocking::actives_first;
    }
    throw ConfigError("unknown blocking '" + s + "' (expected splits_only or actives_first)");
}

template <class T>
T get_as(const ordered_json& doc, const char* key, const char* what)
{
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' must be " + what);
    }
}

std::size_t get_count(const ordered_json& doc, const char* key)
{
    const auto& v = doc.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

void check_known_keys(const ordered_json& doc, std::initializer_list<std::string_view> known, const std::string& where)
{
    for (const auto& [key, value] : doc.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

GridSpec parse_group(const ordered_json& g, std::size_t index)
{
    const std::string where = "group " + std::to_string(index + 1);
    if (!g.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    check_known_keys(g, {"family", "descriptor_set", "grid", "fixed"}, where);
    GridSpec spec;
    if (!g.contains("family")) {
        throw ConfigError(where + ": missing 'family'");
    }
    spec.family = get_as<std::string>(g, "family", "a string");
    if (g.contains("descriptor_set")) {
        spec.descriptor_set = get_as<std::string>(g, "descriptor_set", "a string");
    }
    if (g.contains("grid")) {
        if (!g["grid"].is_object()) {
            throw ConfigError(where + ": 'grid' must map parameter names to value lists");
        }
        for (const auto& [name, values] : g["grid"].items()) {
            std::vector<double> list;
            if (values.is_number()) {
                list.push_back(values.get<double>());
            } else if (values.is_array() && !values.empty()) {
                for (const auto& v : values) {
                    if (!v.is_number()) {
                        throw ConfigError(where + ": grid values for '" + name + "' must be numbers");
                    }
                    list.push_back(v.get<double>());
                }
            } else {
                throw ConfigError(where + ": grid entry '" + name + "' must be a number or non-empty list");
            }
            spec.grid.emplace_back(name, std::move(list));
        }
    }
    if (g.contains("fixed")) {
        if (!g["fixed"].is_object()) {
            throw ConfigError(where + ": 'fixed' must be an object");
        }
        for (const auto& [name, value] : g["fixed"].items()) {
            if (!value.is_number()) {
                throw ConfigError(where + ": fixed parameter '" + name + "' must be a number");
            }
            spec.fixed[name] = value.get<double>();
        }
    }
    return spec;
}

} // namespace

std::vector<ModelSpec> GridSpec::expand() const
{
    auto adapter = builtin_adapter(family);
    std::vector<ParamMap> points{fixed};
    for (const auto& [name, values] : grid) {
        std::vector<ParamMap> next;
        for (const auto& p : points) {
            for (double v : values) {
                ParamMap q = p;
                q[name] = v;
                next.push_back(std::move(q));
            }
        }
        points = std::move(next);
    }
    std::vector<ModelSpec> out;
    for (auto& p : points) {
        out.emplace_back(adapter, std::move(p), descriptor_set);
    }
    return out;
}

void RunConfig::validate() const
{
    race.validate();
    if (groups.empty()) {
        throw ConfigError("config has no model groups");
    }
    std::size_t total = 0;
    for (const auto& g : groups) {
        const auto n = g.expand().size();
        if (n == 0) {
            throw ConfigError("a model group expands to no models");
        }
        if (g.descriptor_set != "all" && descriptor_sets.count(g.descriptor_set) == 0) {
            throw ConfigError("group uses undefined descriptor set '" + g.descriptor_set + "'");
        }
        total += n;
    }
    switch (mode) {
    case Mode::tune:
        if (groups.size() != 1) {
            throw ConfigError("tune mode races exactly one group; use compare or simultaneous for several");
        }
        if (total < 2) {
            throw ConfigError("tune mode needs a grid of at least two models");
        }
        break;
    case Mode::compare:
        if (groups.size() < 2) {
            throw ConfigError("compare mode needs at least two groups");
        }
        break;
    case Mode::simultaneous:
        if (total < 2) {
            throw ConfigError("simultaneous mode needs at least two models");
        }
        break;
    }
}

RunConfig parse_run_config(const ordered_json& doc, const std::filesystem::path& base_dir, const Overrides& overrides)
{
    if (!doc.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    check_known_keys(doc,
                     {"dataset", "response", "descriptor_sets", "groups", "mode", "alpha", "p0", "max_splits", "folds",
                      "metric", "blocking", "seed", "threads", "stratified", "reuse_cv", "out"},
                     "config");
    RunConfig c;
    if (!doc.contains("dataset")) {
        throw ConfigError("config is missing 'dataset'");
    }
    c.dataset = get_as<std::string>(doc, "dataset", "a path string");
    if (c.dataset.is_relative() && !base_dir.empty()) {
        c.dataset = base_dir / c.dataset;
    }
    if (doc.contains("response")) {
        c.response = get_as<std::string>(doc, "response", "a string");
    }
    if (doc.contains("descriptor_sets")) {
        const auto& sets = doc["descriptor_sets"];
        if (!sets.is_object()) {
            throw ConfigError("'descriptor_sets' must map names to column lists");
        }
        for (const auto& [name, cols] : sets.items()) {
            if (name == "all") {
                throw ConfigError("descriptor set name 'all' is reserved");
            }
            try {
                c.descriptor_sets[name] = cols.get<std::vector<std::string>>();
            } catch (const nlohmann::json::exception&) {
                throw ConfigError("descriptor set '" + name + "' must be a list of column names");
            }
            if (c.descriptor_sets[name].empty()) {
                throw ConfigError("descriptor set '" + name + "' is empty");
            }
        }
    }
    if (!doc.contains("groups") || !doc["groups"].is_array()) {
        throw ConfigError("config needs a 'groups' list");
    }
    for (std::size_t g = 0; g < doc["groups"].size(); ++g) {
        c.groups.push_back(parse_group(doc["groups"][g], g));
    }
    if (doc.contains("mode")) {
        c.mode = parse_mode(get_as<std::string>(doc, "mode", "a string"));
    }
    if (doc.contains("alpha")) {
        c.race.alpha = get_as<double>(doc, "alpha", "a number");
    }
    if (doc.contains("p0") && !doc["p0"].is_null()) {
        c.race.p0 = get_as<double>(doc, "p0", "a number or null");
    }
    if (doc.contains("max_splits")) {
        c.race.max_splits = get_count(doc, "max_splits");
    }
    if (doc.contains("folds")) {
        c.race.folds = get_count(doc, "folds");
    }
    if (doc.contains("metric")) {
        c.race.metric = MetricSpec::parse(get_as<std::string>(doc, "metric", "a string"));
    }
    if (doc.contains("blocking")) {
        c.race.blocking = parse_blocking(get_as<std::string>(doc, "blocking", "a string"));
    }
    if (doc.contains("seed")) {
        c.race.base_seed = get_as<std::uint64_t>(doc, "seed", "a non-negative integer");
    }
    if (doc.contains("threads")) {
        c.threads = get_count(doc, "threads");
    }
    if (doc.contains("stratified")) {
        c.race.fold_options.stratified = get_as<bool>(doc, "stratified", "a boolean");
    }
    if (doc.contains("reuse_cv")) {
        c.reuse_cv = get_as<bool>(doc, "reuse_cv", "a boolean");
    }
    if (doc.contains("out")) {
        c.out = get_as<std::string>(doc, "out", "a path string");
    }

    if (overrides.alpha) {
        c.race.alpha = *overrides.alpha;
    }
    if (overrides.p0) {
        c.race.p0 = *overrides.p0;
    }
    if (overrides.max_splits) {
        c.race.max_splits = *overrides.max_splits;
    }
    if (overrides.folds) {
        c.race.folds = *overrides.folds;
    }
    if (overrides.metric) {
        c.race.metric = MetricSpec::parse(*overrides.metric);
    }
    if (overrides.seed) {
        c.race.base_seed = *overrides.seed;
    }
    if (overrides.threads) {
        c.threads = *overrides.threads;
    }
    if (overrides.mode) {
        c.mode = parse_mode(*overrides.mode);
    }
    if (overrides.out) {
        c.out = *overrides.out;
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    ordered_json doc;
    try {
        doc = ordered_json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(doc, path.parent_path(), overrides);
}

RunResult execute(const RunConfig& config)
{
    config.validate();
    const Dataset dataset = load_csv(config.dataset, config.response);
    config.race.metric.check_compatible(dataset);

    ThreadPool pool(config.threads);
    stats::QuantileCache quantiles;
    CvCache cache;
    RaceContext ctx;
    ctx.pool = &pool;
    ctx.quantiles = &quantiles;
    for (const auto& [name, cols] : config.descriptor_sets) {
        ctx.descriptor_sets.emplace(name, dataset.select_columns(cols, name));
    }

    std::vector<std::vector<ModelSpec>> groups;
    for (const auto& g : config.groups) {
        groups.push_back(g.expand());
    }

    RunResult result;
    switch (config.mode) {
    case Mode::tune: {
        ctx.cache = &cache;
        auto trace = race(groups.front(), dataset, config.race, ctx, "tune");
        result.total_fits = trace.iterations.back().fresh_fits;
        result.traces.push_back(std::move(trace));
        break;
    }
    case Mode::simultaneous: {
        ctx.cache = &cache;
        auto trace = simultaneous_race(groups, dataset, config.race, ctx);
        result.total_fits = trace.iterations.back().fresh_fits;
        result.traces.push_back(std::move(trace));
        break;
    }
    case Mode::compare: {
        ctx.cache = config.reuse_cv ? &cache : nullptr;
        auto tc = tune_then_compare(groups, dataset, config.race, ctx, config.reuse_cv);
        result.traces = std::move(tc.tuning);
        result.traces.push_back(std::move(tc.comparison));
        result.total_fits = tc.total_fits;
        break;
    }
    }
    return result;
}

double round_sig12(double x) noexcept
{
    if (!std::isfinite(x) || x == 0.0) {
        return x == 0.0 ? 0.0 : x;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return std::strtod(buf, nullptr);
}

namespace {

ordered_json optional_number(const std::optional<double>& v)
{
    return v ? ordered_json(round_sig12(*v)) : ordered_json(nullptr);
}

ordered_json rounded_map(const std::map<std::string, double>& m, double scale = 1.0)
{
    ordered_json out = ordered_json::object();
    for (const auto& [k, v] : m) {
        out[k] = round_sig12(v * scale);
    }
    return out;
}

std::string hex64(std::uint64_t v)
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

ordered_json iteration_json(const RaceTrace& trace, const IterationRecord& rec)
{
    ordered_json j;
    j["race"] = trace.label;
    j["split"] = rec.split;
    j["split_seed"] = rec.split_seed;
    j["plan_hash"] = hex64(rec.plan_hash);
    j["block_kind"] = rec.block_kind ? ordered_json(std::string(stats::to_string(*rec.block_kind)))
                                     : ordered_json(nullptr);
    j["evaluated"] = rec.evaluated;
    j["values"] = rounded_map(rec.values);
    j["survivors"] = rec.survivors;
    j["means"] = rounded_map(rec.means);
    j["mse"] = optional_number(rec.mse);
    j["error_df"] = rec.error_df;
    j["q"] = optional_number(rec.q);
    j["tukey_T"] = optional_number(rec.tukey_T);
    j["metric_scale"] = round_sig12(rec.metric_scale);
    j["eliminated"] = rec.eliminated;
    j["leader"] = rec.leader;
    j["tied_leaders"] = rec.tied_leaders;
    j["p0_gap"] = optional_number(rec.p0_gap);
    j["cum_fits"] = rec.cum_fits;
    j["fresh_fits"] = rec.fresh_fits;
    return j;
}

std::string trace_ndjson(const std::vector<RaceTrace>& traces)
{
    std::string out;
    for (const auto& t : traces) {
        for (const auto& rec : t.iterations) {
            out += iteration_json(t, rec).dump();
            out += '\n';
        }
    }
    return out;
}

namespace {

ordered_json race_summary(const RaceTrace& t)
{
    ordered_json j;
    j["label"] = t.label;
    j["winner"] = t.winner;
    j["tied_leaders"] = t.tied_leaders;
    j["survivors"] = t.survivors;
    j["stop_reason"] = std::string(to_string(t.stop_reason));
    j["splits"] = t.iterations.size();
    j["fit_count"] = t.iterations.empty() ? 0 : t.iterations.back().cum_fits;
    j["fresh_fits"] = t.iterations.empty() ? 0 : t.iterations.back().fresh_fits;
    ordered_json families = ordered_json::object();
    for (const auto& id : t.survivors) {
        families[id] = t.families.at(id);
    }
    j["survivor_families"] = families;
    if (t.iterations.empty()) {
        j["means"] = ordered_json::object();
        j["tukey_T"] = nullptr;
        j["intervals"] = ordered_json::array();
        return j;
    }
    const auto& last = t.iterations.back();
    j["means"] = rounded_map(last.means, last.metric_scale);
    j["tukey_T"] = last.tukey_T ? ordered_json(round_sig12(*last.tukey_T * last.metric_scale)) : ordered_json(nullptr);
    ordered_json intervals = ordered_json::array();
    if (last.tukey_T) {
        const double half = *last.tukey_T * last.metric_scale;
        const double top = last.means.at(t.winner) * last.metric_scale;
        for (const auto& id : t.survivors) {
            if (id == t.winner) {
                continue;
            }
            const double d = top - last.means.at(id) * last.metric_scale;
            ordered_json ci;
            ci["model"] = id;
            ci["difference"] = round_sig12(d);
            ci["lower"] = round_sig12(d - half);
            ci["upper"] = round_sig12(d + half);
            intervals.push_back(std::move(ci));
        }
    }
    j["intervals"] = intervals;
    return j;
}

} // namespace

ordered_json summary_json(const RunConfig& config, const RunResult& result)
{
    ordered_json j;
    j["mode"] = std::string(to_string(config.mode));
    j["metric"] = config.race.metric.name();
    j["alpha"] = round_sig12(config.race.alpha);
    j["p0"] = config.race.p0 ? ordered_json(round_sig12(*config.race.p0)) : ordered_json(nullptr);
    j["blocking"] = std::string(to_string(config.race.blocking));
    j["folds"] = config.race.folds;
    j["max_splits"] = config.race.max_splits;
    j["seed"] = config.race.base_seed;
    j["winner"] = result.traces.empty() ? "" : result.traces.back().winner;
    j["total_fits"] = result.total_fits;
    ordered_json races = ordered_json::array();
    for (const auto& t : result.traces) {
        races.push_back(race_summary(t));
    }
    j["races"] = races;
    return j;
}

std::string means_by_split_csv(const std::vector<RaceTrace>& traces)
{
    std::ostringstream os;
    os << "race,split,model_id,value\n";
    char buf[40];
    for (const auto& t : traces) {
        for (const auto& rec : t.iterations) {
            for (const auto& id : rec.evaluated) {
                std::snprintf(buf, sizeof buf, "%.12g", rec.values.at(id));
                os << t.label << ',' << rec.split << ',' << id << ',' << buf << '\n';
            }
        }
    }
    return os.str();
}

namespace {

void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot write " + tmp.string());
        }
        out << content;
        out.flush();
        if (!out) {
            throw DataError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

void write_artifacts(const RunConfig& config, const RunResult& result)
{
    std::error_code ec;
    std::filesystem::create_directories(config.out, ec);
    if (ec) {
        throw DataError("cannot create output directory " + config.out.string() + ": " + ec.message());
    }
    write_atomic(config.out / "trace.ndjson", trace_ndjson(result.traces));
    write_atomic(config.out / "means_by_split.csv", means_by_split_csv(result.traces));
    write_atomic(config.out / "summary.json", summary_json(config, result).dump(2) + "\n");
}

namespace {

int report(std::ostream& err, int code, const std::string& what)
{
    err << "error: " << what << '\n';
    return code;
}

double parse_df(const std::string& s)
{
    if (s == "inf" || s == "Inf" || s == "infinity") {
        return stats::kInfiniteDf;
    }
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("--df must be a number or 'inf'");
    }
    if (pos != s.size()) {
        throw ConfigError("--df must be a number or 'inf'");
    }
    return v;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Sequential cross-validation racing for model tuning and comparison", "cvrace"};
    app.require_subcommand(1);

    auto* race_cmd = app.add_subcommand("race", "Race the models described by a config document");
    std::string config_path;
    Overrides ov;
    double alpha = 0.0;
    double p0 = 0.0;
    std::size_t max_splits = 0;
    std::size_t folds = 0;
    std::string metric;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::string mode;
    std::string out_dir;
    race_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    auto* o_alpha = race_cmd->add_option("--alpha", alpha, "Significance level of each elimination test");
    auto* o_p0 = race_cmd->add_option("--p0", p0, "Practically insignificant margin (enables p0 stopping)");
    auto* o_splits = race_cmd->add_option("--max-splits", max_splits, "Maximum number of data splits");
    auto* o_folds = race_cmd->add_option("--folds", folds, "Cross-validation folds per split");
    auto* o_metric = race_cmd->add_option("--metric", metric, "hits@T, ie@T, mse or misclass");
    auto* o_seed = race_cmd->add_option("--seed", seed, "Base seed; split j uses seed + j");
    auto* o_threads = race_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
    auto* o_mode = race_cmd->add_option("--mode", mode, "tune, compare or simultaneous");
    auto* o_out = race_cmd->add_option("--out", out_dir, "Output directory");

    auto* q_cmd = app.add_subcommand("quantile", "Studentized range quantile q_alpha(m, df)");
    double q_alpha = 0.05;
    std::size_t q_m = 2;
    std::string q_df = "inf";
    q_cmd->add_option("--alpha", q_alpha, "Upper tail probability")->required();
    q_cmd->add_option("--m", q_m, "Number of groups")->required();
    q_cmd->add_option("--df", q_df, "Error degrees of freedom (number or 'inf')")->required();

    auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic binary assay dataset as CSV");
    SyntheticSpec syn;
    std::string gen_out;
    gen_cmd->add_option("--n", syn.n, "Observations")->required();
    gen_cmd->add_option("--d", syn.d, "Descriptor columns")->required();
    gen_cmd->add_option("--rate", syn.active_rate, "Active fraction")->required();
    gen_cmd->add_option("--signal", syn.signal, "Shift of actives along a random direction")->required();
    gen_cmd->add_option("--seed", syn.seed, "Seed")->required();
    gen_cmd->add_option("--out", gen_out, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::ostringstream os;
        app.exit(e, os, os);
        return report(err, static_cast<int>(ErrorKind::config), os.str().empty() ? e.what() : os.str());
    }

    try {
        if (*race_cmd) {
            if (*o_alpha) {
                ov.alpha = alpha;
            }
            if (*o_p0) {
                ov.p0 = p0;
            }
            if (*o_splits) {
                ov.max_splits = max_splits;
            }
            if (*o_folds) {
                ov.folds = folds;
            }
            if (*o_metric) {
                ov.metric = metric;
            }
            if (*o_seed) {
                ov.seed = seed;
            }
            if (*o_threads) {
                ov.threads = threads;
            }
            if (*o_mode) {
                ov.mode = mode;
            }
            if (*o_out) {
                ov.out = out_dir;
            }
            const auto config = load_run_config(config_path, ov);
            const auto result = execute(config);
            write_artifacts(config, result);
            out << "winner " << result.traces.back().winner << " ("
                << to_string(result.traces.back().stop_reason) << ", " << result.traces.back().iterations.size()
                << " splits, " << result.total_fits << " fits)\n";
            return 0;
        }
        if (*q_cmd) {
            if (!(q_alpha > 0.0 && q_alpha < 1.0)) {
                throw ConfigError("--alpha must lie in (0, 1)");
            }
            if (q_m < 2) {
                throw ConfigError("--m must be >= 2");
            }
            const double df = parse_df(q_df);
            if (!(df >= 1.0)) {
                throw ConfigError("--df must be >= 1");
            }
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6g", stats::studentized_range_quantile(q_alpha, q_m, df));
            out << buf << '\n';
            return 0;
        }
        if (*gen_cmd) {
            Dataset d = [&] {
                try {
                    return generate_synthetic(syn);
                } catch (const std::invalid_argument& e) {
                    throw ConfigError(e.what());
                }
            }();
            write_csv(d, gen_out);
            return 0;
        }
    } catch (const Error& e) {
        return report(err, e.exit_code(), e.what());
    } catch (const std::invalid_argument& e) {
        return report(err, static_cast<int>(ErrorKind::config), e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return report(err, static_cast<int>(ErrorKind::data), e.what());
    }
    return 0;
}

} // namespace cvrace::cli
