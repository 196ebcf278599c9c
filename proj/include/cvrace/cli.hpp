#pragma once

#include "cvrace/race.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cvrace::cli {

enum class Mode {
    tune,        // one group, one race
    compare,     // tune each group, then race the winners
    simultaneous // one race over the union of all groups
};

[[nodiscard]] std::string_view to_string(Mode mode) noexcept;

// One family with parameter lists; expands to the cross product of the lists
// in document order (first key outermost).
struct GridSpec {
    std::string family;
    std::string descriptor_set = "all";
    std::vector<std::pair<std::string, std::vector<double>>> grid;
    ParamMap fixed;

    [[nodiscard]] std::vector<ModelSpec> expand() const;
};

struct RunConfig {
    std::filesystem::path dataset;
    std::string response = "active";
    std::map<std::string, std::vector<std::string>> descriptor_sets;
    std::vector<GridSpec> groups;
    Mode mode = Mode::tune;
    RaceConfig race;
    bool reuse_cv = true;
    std::filesystem::path out = "results";
    std::size_t threads = 0; // 0 = hardware concurrency

    // Throws ConfigError when the grid is empty or the mode does not fit the groups.
    void validate() const;
};

// Command-line values that take precedence over the config document.
struct Overrides {
    std::optional<double> alpha;
    std::optional<double> p0;
    std::optional<std::size_t> max_splits;
    std::optional<std::size_t> folds;
    std::optional<std::string> metric;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> mode;
    std::optional<std::filesystem::path> out;
};

// Relative dataset paths resolve against the config file's directory.
[[nodiscard]] RunConfig parse_run_config(const nlohmann::ordered_json& doc,
                                         const std::filesystem::path& base_dir = {}, const Overrides& overrides = {});
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides = {});

struct RunResult {
    std::vector<RaceTrace> traces; // tuning races first, comparison last
    std::size_t total_fits = 0;    // fits actually computed
};

[[nodiscard]] RunResult execute(const RunConfig& config);

// Float rendering used by every artifact: 12 significant digits.
[[nodiscard]] double round_sig12(double x) noexcept;

[[nodiscard]] nlohmann::ordered_json iteration_json(const RaceTrace& trace, const IterationRecord& rec);
[[nodiscard]] std::string trace_ndjson(const std::vector<RaceTrace>& traces);
[[nodiscard]] nlohmann::ordered_json summary_json(const RunConfig& config, const RunResult& result);
[[nodiscard]] std::string means_by_split_csv(const std::vector<RaceTrace>& traces);

// Writes summary.json, trace.ndjson and means_by_split.csv, each via a
// temporary file and rename.
void write_artifacts(const RunConfig& config, const RunResult& result);

// Entry point behind the executable. Returns the process exit status:
// 0 success, 2 configuration error, 3 data error, 4 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace cvrace::cli
