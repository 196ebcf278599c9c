#pragma once

#include "cvrace/data.hpp"
#include "cvrace/metrics.hpp"
#include "cvrace/models.hpp"
#include "cvrace/stats.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cvrace {

class ThreadPool;

enum class Blocking {
    splits_only,  // every test uses data splits as blocks (needs two splits before the first test)
    actives_first // first split tested with per-observation contributions as blocks, splits afterwards
};

enum class StopReason { single_survivor, p0_satisfied, max_splits };

[[nodiscard]] std::string_view to_string(Blocking blocking) noexcept;
[[nodiscard]] std::string_view to_string(StopReason reason) noexcept;

struct RaceConfig {
    double alpha = 0.05;
    // Practically insignificant margin, in metric units. Absent: race until one
    // model is left or max_splits is reached.
    std::optional<double> p0;
    std::size_t max_splits = 100;
    std::size_t folds = 10;
    MetricSpec metric = MetricSpec::hits(300);
    Blocking blocking = Blocking::splits_only;
    // Split j (1-based) uses fold-plan seed base_seed + j.
    std::uint64_t base_seed = 1;
    FoldOptions fold_options{};

    // Throws ConfigError on out-of-range settings.
    void validate() const;
};

// Metric value (and contributions when the metric is decomposable) of one
// model on one split.
struct CvEntry {
    double value = 0.0;
    std::optional<ContributionVector> contributions;
};

// Cross-validation results keyed by (model id, split seed). One cache belongs
// to one (dataset, metric) pair. Thread-safe.
class CvCache {
public:
    [[nodiscard]] std::optional<CvEntry> find(const std::string& model_id, std::uint64_t split_seed) const;
    void insert(const std::string& model_id, std::uint64_t split_seed, CvEntry entry);
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, std::uint64_t>, CvEntry> entries_;
};

// Shared resources for a race. Everything is optional.
struct RaceContext {
    ThreadPool* pool = nullptr;
    CvCache* cache = nullptr;
    // Named column subsets; a spec whose descriptor set is "all" (or the
    // dataset's own set name) reads the full dataset.
    std::map<std::string, Dataset> descriptor_sets;
    stats::QuantileCache* quantiles = nullptr;
};

struct IterationRecord {
    std::size_t split = 0; // 1-based
    std::uint64_t split_seed = 0;
    std::uint64_t plan_hash = 0; // digest of the fold assignment shared by all models this split
    std::optional<stats::BlockKind> block_kind; // empty when no test ran
    std::vector<std::string> evaluated;         // models cross-validated on this split
    std::map<std::string, double> values;       // metric value of each evaluated model on this split
    // Test results. Means, mse, q and tukey_T are on the scale of the tested
    // matrix; multiply by metric_scale for metric units (blocks = observations
    // sum to the metric, so the scale is the block count; 1 for splits).
    std::map<std::string, double> means;
    std::optional<double> mse;
    std::size_t error_df = 0;
    std::optional<double> q;
    std::optional<double> tukey_T;
    double metric_scale = 1.0;
    std::vector<std::string> eliminated;
    std::vector<std::string> survivors; // after this split's test
    std::string leader;
    std::vector<std::string> tied_leaders; // set when more than one model attains the best mean
    std::optional<double> p0_gap;          // ybar_(2) - ybar_(1) + T, metric units
    std::size_t cum_fits = 0;              // folds * sum of evaluated counts so far
    std::size_t fresh_fits = 0;            // cumulative fits not served from the cache
};

struct RaceTrace {
    std::string label;
    std::size_t folds = 0;
    std::string metric;
    std::vector<std::string> models; // ids in input order (after duplicate disambiguation)
    std::map<std::string, std::string> families;
    std::vector<IterationRecord> iterations;
    std::string winner;
    std::vector<std::string> tied_leaders;
    std::vector<std::string> survivors;
    StopReason stop_reason = StopReason::max_splits;
};

// ybar_(2) - ybar_(1) + T_alpha(m, B) for means sorted nonincreasing.
[[nodiscard]] double p0_gap(std::span<const double> sorted_means, std::size_t m, std::size_t blocks, double mse,
                            double alpha, const stats::QuantileFn& quantile = {});

// True iff the gap is below p0; always true for a single survivor.
[[nodiscard]] bool check_p0_stop(std::span<const double> sorted_means, std::size_t m, std::size_t blocks, double mse,
                                 double alpha, double p0, const stats::QuantileFn& quantile = {});

// Sequential elimination per the config (blocking scheme, optional p0).
[[nodiscard]] RaceTrace race(std::span<const ModelSpec> specs, const Dataset& dataset, const RaceConfig& config,
                             RaceContext& context, std::string label = "race");

// Splits as blocks throughout, no p0 stopping.
[[nodiscard]] RaceTrace race_algorithm1(std::span<const ModelSpec> specs, const Dataset& dataset,
                                        const RaceConfig& config, RaceContext& context);
// Observations as blocks on the first split, then splits; no p0 stopping.
[[nodiscard]] RaceTrace race_algorithm2(std::span<const ModelSpec> specs, const Dataset& dataset,
                                        const RaceConfig& config, RaceContext& context);
// Either blocking scheme with p0 stopping; config.p0 must be set.
[[nodiscard]] RaceTrace race_algorithm3(std::span<const ModelSpec> specs, const Dataset& dataset,
                                        const RaceConfig& config, RaceContext& context);

struct TuneCompareResult {
    std::vector<RaceTrace> tuning;
    RaceTrace comparison;
    std::size_t total_fits = 0; // fits actually computed across both steps
};

// Races each group on its own, then races the group winners. Split seeds are
// shared, so with reuse_cv the comparison reads cached results wherever a
// winner was already cross-validated on that split.
[[nodiscard]] TuneCompareResult tune_then_compare(std::span<const std::vector<ModelSpec>> groups,
                                                  const Dataset& dataset, const RaceConfig& config,
                                                  RaceContext& context, bool reuse_cv = true);

// One race over the union of all groups.
[[nodiscard]] RaceTrace simultaneous_race(std::span<const std::vector<ModelSpec>> groups, const Dataset& dataset,
                                          const RaceConfig& config, RaceContext& context);

// folds * sum over splits of models evaluated at that split.
[[nodiscard]] std::size_t fit_count(const RaceTrace& trace, std::size_t folds);
[[nodiscard]] std::size_t fit_count(std::span<const std::size_t> evaluated_per_split, std::size_t folds);

} // namespace cvrace
