#pragma once

#include "cvrace/data.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace cvrace {

enum class Orientation { maximize, minimize };
enum class MetricKind { hits, initial_enhancement, mse, misclassification, custom };
// Which observations act as blocks when a metric is split into per-observation
// contributions.
enum class BlockScheme { none, actives, all_observations };

[[nodiscard]] std::string_view to_string(BlockScheme scheme) noexcept;

// Assembled cross-validated predictions for one model on one data split.
struct PredictionVector {
    std::vector<double> scores;
    std::string model_id;
    std::uint64_t split_seed = 0;
};

// Per-block contributions y*_j. Contributions sum to the scalar metric.
struct ContributionVector {
    std::vector<double> contributions;
    std::vector<std::size_t> block_ids;

    [[nodiscard]] double total() const noexcept;
};

// Scores are compared after rounding to this many significant digits so that
// floating-point noise cannot split exact rational ties. 0 compares raw doubles.
struct TieOptions {
    int significant_digits = 12;
};

[[nodiscard]] double tie_key(double score, int significant_digits) noexcept;

// User-supplied metric. `contributions` may be empty when the metric is not
// decomposable; `blocks` must then be BlockScheme::none.
struct CustomMetric {
    std::string name;
    Orientation orientation = Orientation::maximize;
    BlockScheme blocks = BlockScheme::none;
    std::function<double(const PredictionVector&, const Dataset&)> value;
    std::function<ContributionVector(const PredictionVector&, const Dataset&)> contributions;
};

class MetricSpec {
public:
    [[nodiscard]] static MetricSpec hits(std::size_t selection_size, TieOptions ties = {});
    [[nodiscard]] static MetricSpec initial_enhancement(std::size_t selection_size, TieOptions ties = {});
    [[nodiscard]] static MetricSpec mse();
    [[nodiscard]] static MetricSpec misclassification();
    [[nodiscard]] static MetricSpec custom(std::shared_ptr<const CustomMetric> metric);

    // Accepts "hits@T", "ie@T", "mse", "misclass".
    [[nodiscard]] static MetricSpec parse(std::string_view id);

    [[nodiscard]] MetricKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t selection_size() const noexcept { return selection_size_; }
    [[nodiscard]] Orientation orientation() const noexcept;
    [[nodiscard]] BlockScheme block_scheme() const noexcept;
    [[nodiscard]] bool decomposable() const noexcept { return block_scheme() != BlockScheme::none; }
    [[nodiscard]] const TieOptions& ties() const noexcept { return ties_; }
    [[nodiscard]] std::string name() const;
    [[nodiscard]] const CustomMetric* custom_metric() const noexcept { return custom_.get(); }

    // Throws DataError when the metric cannot be applied to this response kind.
    void check_compatible(const Dataset& dataset) const;

private:
    MetricKind kind_ = MetricKind::hits;
    std::size_t selection_size_ = 300;
    TieOptions ties_{};
    std::shared_ptr<const CustomMetric> custom_;
};

// Expected number of actives among the top `selection_size` scores when the
// group of scores tied with the cutoff score is resolved uniformly at random:
// h_{T-a} + a/(a+b) * h_tie.
[[nodiscard]] double hits_at_T(const PredictionVector& predictions, const Dataset& dataset,
                               std::size_t selection_size, TieOptions ties = {});

// Contribution of each active (in Dataset::actives() order): 1 above the tie
// group, a/(a+b) inside it, 0 below.
[[nodiscard]] ContributionVector hit_contributions(const PredictionVector& predictions, const Dataset& dataset,
                                                   std::size_t selection_size, TieOptions ties = {});

// (h / T) / (A / n).
[[nodiscard]] double initial_enhancement(double hits, std::size_t selection_size, const Dataset& dataset);

[[nodiscard]] double evaluate(const MetricSpec& metric, const PredictionVector& predictions, const Dataset& dataset);

// Throws std::invalid_argument for non-decomposable metrics.
[[nodiscard]] ContributionVector contributions(const MetricSpec& metric, const PredictionVector& predictions,
                                               const Dataset& dataset);

} // namespace cvrace
