#pragma once

#include "cvrace/metrics.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace cvrace::stats {

enum class BlockKind { splits, actives, observations };

[[nodiscard]] std::string_view to_string(BlockKind kind) noexcept;

// Two-way layout y_ij of m models (rows) by B blocks (columns), complete.
class ScoreMatrix {
public:
    ScoreMatrix(std::vector<std::string> model_ids, std::vector<std::string> block_ids, BlockKind kind,
                std::vector<double> values);

    [[nodiscard]] std::size_t models() const noexcept { return model_ids_.size(); }
    [[nodiscard]] std::size_t blocks() const noexcept { return block_ids_.size(); }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * blocks() + j]; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept
    {
        return {values_.data() + i * blocks(), blocks()};
    }
    [[nodiscard]] const std::vector<std::string>& model_ids() const noexcept { return model_ids_; }
    [[nodiscard]] const std::vector<std::string>& block_ids() const noexcept { return block_ids_; }
    [[nodiscard]] BlockKind block_kind() const noexcept { return kind_; }

    // Every value multiplied by -1, turning a minimize metric into maximize.
    [[nodiscard]] ScoreMatrix negated() const;
    [[nodiscard]] ScoreMatrix select_models(std::span<const std::size_t> rows) const;

private:
    std::vector<std::string> model_ids_;
    std::vector<std::string> block_ids_;
    BlockKind kind_;
    std::vector<double> values_;
};

// Row means ybar_i. = (1/B) sum_j y_ij.
[[nodiscard]] std::vector<double> block_means(const ScoreMatrix& matrix);

struct AnovaResult {
    double mse = 0.0;
    std::size_t error_df = 0;
};

// Randomized-block residual mean square:
// sum (y_ij - ybar_i. - ybar_.j + ybar_..)^2 / ((m-1)(B-1)).
[[nodiscard]] AnovaResult block_anova_mse(const ScoreMatrix& matrix);

using QuantileFn = std::function<double(double alpha, std::size_t m, double df)>;

// Memoizes studentized_range_quantile; safe to share between threads.
class QuantileCache {
public:
    double operator()(double alpha, std::size_t m, double df);

private:
    std::mutex mutex_;
    std::map<std::tuple<double, std::size_t, double>, double> values_;
};

// q_alpha(m, (m-1)(B-1)) * sqrt(mse / B).
[[nodiscard]] double tukey_value(double alpha, std::size_t m, std::size_t blocks, double mse,
                                 const QuantileFn& quantile = {});

// Simultaneous interval for the difference of means of rows `first` and `second`.
struct PairwiseInterval {
    std::size_t first;
    std::size_t second;
    double difference;
    double lower;
    double upper;
};

struct TukeyOutcome {
    double mse = 0.0;
    std::size_t error_df = 0;
    double q_value = 0.0;
    double tukey_T = 0.0;
    double ci_half_width = 0.0;
    // Means in the metric's own orientation.
    std::vector<double> means;
    // Row of the best mean (lowest model id among ties).
    std::size_t best = 0;
    std::vector<std::size_t> survivors;
    std::vector<std::size_t> eliminated;
    std::vector<std::string> eliminated_ids;

    [[nodiscard]] std::vector<PairwiseInterval> pairwise_intervals() const;
};

// Eliminates every model whose mean trails the best mean by strictly more
// than the Tukey value. All models tied for best survive.
[[nodiscard]] TukeyOutcome tukey_eliminate(const ScoreMatrix& matrix, double alpha, Orientation orientation,
                                           const QuantileFn& quantile = {});

} // namespace cvrace::stats
