#include "cvrace/stats.hpp"

#include "cvrace/studentized_range.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cvrace::stats {

std::string_view to_string(BlockKind kind) noexcept
{
    switch (kind) {
    case BlockKind::splits:
        return "splits";
    case BlockKind::actives:
        return "actives";
    case BlockKind::observations:
        return "observations";
    }
    return "splits";
}

ScoreMatrix::ScoreMatrix(std::vector<std::string> model_ids, std::vector<std::string> block_ids, BlockKind kind,
                         std::vector<double> values)
    : model_ids_(std::move(model_ids))
    , block_ids_(std::move(block_ids))
    , kind_(kind)
    , values_(std::move(values))
{
    if (values_.size() != model_ids_.size() * block_ids_.size()) {
        throw std::invalid_argument("score matrix has " + std::to_string(values_.size()) + " cells, expected " +
                                    std::to_string(model_ids_.size()) + " x " + std::to_string(block_ids_.size()));
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("score matrix contains a non-finite cell");
        }
    }
}

ScoreMatrix ScoreMatrix::negated() const
{
    std::vector<double> v(values_.size());
    std::transform(values_.begin(), values_.end(), v.begin(), [](double x) { return -x; });
    return ScoreMatrix(model_ids_, block_ids_, kind_, std::move(v));
}

ScoreMatrix ScoreMatrix::select_models(std::span<const std::size_t> rows) const
{
    std::vector<std::string> ids;
    std::vector<double> v;
    for (auto r : rows) {
        ids.push_back(model_ids_.at(r));
        auto src = row(r);
        v.insert(v.end(), src.begin(), src.end());
    }
    return ScoreMatrix(std::move(ids), block_ids_, kind_, std::move(v));
}

namespace {

void require_testable(const ScoreMatrix& m)
{
    if (m.models() < 2 || m.blocks() < 2) {
        throw std::invalid_argument("randomized-block test needs at least 2 models and 2 blocks (got " +
                                    std::to_string(m.models()) + " x " + std::to_string(m.blocks()) + ")");
    }
}

double mean_of(std::span<const double> xs)
{
    double s = 0.0;
    for (double x : xs) {
        s += x;
    }
    return s / static_cast<double>(xs.size());
}

} // namespace

std::vector<double> block_means(const ScoreMatrix& matrix)
{
    if (matrix.blocks() == 0) {
        throw std::invalid_argument("score matrix has no blocks");
    }
    std::vector<double> means(matrix.models());
    for (std::size_t i = 0; i < matrix.models(); ++i) {
        means[i] = mean_of(matrix.row(i));
    }
    return means;
}

AnovaResult block_anova_mse(const ScoreMatrix& matrix)
{
    require_testable(matrix);
    const std::size_t m = matrix.models();
    const std::size_t b = matrix.blocks();
    const auto row_means = block_means(matrix);
    std::vector<double> col_means(b, 0.0);
    for (std::size_t j = 0; j < b; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            s += matrix(i, j);
        }
        col_means[j] = s / static_cast<double>(m);
    }
    const double grand = mean_of(row_means);
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double row_effect = row_means[i] - grand;
        for (std::size_t j = 0; j < b; ++j) {
            const double r = (matrix(i, j) - col_means[j]) - row_effect;
            ss += r * r;
        }
    }
    const std::size_t df = (m - 1) * (b - 1);
    return {ss / static_cast<double>(df), df};
}

double QuantileCache::operator()(double alpha, std::size_t m, double df)
{
    const auto key = std::make_tuple(alpha, m, df);
    {
        std::lock_guard lock(mutex_);
        if (auto it = values_.find(key); it != values_.end()) {
            return it->second;
        }
    }
    const double q = studentized_range_quantile(alpha, m, df);
    std::lock_guard lock(mutex_);
    values_.emplace(key, q);
    return q;
}

namespace {

double quantile_of(const QuantileFn& fn, double alpha, std::size_t m, double df)
{
    return fn ? fn(alpha, m, df) : studentized_range_quantile(alpha, m, df);
}

} // namespace

double tukey_value(double alpha, std::size_t m, std::size_t blocks, double mse, const QuantileFn& quantile)
{
    if (m < 2 || blocks < 2) {
        throw std::invalid_argument("Tukey value needs m >= 2 and B >= 2");
    }
    if (!(mse >= 0.0)) {
        throw std::invalid_argument("mse must be non-negative");
    }
    const double df = static_cast<double>((m - 1) * (blocks - 1));
    return quantile_of(quantile, alpha, m, df) * std::sqrt(mse / static_cast<double>(blocks));
}

std::vector<PairwiseInterval> TukeyOutcome::pairwise_intervals() const
{
    std::vector<PairwiseInterval> out;
    for (std::size_t i = 0; i < means.size(); ++i) {
        for (std::size_t k = i + 1; k < means.size(); ++k) {
            const double d = means[i] - means[k];
            out.push_back({i, k, d, d - ci_half_width, d + ci_half_width});
        }
    }
    return out;
}

TukeyOutcome tukey_eliminate(const ScoreMatrix& matrix, double alpha, Orientation orientation,
                             const QuantileFn& quantile)
{
    require_testable(matrix);
    const ScoreMatrix oriented = orientation == Orientation::maximize ? matrix : matrix.negated();
    const auto anova = block_anova_mse(oriented);
    const auto oriented_means = block_means(oriented);

    TukeyOutcome out;
    out.mse = anova.mse;
    out.error_df = anova.error_df;
    out.q_value = quantile_of(quantile, alpha, matrix.models(), static_cast<double>(anova.error_df));
    out.tukey_T = out.q_value * std::sqrt(anova.mse / static_cast<double>(matrix.blocks()));
    out.ci_half_width = out.tukey_T;
    out.means = block_means(matrix);

    const auto& ids = matrix.model_ids();
    const double top = *std::max_element(oriented_means.begin(), oriented_means.end());
    out.best = matrix.models();
    for (std::size_t i = 0; i < matrix.models(); ++i) {
        if (oriented_means[i] == top && (out.best == matrix.models() || ids[i] < ids[out.best])) {
            out.best = i;
        }
    }
    for (std::size_t i = 0; i < matrix.models(); ++i) {
        if (top - oriented_means[i] > out.tukey_T) {
            out.eliminated.push_back(i);
            out.eliminated_ids.push_back(ids[i]);
        } else {
            out.survivors.push_back(i);
        }
    }
    return out;
}

} // namespace cvrace::stats
