#include "cvrace/metrics.hpp"

#include "cvrace/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <stdexcept>

namespace cvrace {

std::string_view to_string(BlockScheme scheme) noexcept
{
    switch (scheme) {
    case BlockScheme::actives:
        return "actives";
    case BlockScheme::all_observations:
        return "observations";
    case BlockScheme::none:
        break;
    }
    return "none";
}

double ContributionVector::total() const noexcept
{
    return std::accumulate(contributions.begin(), contributions.end(), 0.0);
}

double tie_key(double score, int significant_digits) noexcept
{
    if (significant_digits <= 0 || score == 0.0 || !std::isfinite(score)) {
        return score;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*e", significant_digits - 1, score);
    return std::strtod(buf, nullptr);
}

MetricSpec MetricSpec::hits(std::size_t selection_size, TieOptions ties)
{
    if (selection_size == 0) {
        throw std::invalid_argument("selection size must be >= 1");
    }
    MetricSpec m;
    m.kind_ = MetricKind::hits;
    m.selection_size_ = selection_size;
    m.ties_ = ties;
    return m;
}

MetricSpec MetricSpec::initial_enhancement(std::size_t selection_size, TieOptions ties)
{
    MetricSpec m = hits(selection_size, ties);
    m.kind_ = MetricKind::initial_enhancement;
    return m;
}

MetricSpec MetricSpec::mse()
{
    MetricSpec m;
    m.kind_ = MetricKind::mse;
    m.selection_size_ = 0;
    return m;
}

MetricSpec MetricSpec::misclassification()
{
    MetricSpec m;
    m.kind_ = MetricKind::misclassification;
    m.selection_size_ = 0;
    return m;
}

MetricSpec MetricSpec::custom(std::shared_ptr<const CustomMetric> metric)
{
    if (!metric || !metric->value) {
        throw std::invalid_argument("custom metric needs a value function");
    }
    if (metric->blocks != BlockScheme::none && !metric->contributions) {
        throw std::invalid_argument("custom metric declares blocks but has no contributions function");
    }
    MetricSpec m;
    m.kind_ = MetricKind::custom;
    m.selection_size_ = 0;
    m.custom_ = std::move(metric);
    return m;
}

MetricSpec MetricSpec::parse(std::string_view id)
{
    if (id == "mse") {
        return mse();
    }
    if (id == "misclass") {
        return misclassification();
    }
    auto at = id.find('@');
    if (at != std::string_view::npos) {
        auto head = id.substr(0, at);
        auto tail = id.substr(at + 1);
        std::size_t t = 0;
        auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), t);
        if (ec == std::errc{} && ptr == tail.data() + tail.size() && t > 0) {
            if (head == "hits") {
                return hits(t);
            }
            if (head == "ie") {
                return initial_enhancement(t);
            }
        }
    }
    throw ConfigError("unknown metric '" + std::string(id) + "' (expected hits@T, ie@T, mse or misclass)");
}

Orientation MetricSpec::orientation() const noexcept
{
    switch (kind_) {
    case MetricKind::hits:
    case MetricKind::initial_enhancement:
        return Orientation::maximize;
    case MetricKind::mse:
    case MetricKind::misclassification:
        return Orientation::minimize;
    case MetricKind::custom:
        return custom_->orientation;
    }
    return Orientation::maximize;
}

BlockScheme MetricSpec::block_scheme() const noexcept
{
    switch (kind_) {
    case MetricKind::hits:
    case MetricKind::initial_enhancement:
        return BlockScheme::actives;
    case MetricKind::mse:
    case MetricKind::misclassification:
        return BlockScheme::all_observations;
    case MetricKind::custom:
        return custom_->blocks;
    }
    return BlockScheme::none;
}

std::string MetricSpec::name() const
{
    switch (kind_) {
    case MetricKind::hits:
        return "hits@" + std::to_string(selection_size_);
    case MetricKind::initial_enhancement:
        return "ie@" + std::to_string(selection_size_);
    case MetricKind::mse:
        return "mse";
    case MetricKind::misclassification:
        return "misclass";
    case MetricKind::custom:
        return custom_->name;
    }
    return {};
}

void MetricSpec::check_compatible(const Dataset& dataset) const
{
    const bool needs_binary = kind_ == MetricKind::hits || kind_ == MetricKind::initial_enhancement ||
                              kind_ == MetricKind::misclassification;
    if (needs_binary && !dataset.is_binary()) {
        throw DataError("metric " + name() + " requires a binary response");
    }
    if ((kind_ == MetricKind::hits || kind_ == MetricKind::initial_enhancement) &&
        selection_size_ > dataset.size()) {
        throw DataError("selection size " + std::to_string(selection_size_) + " exceeds n = " +
                        std::to_string(dataset.size()));
    }
    if (kind_ == MetricKind::initial_enhancement && dataset.active_count() == 0) {
        throw DataError("initial enhancement needs at least one active");
    }
}

namespace {

void check_predictions(const PredictionVector& p, const Dataset& d)
{
    if (p.scores.size() != d.size()) {
        throw std::invalid_argument("prediction length " + std::to_string(p.scores.size()) +
                                    " does not match n = " + std::to_string(d.size()));
    }
    for (double s : p.scores) {
        if (!std::isfinite(s)) {
            throw NumericalError("non-finite prediction for model " + p.model_id);
        }
    }
}

struct Cutoff {
    double key;        // tie key of the rank-T score
    double tie_credit; // a / (a + b)
};

// Locates the group of scores tied with the rank-T score.
Cutoff find_cutoff(const std::vector<double>& keys, std::size_t selection_size)
{
    std::vector<double> sorted = keys;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(selection_size - 1), sorted.end(),
                     std::greater<>());
    const double cut = sorted[selection_size - 1];
    std::size_t above = 0;
    std::size_t tied = 0;
    for (double k : keys) {
        above += k > cut;
        tied += k == cut;
    }
    const std::size_t a = selection_size - above;
    return {cut, static_cast<double>(a) / static_cast<double>(tied)};
}

std::vector<double> keys_of(const PredictionVector& p, const TieOptions& ties)
{
    std::vector<double> keys(p.scores.size());
    std::transform(p.scores.begin(), p.scores.end(), keys.begin(),
                   [&](double s) { return tie_key(s, ties.significant_digits); });
    return keys;
}

void check_hits_inputs(const PredictionVector& p, const Dataset& d, std::size_t selection_size)
{
    if (!d.is_binary()) {
        throw DataError("hits requires a binary response");
    }
    if (selection_size == 0 || selection_size > d.size()) {
        throw std::invalid_argument("selection size " + std::to_string(selection_size) + " outside [1, n = " +
                                    std::to_string(d.size()) + "]");
    }
    check_predictions(p, d);
}

} // namespace

double hits_at_T(const PredictionVector& predictions, const Dataset& dataset, std::size_t selection_size,
                 TieOptions ties)
{
    check_hits_inputs(predictions, dataset, selection_size);
    const auto keys = keys_of(predictions, ties);
    const auto cut = find_cutoff(keys, selection_size);
    double above = 0.0;
    double in_tie = 0.0;
    for (auto i : dataset.actives()) {
        if (keys[i] > cut.key) {
            above += 1.0;
        } else if (keys[i] == cut.key) {
            in_tie += 1.0;
        }
    }
    return above + cut.tie_credit * in_tie;
}

ContributionVector hit_contributions(const PredictionVector& predictions, const Dataset& dataset,
                                     std::size_t selection_size, TieOptions ties)
{
    check_hits_inputs(predictions, dataset, selection_size);
    const auto keys = keys_of(predictions, ties);
    const auto cut = find_cutoff(keys, selection_size);
    ContributionVector out;
    out.block_ids = dataset.actives();
    out.contributions.reserve(out.block_ids.size());
    for (auto i : out.block_ids) {
        out.contributions.push_back(keys[i] > cut.key ? 1.0 : keys[i] == cut.key ? cut.tie_credit : 0.0);
    }
    return out;
}

double initial_enhancement(double hits, std::size_t selection_size, const Dataset& dataset)
{
    if (dataset.active_count() == 0) {
        throw DataError("initial enhancement undefined with zero actives");
    }
    if (selection_size == 0) {
        throw std::invalid_argument("selection size must be >= 1");
    }
    const double rate = static_cast<double>(dataset.active_count()) / static_cast<double>(dataset.size());
    return (hits / static_cast<double>(selection_size)) / rate;
}

namespace {

double mse_of(const PredictionVector& p, const Dataset& d)
{
    check_predictions(p, d);
    double ss = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double r = p.scores[i] - d.response(i);
        ss += r * r;
    }
    return ss / static_cast<double>(d.size());
}

bool misclassified(double score, double response) { return (score > 0.5 ? 1.0 : 0.0) != response; }

double misclass_of(const PredictionVector& p, const Dataset& d)
{
    check_predictions(p, d);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        wrong += misclassified(p.scores[i], d.response(i));
    }
    return static_cast<double>(wrong) / static_cast<double>(d.size());
}

} // namespace

double evaluate(const MetricSpec& metric, const PredictionVector& predictions, const Dataset& dataset)
{
    metric.check_compatible(dataset);
    switch (metric.kind()) {
    case MetricKind::hits:
        return hits_at_T(predictions, dataset, metric.selection_size(), metric.ties());
    case MetricKind::initial_enhancement:
        return initial_enhancement(hits_at_T(predictions, dataset, metric.selection_size(), metric.ties()),
                                   metric.selection_size(), dataset);
    case MetricKind::mse:
        return mse_of(predictions, dataset);
    case MetricKind::misclassification:
        return misclass_of(predictions, dataset);
    case MetricKind::custom:
        return metric.custom_metric()->value(predictions, dataset);
    }
    throw std::logic_error("unhandled metric kind");
}

ContributionVector contributions(const MetricSpec& metric, const PredictionVector& predictions,
                                 const Dataset& dataset)
{
    metric.check_compatible(dataset);
    const double n = static_cast<double>(dataset.size());
    switch (metric.kind()) {
    case MetricKind::hits:
        return hit_contributions(predictions, dataset, metric.selection_size(), metric.ties());
    case MetricKind::initial_enhancement: {
        auto c = hit_contributions(predictions, dataset, metric.selection_size(), metric.ties());
        const double scale = initial_enhancement(1.0, metric.selection_size(), dataset);
        for (auto& x : c.contributions) {
            x *= scale;
        }
        return c;
    }
    case MetricKind::mse:
    case MetricKind::misclassification: {
        check_predictions(predictions, dataset);
        ContributionVector c;
        c.block_ids.resize(dataset.size());
        std::iota(c.block_ids.begin(), c.block_ids.end(), std::size_t{0});
        c.contributions.resize(dataset.size());
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const double s = predictions.scores[i];
            const double y = dataset.response(i);
            c.contributions[i] =
                (metric.kind() == MetricKind::mse ? (s - y) * (s - y) : double(misclassified(s, y))) / n;
        }
        return c;
    }
    case MetricKind::custom:
        if (!metric.decomposable()) {
            throw std::invalid_argument("metric " + metric.name() + " is not decomposable");
        }
        return metric.custom_metric()->contributions(predictions, dataset);
    }
    throw std::logic_error("unhandled metric kind");
}

} // namespace cvrace
