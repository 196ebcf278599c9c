#include "cvrace/race.hpp"

#include "cvrace/error.hpp"
#include "cvrace/rng.hpp"
#include "cvrace/thread_pool.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace cvrace {

std::string_view to_string(Blocking blocking) noexcept
{
    return blocking == Blocking::splits_only ? "splits_only" : "actives_first";
}

std::string_view to_string(StopReason reason) noexcept
{
    switch (reason) {
    case StopReason::single_survivor:
        return "single_survivor";
    case StopReason::p0_satisfied:
        return "p0_satisfied";
    case StopReason::max_splits:
        break;
    }
    return "max_splits";
}

void RaceConfig::validate() const
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1)");
    }
    if (p0 && !(*p0 > 0.0)) {
        throw ConfigError("p0 must be > 0");
    }
    if (folds < 2) {
        throw ConfigError("fold count must be >= 2");
    }
    if (blocking == Blocking::splits_only && max_splits < 2) {
        throw ConfigError("splits-as-blocks racing needs max_splits >= 2");
    }
    if (max_splits < 1) {
        throw ConfigError("max_splits must be >= 1");
    }
    if (blocking == Blocking::actives_first && !metric.decomposable()) {
        throw ConfigError("metric " + metric.name() + " is not decomposable; observation blocking is unavailable");
    }
}

std::optional<CvEntry> CvCache::find(const std::string& model_id, std::uint64_t split_seed) const
{
    std::lock_guard lock(mutex_);
    auto it = entries_.find({model_id, split_seed});
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void CvCache::insert(const std::string& model_id, std::uint64_t split_seed, CvEntry entry)
{
    std::lock_guard lock(mutex_);
    entries_.insert_or_assign({model_id, split_seed}, std::move(entry));
}

std::size_t CvCache::size() const
{
    std::lock_guard lock(mutex_);
    return entries_.size();
}

double p0_gap(std::span<const double> sorted_means, std::size_t m, std::size_t blocks, double mse, double alpha,
              const stats::QuantileFn& quantile)
{
    if (m < 2 || sorted_means.size() < 2) {
        throw std::invalid_argument("p0 gap needs at least two models");
    }
    return sorted_means[1] - sorted_means[0] + stats::tukey_value(alpha, m, blocks, mse, quantile);
}

bool check_p0_stop(std::span<const double> sorted_means, std::size_t m, std::size_t blocks, double mse,
                   double alpha, double p0, const stats::QuantileFn& quantile)
{
    if (m <= 1) {
        return true;
    }
    return p0_gap(sorted_means, m, blocks, mse, alpha, quantile) < p0;
}

std::size_t fit_count(std::span<const std::size_t> evaluated_per_split, std::size_t folds)
{
    return folds * std::accumulate(evaluated_per_split.begin(), evaluated_per_split.end(), std::size_t{0});
}

std::size_t fit_count(const RaceTrace& trace, std::size_t folds)
{
    std::vector<std::size_t> counts;
    counts.reserve(trace.iterations.size());
    for (const auto& it : trace.iterations) {
        counts.push_back(it.evaluated.size());
    }
    return fit_count(counts, folds);
}

namespace {

std::uint64_t plan_digest(const FoldPlan& plan)
{
    std::uint64_t h = hash_combine(plan.split_seed, plan.folds);
    for (auto f : plan.assignment) {
        h = hash_combine(h, f);
    }
    return h;
}

std::vector<ModelSpec> disambiguate(std::span<const ModelSpec> specs)
{
    std::vector<ModelSpec> out;
    std::map<std::string, std::size_t> seen;
    std::set<std::string> ids;
    for (const auto& s : specs) {
        ids.insert(s.model_id());
    }
    for (const auto& s : specs) {
        const std::size_t count = ++seen[s.model_id()];
        if (count == 1) {
            out.push_back(s);
            continue;
        }
        std::size_t suffix = count;
        while (ids.count(s.model_id() + "#" + std::to_string(suffix)) != 0) {
            ++suffix;
        }
        out.push_back(s.with_suffix(suffix));
        ids.insert(out.back().model_id());
    }
    return out;
}

class Racer {
public:
    Racer(std::span<const ModelSpec> specs, const Dataset& dataset, const RaceConfig& config, RaceContext& context,
          std::string label)
        : specs_(disambiguate(specs))
        , dataset_(dataset)
        , config_(config)
        , context_(context)
        , sign_(config.metric.orientation() == Orientation::maximize ? 1.0 : -1.0)
    {
        config_.validate();
        config_.metric.check_compatible(dataset_);
        if (specs_.size() < 2) {
            throw ConfigError("a race needs at least two models");
        }
        if (config_.blocking == Blocking::actives_first && config_.metric.block_scheme() == BlockScheme::actives &&
            dataset_.active_count() < 2) {
            throw DataError("observation blocking over actives needs at least 2 actives");
        }
        trace_.label = std::move(label);
        trace_.folds = config_.folds;
        trace_.metric = config_.metric.name();
        for (const auto& s : specs_) {
            trace_.models.push_back(s.model_id());
            trace_.families[s.model_id()] = s.family();
            views_.push_back(&resolve(s.descriptor_set()));
        }
        history_.resize(specs_.size());
    }

    RaceTrace run()
    {
        std::vector<std::size_t> survivors(specs_.size());
        std::iota(survivors.begin(), survivors.end(), std::size_t{0});
        std::size_t cum_fits = 0;
        std::size_t fresh_fits = 0;

        for (std::size_t split = 1; split <= config_.max_splits; ++split) {
            IterationRecord rec;
            rec.split = split;
            rec.split_seed = config_.base_seed + split;
            const auto plan = make_fold_plan(dataset_, config_.folds, rec.split_seed, config_.fold_options);
            rec.plan_hash = plan_digest(plan);

            const auto entries = evaluate(survivors, plan, fresh_fits);
            cum_fits += config_.folds * survivors.size();
            for (std::size_t r = 0; r < survivors.size(); ++r) {
                const auto i = survivors[r];
                history_[i].push_back(entries[r].value);
                rec.evaluated.push_back(specs_[i].model_id());
                rec.values[specs_[i].model_id()] = entries[r].value;
            }
            rec.cum_fits = cum_fits;
            rec.fresh_fits = fresh_fits;

            std::optional<stats::ScoreMatrix> matrix;
            if (split == 1 && config_.blocking == Blocking::actives_first) {
                matrix = contribution_matrix(survivors, entries);
                rec.metric_scale = static_cast<double>(matrix->blocks());
            } else if (split >= 2) {
                matrix = split_matrix(survivors, split);
            }

            std::vector<double> oriented_means;
            if (matrix) {
                auto outcome = stats::tukey_eliminate(*matrix, config_.alpha, Orientation::maximize, quantile());
                rec.block_kind = matrix->block_kind();
                rec.mse = outcome.mse;
                rec.error_df = outcome.error_df;
                rec.q = outcome.q_value;
                rec.tukey_T = outcome.tukey_T;
                for (std::size_t r = 0; r < survivors.size(); ++r) {
                    rec.means[specs_[survivors[r]].model_id()] = sign_ * outcome.means[r];
                }
                std::vector<std::size_t> kept;
                std::vector<double> kept_means;
                for (auto r : outcome.survivors) {
                    kept.push_back(r);
                    kept_means.push_back(outcome.means[r]);
                }
                for (const auto& id : outcome.eliminated_ids) {
                    rec.eliminated.push_back(id);
                }
                std::vector<std::size_t> next;
                for (auto r : kept) {
                    next.push_back(survivors[r]);
                }
                if (config_.p0 && kept.size() >= 2) {
                    rec.p0_gap = survivor_gap(matrix->select_models(kept), kept_means) * rec.metric_scale;
                }
                survivors = std::move(next);
                oriented_means = std::move(kept_means);
            } else {
                for (std::size_t r = 0; r < survivors.size(); ++r) {
                    rec.means[specs_[survivors[r]].model_id()] = entries[r].value;
                    oriented_means.push_back(sign_ * entries[r].value);
                }
            }
            set_leader(rec, survivors, oriented_means);
            for (auto i : survivors) {
                rec.survivors.push_back(specs_[i].model_id());
            }
            trace_.iterations.push_back(std::move(rec));

            const auto& last = trace_.iterations.back();
            if (survivors.size() == 1) {
                return finish(StopReason::single_survivor);
            }
            if (config_.p0 && last.p0_gap && *last.p0_gap < *config_.p0) {
                return finish(StopReason::p0_satisfied);
            }
        }
        return finish(StopReason::max_splits);
    }

private:
    const Dataset& resolve(const std::string& set) const
    {
        if (set == "all" || set == dataset_.descriptor_set_name()) {
            return dataset_;
        }
        auto it = context_.descriptor_sets.find(set);
        if (it == context_.descriptor_sets.end()) {
            throw ConfigError("unknown descriptor set '" + set + "'");
        }
        if (it->second.size() != dataset_.size()) {
            throw DataError("descriptor set '" + set + "' has a different number of observations");
        }
        return it->second;
    }

    stats::QuantileFn quantile() const
    {
        if (context_.quantiles == nullptr) {
            return {};
        }
        return [q = context_.quantiles](double a, std::size_t m, double df) { return (*q)(a, m, df); };
    }

    std::vector<CvEntry> evaluate(const std::vector<std::size_t>& models, const FoldPlan& plan,
                                  std::size_t& fresh_fits)
    {
        std::vector<CvEntry> entries(models.size());
        std::vector<std::size_t> pending; // positions in `models`
        for (std::size_t r = 0; r < models.size(); ++r) {
            const auto& id = specs_[models[r]].model_id();
            std::optional<CvEntry> hit;
            if (context_.cache != nullptr) {
                hit = context_.cache->find(id, plan.split_seed);
            }
            if (hit) {
                entries[r] = std::move(*hit);
            } else {
                pending.push_back(r);
            }
        }
        if (pending.empty()) {
            return entries;
        }

        std::vector<std::vector<std::size_t>> test(plan.folds);
        std::vector<std::vector<std::size_t>> train(plan.folds);
        for (std::size_t f = 0; f < plan.folds; ++f) {
            test[f] = plan.test_indices(f);
            train[f] = plan.train_indices(f);
        }
        std::vector<PredictionVector> predictions(pending.size());
        for (std::size_t p = 0; p < pending.size(); ++p) {
            predictions[p] = {std::vector<double>(dataset_.size(), 0.0), specs_[models[pending[p]]].model_id(),
                              plan.split_seed};
        }
        // One task per (model, fold); each writes only its own fold's slots.
        auto task = [&](std::size_t t) {
            const std::size_t p = t / plan.folds;
            const std::size_t f = t % plan.folds;
            const auto& spec = specs_[models[pending[p]]];
            const Dataset& view = *views_[models[pending[p]]];
            const auto model = fit(spec, view, train[f], derive_fit_seed(spec.model_id(), plan.split_seed, f));
            const auto scores = predict(*model, view, test[f]);
            for (std::size_t k = 0; k < test[f].size(); ++k) {
                predictions[p].scores[test[f][k]] = scores[k];
            }
        };
        const std::size_t tasks = pending.size() * plan.folds;
        if (context_.pool != nullptr) {
            context_.pool->parallel_for(tasks, task);
        } else {
            for (std::size_t t = 0; t < tasks; ++t) {
                task(t);
            }
        }
        fresh_fits += tasks;

        for (std::size_t p = 0; p < pending.size(); ++p) {
            CvEntry entry;
            entry.value = cvrace::evaluate(config_.metric, predictions[p], dataset_);
            if (config_.metric.decomposable()) {
                entry.contributions = contributions(config_.metric, predictions[p], dataset_);
            }
            if (context_.cache != nullptr) {
                context_.cache->insert(predictions[p].model_id, plan.split_seed, entry);
            }
            entries[pending[p]] = std::move(entry);
        }
        return entries;
    }

    stats::ScoreMatrix contribution_matrix(const std::vector<std::size_t>& models,
                                           const std::vector<CvEntry>& entries) const
    {
        std::vector<std::string> ids;
        std::vector<double> values;
        std::vector<std::string> blocks;
        for (std::size_t r = 0; r < models.size(); ++r) {
            if (!entries[r].contributions) {
                throw std::logic_error("missing contributions for " + specs_[models[r]].model_id());
            }
            const auto& c = *entries[r].contributions;
            if (r == 0) {
                for (auto b : c.block_ids) {
                    blocks.push_back("obs" + std::to_string(b));
                }
            } else if (c.contributions.size() != blocks.size()) {
                throw std::logic_error("contribution vectors differ in length");
            }
            ids.push_back(specs_[models[r]].model_id());
            for (double x : c.contributions) {
                values.push_back(sign_ * x);
            }
        }
        if (blocks.size() < 2) {
            throw DataError("observation blocking needs at least 2 blocks");
        }
        const auto kind = config_.metric.block_scheme() == BlockScheme::actives ? stats::BlockKind::actives
                                                                                 : stats::BlockKind::observations;
        return stats::ScoreMatrix(std::move(ids), std::move(blocks), kind, std::move(values));
    }

    stats::ScoreMatrix split_matrix(const std::vector<std::size_t>& models, std::size_t splits) const
    {
        std::vector<std::string> ids;
        std::vector<double> values;
        std::vector<std::string> blocks;
        for (std::size_t j = 1; j <= splits; ++j) {
            blocks.push_back("split" + std::to_string(j));
        }
        for (auto i : models) {
            ids.push_back(specs_[i].model_id());
            for (double v : history_[i]) {
                values.push_back(sign_ * v);
            }
        }
        return stats::ScoreMatrix(std::move(ids), std::move(blocks), stats::BlockKind::splits, std::move(values));
    }

    // Gap statistic over the models left after elimination, in matrix units.
    double survivor_gap(const stats::ScoreMatrix& kept, std::vector<double> means) const
    {
        std::sort(means.begin(), means.end(), std::greater<>());
        const auto anova = stats::block_anova_mse(kept);
        return p0_gap(means, kept.models(), kept.blocks(), anova.mse, config_.alpha, quantile());
    }

    void set_leader(IterationRecord& rec, const std::vector<std::size_t>& survivors,
                    const std::vector<double>& oriented_means) const
    {
        const double top = *std::max_element(oriented_means.begin(), oriented_means.end());
        std::vector<std::string> leaders;
        for (std::size_t r = 0; r < survivors.size(); ++r) {
            if (oriented_means[r] == top) {
                leaders.push_back(specs_[survivors[r]].model_id());
            }
        }
        std::sort(leaders.begin(), leaders.end());
        rec.leader = leaders.front();
        if (leaders.size() > 1) {
            rec.tied_leaders = leaders;
        }
    }

    RaceTrace finish(StopReason reason)
    {
        const auto& last = trace_.iterations.back();
        trace_.stop_reason = reason;
        trace_.winner = last.leader;
        trace_.tied_leaders = last.tied_leaders;
        trace_.survivors = last.survivors;
        return std::move(trace_);
    }

    std::vector<ModelSpec> specs_;
    const Dataset& dataset_;
    RaceConfig config_;
    RaceContext& context_;
    double sign_;
    std::vector<const Dataset*> views_;
    std::vector<std::vector<double>> history_; // metric value per split, per model
    RaceTrace trace_;
};

RaceConfig without_p0(RaceConfig config)
{
    config.p0.reset();
    return config;
}

RaceTrace single_model_trace(const ModelSpec& spec, const RaceConfig& config, std::string label)
{
    RaceTrace t;
    t.label = std::move(label);
    t.folds = config.folds;
    t.metric = config.metric.name();
    t.models = {spec.model_id()};
    t.families[spec.model_id()] = spec.family();
    t.winner = spec.model_id();
    t.survivors = {spec.model_id()};
    t.stop_reason = StopReason::single_survivor;
    return t;
}

} // namespace

RaceTrace race(std::span<const ModelSpec> specs, const Dataset& dataset, const RaceConfig& config,
               RaceContext& context, std::string label)
{
    return Racer(specs, dataset, config, context, std::move(label)).run();
}

RaceTrace race_algorithm1(std::span<const ModelSpec> specs, const Dataset& dataset, const RaceConfig& config,
                          RaceContext& context)
{
    if (config.blocking != Blocking::splits_only) {
        throw ConfigError("algorithm 1 uses splits as blocks");
    }
    return race(specs, dataset, without_p0(config), context, "algorithm1");
}

RaceTrace race_algorithm2(std::span<const ModelSpec> specs, const Dataset& dataset, const RaceConfig& config,
                          RaceContext& context)
{
    RaceConfig c = without_p0(config);
    c.blocking = Blocking::actives_first;
    return race(specs, dataset, c, context, "algorithm2");
}

RaceTrace race_algorithm3(std::span<const ModelSpec> specs, const Dataset& dataset, const RaceConfig& config,
                          RaceContext& context)
{
    if (!config.p0) {
        throw ConfigError("algorithm 3 needs a p0 margin");
    }
    return race(specs, dataset, config, context, "algorithm3");
}

TuneCompareResult tune_then_compare(std::span<const std::vector<ModelSpec>> groups, const Dataset& dataset,
                                    const RaceConfig& config, RaceContext& context, bool reuse_cv)
{
    if (groups.size() < 2) {
        throw ConfigError("tune-then-compare needs at least two groups");
    }
    CvCache local;
    RaceContext ctx = context;
    ctx.cache = reuse_cv ? (context.cache != nullptr ? context.cache : &local) : nullptr;

    TuneCompareResult result;
    std::vector<ModelSpec> winners;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& group = groups[g];
        const std::string label = "tune" + std::to_string(g + 1);
        if (group.empty()) {
            throw ConfigError("group " + std::to_string(g + 1) + " is empty");
        }
        RaceTrace trace = group.size() == 1 ? single_model_trace(group.front(), config, label)
                                            : race(group, dataset, config, ctx, label);
        // A disambiguated duplicate wins under its suffixed id; it is the same model as its base id.
        std::string base = trace.winner;
        if (auto hash = base.rfind('#'); hash != std::string::npos && hash > base.rfind(']')) {
            base.erase(hash);
        }
        const auto winner =
            std::find_if(group.begin(), group.end(), [&](const ModelSpec& s) { return s.model_id() == base; });
        if (winner == group.end()) {
            throw std::logic_error("race winner " + trace.winner + " not found in its group");
        }
        winners.push_back(*winner);
        if (!trace.iterations.empty()) {
            result.total_fits += trace.iterations.back().fresh_fits;
        }
        result.tuning.push_back(std::move(trace));
    }
    result.comparison = race(winners, dataset, config, ctx, "compare");
    if (!result.comparison.iterations.empty()) {
        result.total_fits += result.comparison.iterations.back().fresh_fits;
    }
    return result;
}

RaceTrace simultaneous_race(std::span<const std::vector<ModelSpec>> groups, const Dataset& dataset,
                            const RaceConfig& config, RaceContext& context)
{
    std::vector<ModelSpec> all;
    for (const auto& g : groups) {
        all.insert(all.end(), g.begin(), g.end());
    }
    return race(all, dataset, config, context, "simultaneous");
}

} // namespace cvrace
