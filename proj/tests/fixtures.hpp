#pragma once

// Race states from a nine-model network study, rebuilt as concrete inputs.

#include "cvrace/models.hpp"
#include "cvrace/race.hpp"
#include "cvrace/stats.hpp"
#include "cvrace/studentized_range.hpp"

#include "cvrace/error.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace fixtures {

inline const std::vector<double> nine_model_means{17.5, 33.0, 27.0, 17.0, 30.0, 28.5, 16.5, 31.5, 29.0};

inline std::vector<std::string> model_names(std::size_t m)
{
    std::vector<std::string> ids;
    for (std::size_t i = 1; i <= m; ++i) {
        ids.push_back("model" + std::to_string(i));
    }
    return ids;
}

// Two splits per model. Split differences d_i = y_i1 - y_i2 are +-c for eight
// models and 0 for one, so sum (d_i - dbar)^2 = 8c^2, and with B = 2 the
// block mse is that sum over 16. c^2 = 6.78 gives mse 3.39.
inline cvrace::stats::ScoreMatrix nine_model_two_split_matrix()
{
    const double c = std::sqrt(6.78);
    std::vector<double> v;
    for (std::size_t i = 0; i < 9; ++i) {
        const double d = i == 8 ? 0.0 : (i % 2 == 0 ? c : -c);
        v.push_back(nine_model_means[i] + d / 2);
        v.push_back(nine_model_means[i] - d / 2);
    }
    return {model_names(9), {"split1", "split2"}, cvrace::stats::BlockKind::splits, v};
}

// Leader-margin statistic after each split of the nine-model NN race; splits
// 10 to 36 are not printed individually and are filled with values in [1, 2).
inline std::vector<double> study_gap_sequence()
{
    std::vector<double> g{10.59, 6.96, 5.08, 3.16, 3.27, 2.60, 2.14, 2.20, 1.67};
    for (int s = 10; s <= 36; ++s) {
        g.push_back(1.60 - 0.02 * (s - 10));
    }
    g.push_back(1.05);
    g.push_back(0.91);
    return g;
}

// A state (sorted means, m, B, mse) whose gap statistic equals `gap`: the two
// leading means differ by 0.5 and T = gap + 0.5.
struct GapState {
    std::vector<double> sorted_means;
    std::size_t m;
    std::size_t blocks;
    double mse;
};

inline GapState gap_state(double gap, std::size_t split, double alpha, const cvrace::stats::QuantileFn& quantile)
{
    GapState s;
    s.m = split <= 4 ? 6 : 5;
    s.blocks = split == 1 ? 60 : split;
    for (std::size_t i = 0; i < s.m; ++i) {
        s.sorted_means.push_back(30.0 - 0.5 * static_cast<double>(i));
    }
    const double q = quantile(alpha, s.m, static_cast<double>((s.m - 1) * (s.blocks - 1)));
    const double t = gap + 0.5;
    s.mse = static_cast<double>(s.blocks) * (t / q) * (t / q);
    return s;
}

// A model that ignores the descriptors and predicts a fixed level. Every
// score ties, so its hit count is the random-selection baseline.
class ConstantAdapter final : public cvrace::ModelAdapter {
public:
    std::string family() const override { return "constant"; }
    cvrace::ParamMap defaults() const override { return {}; }
    std::vector<std::string> identity_params() const override { return {"level"}; }
    cvrace::ParamMap validate(cvrace::ParamMap params) const override
    {
        if (params.size() != 1 || params.count("level") == 0) {
            throw cvrace::ConfigError("constant: needs exactly 'level'");
        }
        return params;
    }
    std::unique_ptr<cvrace::FittedModel> fit(const cvrace::ParamMap& params, const cvrace::Dataset&,
                                             std::span<const std::size_t> train, std::uint64_t) const override
    {
        return std::make_unique<Fitted>(std::vector<std::size_t>(train.begin(), train.end()), params.at("level"));
    }

private:
    class Fitted final : public cvrace::FittedModel {
    public:
        Fitted(std::vector<std::size_t> train, double level) : FittedModel(std::move(train)), level_(level) {}
        std::vector<double> predict(const cvrace::Dataset&, std::span<const std::size_t> query) const override
        {
            return std::vector<double>(query.size(), level_);
        }

    private:
        double level_;
    };
};

inline cvrace::ModelSpec constant_model(double level)
{
    return cvrace::ModelSpec(std::make_shared<const ConstantAdapter>(), {{"level", level}});
}

} // namespace fixtures
