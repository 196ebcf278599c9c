#pragma once

// Reference implementations the library is checked against. None of them call
// into the code under test.

#include "cvrace/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace testing {

class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("cvrace_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// One descriptor column holding the row index; handy when only the response matters.
inline cvrace::Dataset response_only(const std::vector<double>& responses)
{
    std::vector<double> x(responses.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<double>(i);
    }
    return cvrace::Dataset({"x"}, std::move(x), responses);
}

// Mean hit count over every way of choosing which members of the cutoff tie
// group make the selection. Scores are compared exactly.
inline double enumerated_hits(const std::vector<double>& scores, const std::vector<double>& responses,
                              std::size_t selection)
{
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double cut = sorted[selection - 1];
    double above_hits = 0;
    std::size_t above = 0;
    std::vector<int> tie_actives;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > cut) {
            ++above;
            above_hits += responses[i];
        } else if (scores[i] == cut) {
            tie_actives.push_back(responses[i] == 1.0 ? 1 : 0);
        }
    }
    const std::size_t take = selection - above;
    const std::size_t g = tie_actives.size();
    double total = 0;
    std::size_t resolutions = 0;
    for (std::uint32_t mask = 0; mask < (1u << g); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != take) {
            continue;
        }
        ++resolutions;
        double h = above_hits;
        for (std::size_t t = 0; t < g; ++t) {
            if (mask & (1u << t)) {
                h += tie_actives[t];
            }
        }
        total += h;
    }
    return total / static_cast<double>(resolutions);
}

// Two-way decomposition: SS_error = SS_total - SS_rows - SS_columns.
inline double long_form_block_mse(const std::vector<std::vector<double>>& y)
{
    const std::size_t m = y.size();
    const std::size_t b = y.front().size();
    double grand = 0;
    for (const auto& r : y) {
        for (double v : r) {
            grand += v;
        }
    }
    grand /= static_cast<double>(m * b);
    double ss_total = 0;
    double ss_rows = 0;
    double ss_cols = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double row = 0;
        for (std::size_t j = 0; j < b; ++j) {
            row += y[i][j];
            ss_total += (y[i][j] - grand) * (y[i][j] - grand);
        }
        row /= static_cast<double>(b);
        ss_rows += static_cast<double>(b) * (row - grand) * (row - grand);
    }
    for (std::size_t j = 0; j < b; ++j) {
        double col = 0;
        for (std::size_t i = 0; i < m; ++i) {
            col += y[i][j];
        }
        col /= static_cast<double>(m);
        ss_cols += static_cast<double>(m) * (col - grand) * (col - grand);
    }
    return (ss_total - ss_rows - ss_cols) / static_cast<double>((m - 1) * (b - 1));
}

// Monte Carlo estimate of P(Q > q) for the studentized range of m standard
// normals over an independent sqrt(chi2_df / df).
inline double monte_carlo_range_tail(std::size_t m, double df, double q, std::size_t samples, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    std::chi_squared_distribution<double> chi2(df);
    std::size_t exceed = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        double lo = z(gen);
        double hi = lo;
        for (std::size_t i = 1; i < m; ++i) {
            const double v = z(gen);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double scale = std::sqrt(chi2(gen) / df);
        if (hi - lo > q * scale) {
            ++exceed;
        }
    }
    return static_cast<double>(exceed) / static_cast<double>(samples);
}

// Area under the ROC curve with half credit for tied scores.
inline double auc(const std::vector<double>& scores, const std::vector<double>& labels)
{
    double credit = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1.0) {
            continue;
        }
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0.0) {
                continue;
            }
            pairs += 1;
            credit += scores[i] > scores[j] ? 1.0 : (scores[i] == scores[j] ? 0.5 : 0.0);
        }
    }
    return credit / pairs;
}

// Random scores on a coarse grid so that ties are common.
inline std::vector<double> quantized_scores(std::size_t n, int levels, std::mt19937_64& gen)
{
    std::uniform_int_distribution<int> pick(0, levels);
    std::vector<double> s(n);
    for (auto& v : s) {
        v = static_cast<double>(pick(gen)) / levels;
    }
    return s;
}

} // namespace testing
