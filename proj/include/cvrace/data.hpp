#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cvrace {

enum class ResponseKind { binary, continuous };

[[nodiscard]] std::string_view to_string(ResponseKind kind) noexcept;

// Read-only view of one row of a Dataset.
struct Observation {
    std::size_t id;
    std::span<const double> descriptors;
    double response;
};

// Observations with a dense descriptor matrix (row-major) and a response.
// Immutable after construction. For binary responses the active index list is
// derived from, and checked against, the response vector.
class Dataset {
public:
    Dataset(std::vector<std::string> descriptor_names, std::vector<double> descriptors,
            std::vector<double> responses, std::string descriptor_set_name = "all");

    [[nodiscard]] std::size_t size() const noexcept { return responses_.size(); }
    [[nodiscard]] std::size_t dimension() const noexcept { return names_.size(); }

    [[nodiscard]] std::span<const double> descriptors(std::size_t i) const noexcept
    {
        return {values_.data() + i * dimension(), dimension()};
    }
    [[nodiscard]] double response(std::size_t i) const noexcept { return responses_[i]; }
    [[nodiscard]] std::span<const double> responses() const noexcept { return responses_; }
    [[nodiscard]] Observation observation(std::size_t i) const noexcept
    {
        return {i, descriptors(i), responses_[i]};
    }

    [[nodiscard]] ResponseKind response_kind() const noexcept { return kind_; }
    [[nodiscard]] bool is_binary() const noexcept { return kind_ == ResponseKind::binary; }

    // Sorted indices with response 1. Empty for continuous data.
    [[nodiscard]] const std::vector<std::size_t>& actives() const noexcept { return actives_; }
    [[nodiscard]] std::size_t active_count() const noexcept { return actives_.size(); }

    [[nodiscard]] const std::vector<std::string>& descriptor_names() const noexcept { return names_; }
    [[nodiscard]] const std::string& descriptor_set_name() const noexcept { return set_name_; }

    // Restrict to the named columns, in the given order.
    [[nodiscard]] Dataset select_columns(std::span<const std::string> columns,
                                         std::string descriptor_set_name) const;

private:
    std::vector<std::string> names_;
    std::vector<double> values_;
    std::vector<double> responses_;
    std::string set_name_;
    ResponseKind kind_;
    std::vector<std::size_t> actives_;
};

// Parse a headed, comma-separated file. Every non-response column becomes a
// descriptor. Errors carry the offending row (1-based, header = 1) and column.
[[nodiscard]] Dataset load_csv(const std::filesystem::path& path, std::string_view response_column);

// Header "<descriptor names...>,<response_column>"; values with 17 significant
// digits so that load_csv reproduces the doubles exactly.
void write_csv(const Dataset& dataset, const std::filesystem::path& path,
               std::string_view response_column = "active");

struct FoldOptions {
    // Deal actives and inactives separately so each fold gets its share of
    // the rare class. Off by default.
    bool stratified = false;
};

// Assignment of n observations to v folds for one data split.
struct FoldPlan {
    std::uint64_t split_seed = 0;
    std::size_t folds = 0;
    std::vector<std::uint32_t> assignment;

    [[nodiscard]] std::size_t size() const noexcept { return assignment.size(); }
    [[nodiscard]] std::vector<std::size_t> test_indices(std::size_t fold) const;
    [[nodiscard]] std::vector<std::size_t> train_indices(std::size_t fold) const;
    [[nodiscard]] std::vector<std::size_t> fold_sizes() const;

    friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

// Seeded Fisher-Yates permutation of 0..n-1 dealt round-robin into v folds:
// the observation at permutation position p goes to fold p mod v.
[[nodiscard]] FoldPlan make_fold_plan(std::size_t n, std::size_t v, std::uint64_t split_seed);
[[nodiscard]] FoldPlan make_fold_plan(const Dataset& dataset, std::size_t v, std::uint64_t split_seed,
                                      FoldOptions options = {});

struct SyntheticSpec {
    std::size_t n = 500;
    std::size_t d = 5;
    double active_rate = 0.1;
    double signal = 2.0;
    std::uint64_t seed = 1;
};

// Binary dataset with round(n * active_rate) actives whose N(0, I) descriptors
// are shifted by `signal` along a seeded random unit direction.
[[nodiscard]] Dataset generate_synthetic(const SyntheticSpec& spec);

} // namespace cvrace
