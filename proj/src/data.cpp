#include "cvrace/data.hpp"

#include "cvrace/error.hpp"
#include "cvrace/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace cvrace {

std::string_view to_string(ResponseKind kind) noexcept
{
    return kind == ResponseKind::binary ? "binary" : "continuous";
}

Dataset::Dataset(std::vector<std::string> descriptor_names, std::vector<double> descriptors,
                 std::vector<double> responses, std::string descriptor_set_name)
    : names_(std::move(descriptor_names))
    , values_(std::move(descriptors))
    , responses_(std::move(responses))
    , set_name_(std::move(descriptor_set_name))
{
    if (names_.empty()) {
        throw DataError("dataset has no descriptor columns");
    }
    if (values_.size() != responses_.size() * names_.size()) {
        throw DataError("descriptor matrix size does not match n * d");
    }
    for (double x : values_) {
        if (!std::isfinite(x)) {
            throw DataError("non-finite descriptor value");
        }
    }
    bool binary = true;
    for (double y : responses_) {
        if (!std::isfinite(y)) {
            throw DataError("non-finite response value");
        }
        binary = binary && (y == 0.0 || y == 1.0);
    }
    kind_ = binary ? ResponseKind::binary : ResponseKind::continuous;
    if (binary) {
        for (std::size_t i = 0; i < responses_.size(); ++i) {
            if (responses_[i] == 1.0) {
                actives_.push_back(i);
            }
        }
    }
}

Dataset Dataset::select_columns(std::span<const std::string> columns, std::string descriptor_set_name) const
{
    std::vector<std::size_t> index;
    index.reserve(columns.size());
    for (const auto& c : columns) {
        auto it = std::find(names_.begin(), names_.end(), c);
        if (it == names_.end()) {
            throw DataError("descriptor set '" + descriptor_set_name + "' names unknown column '" + c + "'");
        }
        index.push_back(static_cast<std::size_t>(it - names_.begin()));
    }
    std::vector<double> values;
    values.reserve(size() * index.size());
    for (std::size_t i = 0; i < size(); ++i) {
        auto row = descriptors(i);
        for (auto j : index) {
            values.push_back(row[j]);
        }
    }
    return Dataset({columns.begin(), columns.end()}, std::move(values), responses_, std::move(descriptor_set_name));
}

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

std::string location(const std::filesystem::path& path, std::size_t row, std::string_view column)
{
    std::ostringstream os;
    os << path.string() << ": row " << row << ", column '" << column << "'";
    return os.str();
}

} // namespace

Dataset load_csv(const std::filesystem::path& path, std::string_view response_column)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + ": missing header row");
    }
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        line.erase(0, 3);
    }
    std::vector<std::string> header;
    for (auto f : split_fields(line)) {
        header.emplace_back(f);
    }
    auto resp_it = std::find(header.begin(), header.end(), response_column);
    if (resp_it == header.end()) {
        throw DataError(path.string() + ": response column '" + std::string(response_column) + "' not in header");
    }
    const auto resp_col = static_cast<std::size_t>(resp_it - header.begin());
    std::vector<std::string> names;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j != resp_col) {
            names.push_back(header[j]);
        }
    }

    std::vector<double> values;
    std::vector<double> responses;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            std::ostringstream os;
            os << path.string() << ": row " << row << " has " << fields.size() << " fields, header has "
               << header.size();
            throw DataError(os.str());
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            const auto f = fields[j];
            if (f.empty()) {
                throw DataError(location(path, row, header[j]) + ": missing value");
            }
            double x = 0.0;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), x);
            if (ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(x)) {
                throw DataError(location(path, row, header[j]) + ": non-numeric value '" + std::string(f) + "'");
            }
            if (j == resp_col) {
                responses.push_back(x);
            } else {
                values.push_back(x);
            }
        }
    }
    if (responses.size() < 2) {
        throw DataError(path.string() + ": fewer than 2 data rows");
    }
    return Dataset(std::move(names), std::move(values), std::move(responses), "all");
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path, std::string_view response_column)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    for (const auto& name : dataset.descriptor_names()) {
        out << name << ',';
    }
    out << response_column << '\n';
    char buf[32];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (double x : dataset.descriptors(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", x);
            out << buf << ',';
        }
        std::snprintf(buf, sizeof buf, "%.17g", dataset.response(i));
        out << buf << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

std::vector<std::size_t> FoldPlan::test_indices(std::size_t fold) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] == fold) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> FoldPlan::train_indices(std::size_t fold) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] != fold) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const
{
    std::vector<std::size_t> sizes(folds, 0);
    for (auto f : assignment) {
        ++sizes[f];
    }
    return sizes;
}

namespace {

void shuffle(std::vector<std::size_t>& v, CounterRng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

void check_folds(std::size_t n, std::size_t v)
{
    if (v < 2 || v > n) {
        throw std::invalid_argument("fold count " + std::to_string(v) + " outside [2, " + std::to_string(n) + "]");
    }
}

} // namespace

FoldPlan make_fold_plan(std::size_t n, std::size_t v, std::uint64_t split_seed)
{
    check_folds(n, v);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    CounterRng rng(split_seed);
    shuffle(perm, rng);
    FoldPlan plan{split_seed, v, std::vector<std::uint32_t>(n)};
    for (std::size_t p = 0; p < n; ++p) {
        plan.assignment[perm[p]] = static_cast<std::uint32_t>(p % v);
    }
    return plan;
}

FoldPlan make_fold_plan(const Dataset& dataset, std::size_t v, std::uint64_t split_seed, FoldOptions options)
{
    if (!options.stratified || !dataset.is_binary()) {
        return make_fold_plan(dataset.size(), v, split_seed);
    }
    check_folds(dataset.size(), v);
    std::vector<std::size_t> actives = dataset.actives();
    std::vector<std::size_t> inactives;
    inactives.reserve(dataset.size() - actives.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset.response(i) != 1.0) {
            inactives.push_back(i);
        }
    }
    CounterRng rng(split_seed);
    shuffle(actives, rng);
    shuffle(inactives, rng);
    FoldPlan plan{split_seed, v, std::vector<std::uint32_t>(dataset.size())};
    // One continuous round-robin over actives then inactives keeps fold sizes within 1.
    std::size_t p = 0;
    for (auto i : actives) {
        plan.assignment[i] = static_cast<std::uint32_t>(p++ % v);
    }
    for (auto i : inactives) {
        plan.assignment[i] = static_cast<std::uint32_t>(p++ % v);
    }
    return plan;
}

Dataset generate_synthetic(const SyntheticSpec& spec)
{
    if (spec.n < 10) {
        throw std::invalid_argument("synthetic n must be >= 10");
    }
    if (spec.d < 1) {
        throw std::invalid_argument("synthetic d must be >= 1");
    }
    if (!(spec.active_rate > 0.0 && spec.active_rate < 1.0)) {
        throw std::invalid_argument("active_rate must lie in (0, 1)");
    }
    if (!std::isfinite(spec.signal)) {
        throw std::invalid_argument("signal must be finite");
    }
    const auto n_active = static_cast<std::size_t>(std::llround(static_cast<double>(spec.n) * spec.active_rate));
    if (n_active < 1 || n_active >= spec.n) {
        throw std::invalid_argument("active_rate yields no actives or no inactives");
    }

    CounterRng rng(spec.seed);
    std::vector<double> direction(spec.d);
    double norm = 0.0;
    while (norm == 0.0) {
        norm = 0.0;
        for (auto& x : direction) {
            x = rng.normal();
            norm += x * x;
        }
    }
    norm = std::sqrt(norm);
    for (auto& x : direction) {
        x /= norm;
    }

    std::vector<std::size_t> perm(spec.n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle(perm, rng);
    std::vector<double> responses(spec.n, 0.0);
    for (std::size_t p = 0; p < n_active; ++p) {
        responses[perm[p]] = 1.0;
    }

    std::vector<double> values(spec.n * spec.d);
    for (std::size_t i = 0; i < spec.n; ++i) {
        for (std::size_t j = 0; j < spec.d; ++j) {
            double x = rng.normal();
            if (responses[i] == 1.0) {
                x += spec.signal * direction[j];
            }
            values[i * spec.d + j] = x;
        }
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < spec.d; ++j) {
        names.push_back("x" + std::to_string(j + 1));
    }
    return Dataset(std::move(names), std::move(values), std::move(responses), "all");
}

} // namespace cvrace
