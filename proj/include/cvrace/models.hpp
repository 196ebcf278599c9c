#pragma once

#include "cvrace/data.hpp"
#include "cvrace/metrics.hpp"

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cvrace {

class ThreadPool;

using ParamMap = std::map<std::string, double>;

// State produced by ModelAdapter::fit. Immutable; predict may be called from
// any number of threads.
class FittedModel {
public:
    explicit FittedModel(std::vector<std::size_t> training_indices) : training_(std::move(training_indices)) {}
    virtual ~FittedModel() = default;

    // Scores for the query rows, in query order.
    [[nodiscard]] virtual std::vector<double> predict(const Dataset& dataset,
                                                      std::span<const std::size_t> query) const = 0;

    [[nodiscard]] const std::vector<std::size_t>& training_indices() const noexcept { return training_; }

    // Free-form fit report (e.g. optimizer convergence); empty when there is nothing to say.
    [[nodiscard]] virtual std::string diagnostics() const { return {}; }

private:
    std::vector<std::size_t> training_;
};

// A model family. Implementations must be deterministic given
// (params, dataset, train indices, seed) so that parallel and serial runs
// agree bit for bit.
class ModelAdapter {
public:
    virtual ~ModelAdapter() = default;

    [[nodiscard]] virtual std::string family() const = 0;

    // Throws ConfigError for missing or out-of-range parameters. May fill in
    // defaults for parameters that were not given.
    [[nodiscard]] virtual ParamMap validate(ParamMap params) const = 0;

    // Parameters that appear in the model id even when left at their default.
    [[nodiscard]] virtual std::vector<std::string> identity_params() const = 0;

    [[nodiscard]] virtual ParamMap defaults() const = 0;

    [[nodiscard]] virtual std::unique_ptr<FittedModel> fit(const ParamMap& params, const Dataset& dataset,
                                                           std::span<const std::size_t> train,
                                                           std::uint64_t fit_seed) const = 0;
};

[[nodiscard]] std::shared_ptr<const ModelAdapter> knn_adapter();
[[nodiscard]] std::shared_ptr<const ModelAdapter> nnet_adapter();
// "knn" or "nnet"; throws ConfigError otherwise.
[[nodiscard]] std::shared_ptr<const ModelAdapter> builtin_adapter(std::string_view family);

// One candidate: a family, its parameters and the descriptor set it reads.
// The id is a pure function of those three, e.g. "knn[k=8]@carhart".
class ModelSpec {
public:
    ModelSpec(std::shared_ptr<const ModelAdapter> adapter, ParamMap params, std::string descriptor_set = "all");

    [[nodiscard]] static ModelSpec knn(int k, std::string descriptor_set = "all");
    [[nodiscard]] static ModelSpec nnet(int size, double decay, std::string descriptor_set = "all");

    [[nodiscard]] std::string family() const { return adapter_->family(); }
    [[nodiscard]] const ParamMap& params() const noexcept { return params_; }
    [[nodiscard]] double param(const std::string& name) const;
    [[nodiscard]] const std::string& descriptor_set() const noexcept { return descriptor_set_; }
    [[nodiscard]] const std::string& model_id() const noexcept { return id_; }
    [[nodiscard]] const ModelAdapter& adapter() const noexcept { return *adapter_; }

    // Copy with "#<n>" appended to the id; used to tell duplicate specs apart.
    [[nodiscard]] ModelSpec with_suffix(std::size_t n) const;

private:
    std::shared_ptr<const ModelAdapter> adapter_;
    ParamMap params_;
    std::string descriptor_set_;
    std::string id_;
};

// Hash of (model id, split seed, fold index); independent of execution order.
[[nodiscard]] std::uint64_t derive_fit_seed(std::string_view model_id, std::uint64_t split_seed, std::size_t fold);

[[nodiscard]] std::unique_ptr<FittedModel> fit(const ModelSpec& spec, const Dataset& dataset,
                                               std::span<const std::size_t> train, std::uint64_t fit_seed);

[[nodiscard]] std::vector<double> predict(const FittedModel& model, const Dataset& dataset,
                                          std::span<const std::size_t> query);

// Fits on the complement of each fold and predicts that fold, assembling one
// score per observation. Adds plan.folds to `fit_counter` when given.
[[nodiscard]] PredictionVector cross_validate(const ModelSpec& spec, const Dataset& dataset, const FoldPlan& plan,
                                              ThreadPool* pool = nullptr,
                                              std::atomic<std::size_t>* fit_counter = nullptr);

namespace nnet {

// Single hidden layer, logistic hidden and output units. Weight layout:
// hidden rows of (inputs + 1) input weights (bias last), then hidden + 1
// output weights (bias last).
struct Shape {
    std::size_t inputs = 0;
    std::size_t hidden = 0;

    [[nodiscard]] std::size_t parameter_count() const noexcept { return hidden * (inputs + 1) + hidden + 1; }
};

[[nodiscard]] double forward(const Shape& shape, std::span<const double> weights, std::span<const double> x);

// (1/n) * [sum_i cross_entropy_i + decay * sum of squared non-bias weights].
// The 1/n scaling leaves the minimizer of the unscaled objective unchanged.
class Objective {
public:
    Objective(Shape shape, std::vector<double> inputs, std::vector<double> targets, double decay);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] double value(std::span<const double> weights) const;
    double value_and_gradient(std::span<const double> weights, std::span<double> gradient) const;

private:
    Shape shape_;
    std::vector<double> inputs_; // row-major n x inputs
    std::vector<double> targets_;
    double decay_;
};

struct TrainingOptions {
    std::size_t max_epochs = 500;
    double step_size = 0.1;
    double gradient_tolerance = 1e-5;
    int max_halvings = 40;
};

struct TrainingResult {
    std::vector<double> weights;
    std::vector<double> objective_trace; // objective after each accepted step, initial value first
    double gradient_norm = 0.0;
    std::size_t epochs = 0;
    bool converged = false;
};

// Full-batch gradient descent. Each epoch tries the base step and halves it
// until the objective does not increase.
[[nodiscard]] TrainingResult train(const Objective& objective, std::vector<double> initial,
                                   const TrainingOptions& options);

// Seeded uniform(-0.5, 0.5) initial weights.
[[nodiscard]] std::vector<double> initial_weights(const Shape& shape, std::uint64_t seed);

} // namespace nnet

} // namespace cvrace
