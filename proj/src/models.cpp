#include "cvrace/models.hpp"

#include "cvrace/error.hpp"
#include "cvrace/rng.hpp"
#include "cvrace/thread_pool.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cvrace {

namespace {

std::string format_param(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

double require(const ParamMap& params, const std::string& family, const std::string& name)
{
    auto it = params.find(name);
    if (it == params.end()) {
        throw ConfigError(family + ": missing parameter '" + name + "'");
    }
    return it->second;
}

void reject_unknown(const ParamMap& params, const std::string& family, std::initializer_list<std::string_view> known)
{
    for (const auto& [name, value] : params) {
        if (std::find(known.begin(), known.end(), name) == known.end()) {
            throw ConfigError(family + ": unknown parameter '" + name + "'");
        }
        if (!std::isfinite(value)) {
            throw ConfigError(family + ": parameter '" + name + "' is not finite");
        }
    }
}

bool is_integer(double v) { return std::floor(v) == v; }

// ---------------------------------------------------------------- knn

class KnnModel final : public FittedModel {
public:
    KnnModel(std::vector<std::size_t> train, const Dataset& dataset, std::size_t k, double p)
        : FittedModel(std::move(train))
        , k_(k)
        , p_(p)
        , dim_(dataset.dimension())
    {
        const auto& idx = training_indices();
        rows_.reserve(idx.size() * dim_);
        responses_.reserve(idx.size());
        for (auto i : idx) {
            auto row = dataset.descriptors(i);
            rows_.insert(rows_.end(), row.begin(), row.end());
            responses_.push_back(dataset.response(i));
        }
    }

    std::vector<double> predict(const Dataset& dataset, std::span<const std::size_t> query) const override
    {
        if (dataset.dimension() != dim_) {
            throw std::invalid_argument("knn: query dimension does not match training data");
        }
        const auto& idx = training_indices();
        const std::size_t n_train = idx.size();
        std::vector<std::pair<double, std::size_t>> dist(n_train);
        std::vector<double> out;
        out.reserve(query.size());
        for (auto q : query) {
            auto x = dataset.descriptors(q);
            for (std::size_t t = 0; t < n_train; ++t) {
                const double* r = rows_.data() + t * dim_;
                double d = 0.0;
                if (p_ == 2.0) {
                    for (std::size_t j = 0; j < dim_; ++j) {
                        const double e = x[j] - r[j];
                        d += e * e;
                    }
                } else {
                    for (std::size_t j = 0; j < dim_; ++j) {
                        d += std::abs(x[j] - r[j]);
                    }
                }
                dist[t] = {d, t};
            }
            // Training positions are in ascending dataset-index order, so the
            // pair ordering breaks distance ties by ascending training index.
            std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_ - 1), dist.end());
            double active = 0.0;
            for (std::size_t t = 0; t < k_; ++t) {
                active += responses_[dist[t].second];
            }
            out.push_back(active / static_cast<double>(k_));
        }
        return out;
    }

private:
    std::size_t k_;
    double p_;
    std::size_t dim_;
    std::vector<double> rows_;
    std::vector<double> responses_;
};

class KnnAdapter final : public ModelAdapter {
public:
    std::string family() const override { return "knn"; }

    ParamMap defaults() const override { return {{"p", 2.0}}; }

    std::vector<std::string> identity_params() const override { return {"k"}; }

    ParamMap validate(ParamMap params) const override
    {
        reject_unknown(params, "knn", {"k", "p"});
        const double k = require(params, "knn", "k");
        if (!(k >= 1.0) || !is_integer(k)) {
            throw ConfigError("knn: k must be a positive integer");
        }
        params.try_emplace("p", 2.0);
        if (params["p"] != 1.0 && params["p"] != 2.0) {
            throw ConfigError("knn: p must be 1 (Manhattan) or 2 (Euclidean)");
        }
        return params;
    }

    std::unique_ptr<FittedModel> fit(const ParamMap& params, const Dataset& dataset,
                                     std::span<const std::size_t> train, std::uint64_t) const override
    {
        if (train.empty()) {
            throw DataError("knn: empty training set");
        }
        const auto k = static_cast<std::size_t>(params.at("k"));
        if (k > train.size()) {
            throw DataError("knn: k = " + std::to_string(k) + " exceeds training size " +
                            std::to_string(train.size()));
        }
        std::vector<std::size_t> idx(train.begin(), train.end());
        std::sort(idx.begin(), idx.end());
        return std::make_unique<KnnModel>(std::move(idx), dataset, k, params.at("p"));
    }
};

// ---------------------------------------------------------------- nnet

double logistic(double a) { return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a)); }

// log(1 + e^a) without overflow.
double softplus(double a) { return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

class NnetModel final : public FittedModel {
public:
    NnetModel(std::vector<std::size_t> train, nnet::Shape shape, std::vector<double> center,
              std::vector<double> scale, nnet::TrainingResult result)
        : FittedModel(std::move(train))
        , shape_(shape)
        , center_(std::move(center))
        , scale_(std::move(scale))
        , result_(std::move(result))
    {
    }

    std::vector<double> predict(const Dataset& dataset, std::span<const std::size_t> query) const override
    {
        if (dataset.dimension() != shape_.inputs) {
            throw std::invalid_argument("nnet: query dimension does not match training data");
        }
        std::vector<double> x(shape_.inputs);
        std::vector<double> out;
        out.reserve(query.size());
        for (auto q : query) {
            auto row = dataset.descriptors(q);
            for (std::size_t j = 0; j < shape_.inputs; ++j) {
                x[j] = (row[j] - center_[j]) / scale_[j];
            }
            out.push_back(nnet::forward(shape_, result_.weights, x));
        }
        return out;
    }

    std::string diagnostics() const override
    {
        char buf[128];
        std::snprintf(buf, sizeof buf, "converged=%s epochs=%zu gradient_norm=%.6g",
                      result_.converged ? "true" : "false", result_.epochs, result_.gradient_norm);
        return buf;
    }

private:
    nnet::Shape shape_;
    std::vector<double> center_;
    std::vector<double> scale_;
    nnet::TrainingResult result_;
};

class NnetAdapter final : public ModelAdapter {
public:
    std::string family() const override { return "nnet"; }

    ParamMap defaults() const override { return {{"epochs", 500.0}, {"step", 0.1}, {"tol", 1e-5}}; }

    std::vector<std::string> identity_params() const override { return {"decay", "size"}; }

    ParamMap validate(ParamMap params) const override
    {
        reject_unknown(params, "nnet", {"size", "decay", "epochs", "step", "tol"});
        const double size = require(params, "nnet", "size");
        if (!(size >= 1.0) || !is_integer(size)) {
            throw ConfigError("nnet: size must be a positive integer");
        }
        if (!(require(params, "nnet", "decay") > 0.0)) {
            throw ConfigError("nnet: decay must be > 0");
        }
        for (const auto& [k, v] : defaults()) {
            params.try_emplace(k, v);
        }
        if (!(params["epochs"] >= 1.0) || !is_integer(params["epochs"])) {
            throw ConfigError("nnet: epochs must be a positive integer");
        }
        if (!(params["step"] > 0.0) || !(params["tol"] >= 0.0)) {
            throw ConfigError("nnet: step must be > 0 and tol >= 0");
        }
        return params;
    }

    std::unique_ptr<FittedModel> fit(const ParamMap& params, const Dataset& dataset,
                                     std::span<const std::size_t> train, std::uint64_t fit_seed) const override
    {
        if (train.empty()) {
            throw DataError("nnet: empty training set");
        }
        bool has0 = false;
        bool has1 = false;
        for (auto i : train) {
            const double y = dataset.response(i);
            if (y < 0.0 || y > 1.0) {
                throw DataError("nnet: responses must lie in [0, 1] for the logistic output");
            }
            has0 = has0 || y < 0.5;
            has1 = has1 || y >= 0.5;
        }
        if (dataset.is_binary() && !(has0 && has1)) {
            throw DataError("nnet: training set contains a single class");
        }

        const nnet::Shape shape{dataset.dimension(), static_cast<std::size_t>(params.at("size"))};
        std::vector<double> center(shape.inputs, 0.0);
        std::vector<double> scale(shape.inputs, 0.0);
        const double n = static_cast<double>(train.size());
        for (auto i : train) {
            auto row = dataset.descriptors(i);
            for (std::size_t j = 0; j < shape.inputs; ++j) {
                center[j] += row[j] / n;
            }
        }
        for (auto i : train) {
            auto row = dataset.descriptors(i);
            for (std::size_t j = 0; j < shape.inputs; ++j) {
                scale[j] += (row[j] - center[j]) * (row[j] - center[j]) / n;
            }
        }
        for (auto& s : scale) {
            s = s > 0.0 ? std::sqrt(s) : 1.0;
        }
        std::vector<double> inputs;
        std::vector<double> targets;
        inputs.reserve(train.size() * shape.inputs);
        for (auto i : train) {
            auto row = dataset.descriptors(i);
            for (std::size_t j = 0; j < shape.inputs; ++j) {
                inputs.push_back((row[j] - center[j]) / scale[j]);
            }
            targets.push_back(dataset.response(i));
        }
        const nnet::Objective objective(shape, std::move(inputs), std::move(targets), params.at("decay"));
        nnet::TrainingOptions options;
        options.max_epochs = static_cast<std::size_t>(params.at("epochs"));
        options.step_size = params.at("step");
        options.gradient_tolerance = params.at("tol");
        auto result = nnet::train(objective, nnet::initial_weights(shape, fit_seed), options);
        return std::make_unique<NnetModel>(std::vector<std::size_t>(train.begin(), train.end()), shape,
                                           std::move(center), std::move(scale), std::move(result));
    }
};

} // namespace

std::shared_ptr<const ModelAdapter> knn_adapter()
{
    static const auto adapter = std::make_shared<const KnnAdapter>();
    return adapter;
}

std::shared_ptr<const ModelAdapter> nnet_adapter()
{
    static const auto adapter = std::make_shared<const NnetAdapter>();
    return adapter;
}

std::shared_ptr<const ModelAdapter> builtin_adapter(std::string_view family)
{
    if (family == "knn") {
        return knn_adapter();
    }
    if (family == "nnet") {
        return nnet_adapter();
    }
    throw ConfigError("unknown model family '" + std::string(family) + "'");
}

ModelSpec::ModelSpec(std::shared_ptr<const ModelAdapter> adapter, ParamMap params, std::string descriptor_set)
    : adapter_(std::move(adapter))
    , descriptor_set_(std::move(descriptor_set))
{
    if (!adapter_) {
        throw std::invalid_argument("model spec needs an adapter");
    }
    params_ = adapter_->validate(std::move(params));
    const auto identity = adapter_->identity_params();
    const auto defaults = adapter_->defaults();
    std::string id = adapter_->family() + "[";
    bool first = true;
    for (const auto& [name, value] : params_) {
        const bool always = std::find(identity.begin(), identity.end(), name) != identity.end();
        auto def = defaults.find(name);
        if (!always && def != defaults.end() && def->second == value) {
            continue;
        }
        id += (first ? "" : ",") + name + "=" + format_param(value);
        first = false;
    }
    id_ = id + "]@" + descriptor_set_;
}

ModelSpec ModelSpec::knn(int k, std::string descriptor_set)
{
    return ModelSpec(knn_adapter(), {{"k", static_cast<double>(k)}}, std::move(descriptor_set));
}

ModelSpec ModelSpec::nnet(int size, double decay, std::string descriptor_set)
{
    return ModelSpec(nnet_adapter(), {{"size", static_cast<double>(size)}, {"decay", decay}},
                     std::move(descriptor_set));
}

double ModelSpec::param(const std::string& name) const
{
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw std::out_of_range("model " + id_ + " has no parameter '" + name + "'");
    }
    return it->second;
}

ModelSpec ModelSpec::with_suffix(std::size_t n) const
{
    ModelSpec copy = *this;
    copy.id_ += "#" + std::to_string(n);
    return copy;
}

std::uint64_t derive_fit_seed(std::string_view model_id, std::uint64_t split_seed, std::size_t fold)
{
    return hash_combine(hash_combine(hash_string(model_id), split_seed), fold);
}

std::unique_ptr<FittedModel> fit(const ModelSpec& spec, const Dataset& dataset, std::span<const std::size_t> train,
                                 std::uint64_t fit_seed)
{
    return spec.adapter().fit(spec.params(), dataset, train, fit_seed);
}

std::vector<double> predict(const FittedModel& model, const Dataset& dataset, std::span<const std::size_t> query)
{
    auto scores = model.predict(dataset, query);
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw NumericalError("model produced a non-finite prediction");
        }
    }
    return scores;
}

PredictionVector cross_validate(const ModelSpec& spec, const Dataset& dataset, const FoldPlan& plan,
                                ThreadPool* pool, std::atomic<std::size_t>* fit_counter)
{
    if (plan.size() != dataset.size()) {
        throw std::invalid_argument("fold plan covers " + std::to_string(plan.size()) + " observations, dataset has " +
                                    std::to_string(dataset.size()));
    }
    PredictionVector out{std::vector<double>(dataset.size(), 0.0), spec.model_id(), plan.split_seed};
    auto run_fold = [&](std::size_t f) {
        const auto train = plan.train_indices(f);
        const auto test = plan.test_indices(f);
        const auto model = fit(spec, dataset, train, derive_fit_seed(spec.model_id(), plan.split_seed, f));
        const auto scores = predict(*model, dataset, test);
        for (std::size_t t = 0; t < test.size(); ++t) {
            out.scores[test[t]] = scores[t];
        }
    };
    if (pool != nullptr) {
        pool->parallel_for(plan.folds, run_fold);
    } else {
        for (std::size_t f = 0; f < plan.folds; ++f) {
            run_fold(f);
        }
    }
    if (fit_counter != nullptr) {
        fit_counter->fetch_add(plan.folds);
    }
    return out;
}

namespace nnet {

double forward(const Shape& shape, std::span<const double> weights, std::span<const double> x)
{
    const std::size_t stride = shape.inputs + 1;
    const double* out_w = weights.data() + shape.hidden * stride;
    double a = out_w[shape.hidden];
    for (std::size_t k = 0; k < shape.hidden; ++k) {
        const double* w = weights.data() + k * stride;
        double z = w[shape.inputs];
        for (std::size_t j = 0; j < shape.inputs; ++j) {
            z += w[j] * x[j];
        }
        a += out_w[k] * logistic(z);
    }
    return logistic(a);
}

Objective::Objective(Shape shape, std::vector<double> inputs, std::vector<double> targets, double decay)
    : shape_(shape)
    , inputs_(std::move(inputs))
    , targets_(std::move(targets))
    , decay_(decay)
{
    if (targets_.empty() || inputs_.size() != targets_.size() * shape_.inputs) {
        throw std::invalid_argument("nnet objective: inputs do not match targets");
    }
}

double Objective::value(std::span<const double> weights) const
{
    std::vector<double> scratch(weights.size());
    return value_and_gradient(weights, scratch);
}

double Objective::value_and_gradient(std::span<const double> weights, std::span<double> gradient) const
{
    const std::size_t d = shape_.inputs;
    const std::size_t h = shape_.hidden;
    const std::size_t stride = d + 1;
    if (weights.size() != shape_.parameter_count() || gradient.size() != weights.size()) {
        throw std::invalid_argument("nnet objective: wrong weight count");
    }
    std::fill(gradient.begin(), gradient.end(), 0.0);
    const double* out_w = weights.data() + h * stride;
    double* out_g = gradient.data() + h * stride;
    std::vector<double> hidden(h);
    double loss = 0.0;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
        const double* x = inputs_.data() + i * d;
        double a = out_w[h];
        for (std::size_t k = 0; k < h; ++k) {
            const double* w = weights.data() + k * stride;
            double z = w[d];
            for (std::size_t j = 0; j < d; ++j) {
                z += w[j] * x[j];
            }
            hidden[k] = logistic(z);
            a += out_w[k] * hidden[k];
        }
        const double y = targets_[i];
        loss += softplus(a) - y * a;
        const double delta = logistic(a) - y;
        out_g[h] += delta;
        for (std::size_t k = 0; k < h; ++k) {
            out_g[k] += delta * hidden[k];
            const double back = delta * out_w[k] * hidden[k] * (1.0 - hidden[k]);
            double* g = gradient.data() + k * stride;
            for (std::size_t j = 0; j < d; ++j) {
                g[j] += back * x[j];
            }
            g[d] += back;
        }
    }
    double penalty = 0.0;
    for (std::size_t p = 0; p < weights.size(); ++p) {
        const bool bias = p == h * stride + h || (p < h * stride && p % stride == d);
        if (bias) {
            continue;
        }
        penalty += weights[p] * weights[p];
        gradient[p] += 2.0 * decay_ * weights[p];
    }
    const double scale = 1.0 / static_cast<double>(targets_.size());
    for (auto& g : gradient) {
        g *= scale;
    }
    return (loss + decay_ * penalty) * scale;
}

namespace {

double norm2(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

} // namespace

TrainingResult train(const Objective& objective, std::vector<double> initial, const TrainingOptions& options)
{
    TrainingResult result;
    result.weights = std::move(initial);
    std::vector<double> grad(result.weights.size());
    std::vector<double> trial(result.weights.size());
    std::vector<double> trial_grad(result.weights.size());
    double f = objective.value_and_gradient(result.weights, grad);
    if (!std::isfinite(f)) {
        throw NumericalError("nnet: non-finite objective at initial weights");
    }
    result.objective_trace.push_back(f);
    result.gradient_norm = norm2(grad);
    for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
        if (result.gradient_norm < options.gradient_tolerance) {
            result.converged = true;
            break;
        }
        double step = options.step_size;
        bool accepted = false;
        for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
            for (std::size_t p = 0; p < trial.size(); ++p) {
                trial[p] = result.weights[p] - step * grad[p];
            }
            const double ft = objective.value_and_gradient(trial, trial_grad);
            if (std::isfinite(ft) && ft <= f) {
                result.weights.swap(trial);
                grad.swap(trial_grad);
                f = ft;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No descent along the gradient at any tried step: numerically stationary.
            result.converged = true;
            break;
        }
        result.epochs = epoch + 1;
        result.objective_trace.push_back(f);
        result.gradient_norm = norm2(grad);
    }
    if (!result.converged && result.gradient_norm < options.gradient_tolerance) {
        result.converged = true;
    }
    return result;
}

std::vector<double> initial_weights(const Shape& shape, std::uint64_t seed)
{
    CounterRng rng(seed);
    std::vector<double> w(shape.parameter_count());
    for (auto& x : w) {
        x = rng.uniform(-0.5, 0.5);
    }
    return w;
}

} // namespace nnet

} // namespace cvrace
