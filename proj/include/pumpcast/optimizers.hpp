#ifndef PUMPCAST_OPTIMIZERS_HPP
#define PUMPCAST_OPTIMIZERS_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pumpcast/linalg.hpp"

namespace pumpcast {

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

enum class OptimizerKind { Adam, RmsProp, Sgd };

inline const char* optimizer_name(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Adam: return "adam";
        case OptimizerKind::RmsProp: return "rmsprop";
        case OptimizerKind::Sgd: return "sgd";
    }
    return "?";
}

inline std::optional<OptimizerKind> optimizer_from_name(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "rmsprop") return OptimizerKind::RmsProp;
    if (s == "sgd") return OptimizerKind::Sgd;
    // Adadelta/Adamax are recognized names without implementations here;
    // callers surface a clear error instead of a silent fallback.
    return std::nullopt;
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;     // Adam first-moment decay
    double beta2 = 0.999;   // Adam second-moment decay
    double epsilon = 1e-8;
    double rho = 0.9;       // RMSprop accumulator decay

    void validate() const {
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("learning rate must be > 0");
    }
};

/// A named view into one parameter tensor and its gradient.
struct TensorRef {
    std::string name;
    std::span<double> values;
};

/**
 * Per-tensor moment accumulators plus the step counter. State shapes are
 * created lazily on the first step and must mirror the parameters exactly
 * from then on.
 */
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    const OptimizerConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return step_count_; }

    /// Applies one update. `params` and `grads` must pair up one-to-one in
    /// the same order. Aborts on any non-finite gradient entry.
    void step(std::span<TensorRef> params, std::span<const TensorRef> grads) {
        if (params.size() != grads.size())
            throw std::invalid_argument("params/grads tensor count mismatch");
        for (std::size_t k = 0; k < grads.size(); ++k)
            if (!all_finite(grads[k].values))
                throw NumericError("non-finite gradient in tensor '" +
                                   grads[k].name + "' at step " +
                                   std::to_string(step_count_ + 1));
        if (first_.empty()) allocate(params);
        ++step_count_;

        switch (cfg_.kind) {
            case OptimizerKind::Sgd:
                for (std::size_t k = 0; k < params.size(); ++k) {
                    auto p = params[k].values;
                    auto g = grads[k].values;
                    for (std::size_t i = 0; i < p.size(); ++i)
                        p[i] -= cfg_.learning_rate * g[i];
                }
                break;
            case OptimizerKind::RmsProp:
                for (std::size_t k = 0; k < params.size(); ++k) {
                    auto p = params[k].values;
                    auto g = grads[k].values;
                    auto& v = second_[k];
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        v[i] = cfg_.rho * v[i] + (1.0 - cfg_.rho) * g[i] * g[i];
                        p[i] -= cfg_.learning_rate * g[i] /
                                (std::sqrt(v[i]) + cfg_.epsilon);
                    }
                }
                break;
            case OptimizerKind::Adam: {
                const double t = static_cast<double>(step_count_);
                const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
                const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
                for (std::size_t k = 0; k < params.size(); ++k) {
                    auto p = params[k].values;
                    auto g = grads[k].values;
                    auto& m = first_[k];
                    auto& v = second_[k];
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                        v[i] = cfg_.beta2 * v[i] +
                               (1.0 - cfg_.beta2) * g[i] * g[i];
                        const double m_hat = m[i] / bc1;
                        const double v_hat = v[i] / bc2;
                        p[i] -= cfg_.learning_rate * m_hat /
                                (std::sqrt(v_hat) + cfg_.epsilon);
                    }
                }
                break;
            }
        }
    }

    // Accumulator access for checkpointing.
    const std::vector<Vector>& first_moments() const { return first_; }
    const std::vector<Vector>& second_moments() const { return second_; }
    void restore(std::vector<Vector> first, std::vector<Vector> second,
                 std::int64_t steps) {
        first_ = std::move(first);
        second_ = std::move(second);
        step_count_ = steps;
    }

private:
    void allocate(std::span<TensorRef> params) {
        first_.clear();
        second_.clear();
        for (const auto& t : params) {
            first_.emplace_back(t.values.size(), 0.0);
            second_.emplace_back(t.values.size(), 0.0);
        }
    }

    OptimizerConfig cfg_;
    std::vector<Vector> first_;   // Adam m (unused by SGD/RMSprop)
    std::vector<Vector> second_;  // Adam v / RMSprop accumulator
    std::int64_t step_count_ = 0;
};

}  // namespace pumpcast

#endif  // PUMPCAST_OPTIMIZERS_HPP
