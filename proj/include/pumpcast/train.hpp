#ifndef PUMPCAST_TRAIN_HPP
#define PUMPCAST_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pumpcast/network.hpp"
#include "pumpcast/optimizers.hpp"
#include "pumpcast/timeseries.hpp"

namespace pumpcast {

struct TrainingConfig {
    OptimizerConfig optimizer;
    int epochs = 200;
    int batch_size = 128;
    std::optional<double> clip_norm;  // global-norm clip, off by default
    bool shuffle = true;
    std::uint64_t seed = 42;

    void validate() const {
        if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
        if (batch_size < 1)
            throw std::invalid_argument("batch_size must be >= 1");
        optimizer.validate();
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

class TrainingDivergence : public NumericError {
public:
    TrainingDivergence(int epoch, const std::string& what)
        : NumericError(what), epoch(epoch) {}
    int epoch;
};

/// One training sample in sequence form.
struct SequenceSample {
    std::vector<Vector> steps;
    Vector target;
};

inline std::vector<SequenceSample> to_samples(const Network& net,
                                              const SupervisedWindowSet& ws) {
    const SequenceLayout layout = sequence_layout_from(ws.lags);
    std::vector<SequenceSample> out(ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) {
        std::span<const double> row(ws.inputs.data.data() + i * ws.inputs.cols,
                                    ws.inputs.cols);
        out[i].steps = net.spec.recurrent()
                           ? to_sequence(layout, row)
                           : std::vector<Vector>{Vector(row.begin(), row.end())};
        out[i].target.assign(
            ws.targets.data.begin() + static_cast<std::ptrdiff_t>(i * ws.targets.cols),
            ws.targets.data.begin() +
                static_cast<std::ptrdiff_t>((i + 1) * ws.targets.cols));
    }
    return out;
}

/// Forward + backward for one sample; accumulates the gradient of this
/// sample's sum of squared errors into `grads` and returns that sum.
inline double accumulate_sample_gradients(const Network& net,
                                          const SequenceSample& sample,
                                          const DropoutMasks& masks,
                                          NetworkGrads& grads) {
    ForwardCache cache;
    const Vector& pred = net.forward(sample.steps, masks, cache);
    require_shape(pred.size() == sample.target.size(),
                  "target/horizon mismatch");
    Vector d_out(pred.size());
    double sse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - sample.target[i];
        sse += r * r;
        d_out[i] = 2.0 * r;
    }
    net.backward(cache, d_out, masks, grads);
    return sse;
}

template <typename NetLike>
inline void scale_tensors(NetLike& grads, double factor) {
    visit_tensors(grads, [factor](const std::string&, std::span<double> v) {
        for (double& x : v) x *= factor;
    });
}

/**
 * Gradient of the batch mean-squared-error loss (mean over samples and the
 * H outputs jointly) with respect to every parameter. Returns the loss.
 */
inline double bptt_gradients(const Network& net,
                             std::span<const SequenceSample> batch,
                             NetworkGrads& grads) {
    require_shape(!batch.empty(), "empty batch");
    DropoutMasks identity = net.inference_masks(
        batch[0].steps.size());
    double sse = 0.0;
    for (const auto& sample : batch)
        sse += accumulate_sample_gradients(net, sample, identity, grads);
    const double denom =
        static_cast<double>(batch.size()) * static_cast<double>(batch[0].target.size());
    scale_tensors(grads, 1.0 / denom);
    return sse / denom;
}

/// Inference-mode MSE over a sample set (mean over samples and outputs).
inline double evaluate_mse(const Network& net,
                           std::span<const SequenceSample> samples) {
    require_shape(!samples.empty(), "empty evaluation set");
    ForwardCache cache;
    DropoutMasks identity = net.inference_masks(samples[0].steps.size());
    double sse = 0.0;
    std::size_t count = 0;
    for (const auto& s : samples) {
        const Vector& pred = net.forward(s.steps, identity, cache);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double r = pred[i] - s.target[i];
            sse += r * r;
        }
        count += pred.size();
    }
    return sse / static_cast<double>(count);
}

inline std::vector<TensorRef> tensor_refs(NetworkParams& p) {
    std::vector<TensorRef> refs;
    visit_tensors(p, [&](const std::string& name, std::span<double> v) {
        refs.push_back({name, v});
    });
    return refs;
}

inline std::vector<TensorRef> tensor_refs(NetworkGrads& g) {
    std::vector<TensorRef> refs;
    visit_tensors(g, [&](const std::string& name, std::span<double> v) {
        refs.push_back({name, v});
    });
    return refs;
}

inline double global_grad_norm(NetworkGrads& g) {
    double ss = 0.0;
    visit_tensors(g, [&](const std::string&, std::span<double> v) {
        for (double x : v) ss += x * x;
    });
    return std::sqrt(ss);
}

/**
 * Mini-batch training loop. Sequential batches over a per-epoch permutation
 * (identity when shuffle is off); per-epoch training MSE is the dropout-mode
 * running loss, validation MSE a full inference pass. Deterministic given
 * the seed. Throws TrainingDivergence on a non-finite loss.
 */
inline std::vector<EpochRecord> train(Network& net, const TrainingConfig& cfg,
                                      const SupervisedWindowSet& train_ws,
                                      const SupervisedWindowSet& val_ws) {
    cfg.validate();
    require_shape(train_ws.size() > 0, "empty training set");

    const std::vector<SequenceSample> train_samples = to_samples(net, train_ws);
    const std::vector<SequenceSample> val_samples =
        val_ws.size() > 0 ? to_samples(net, val_ws)
                          : std::vector<SequenceSample>{};
    const std::size_t n = train_samples.size();
    const std::size_t horizon = train_samples[0].target.size();
    const std::size_t n_steps = train_samples[0].steps.size();

    Optimizer optimizer(cfg.optimizer);
    Rng rng = make_rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochRecord> history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));
    NetworkGrads grads = net.make_zero_gradients();
    auto param_refs = tensor_refs(net.params);
    auto grad_refs = tensor_refs(grads);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
        double epoch_sse = 0.0;
        for (std::size_t start = 0; start < n;
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            visit_tensors(grads, [](const std::string&, std::span<double> v) {
                std::fill(v.begin(), v.end(), 0.0);
            });
            double batch_sse = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const DropoutMasks masks =
                    sample_dropout_masks(net.spec, n_steps, rng);
                batch_sse += accumulate_sample_gradients(
                    net, train_samples[order[k]], masks, grads);
            }
            const double denom = static_cast<double>(stop - start) *
                                 static_cast<double>(horizon);
            if (!std::isfinite(batch_sse))
                throw TrainingDivergence(
                    epoch, "training diverged (non-finite loss) at epoch " +
                               std::to_string(epoch));
            scale_tensors(grads, 1.0 / denom);
            if (cfg.clip_norm) {
                const double norm = global_grad_norm(grads);
                if (norm > *cfg.clip_norm && norm > 0.0)
                    scale_tensors(grads, *cfg.clip_norm / norm);
            }
            optimizer.step(param_refs, grad_refs);
            epoch_sse += batch_sse;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_mse =
            epoch_sse / (static_cast<double>(n) * static_cast<double>(horizon));
        rec.val_mse =
            val_samples.empty() ? 0.0 : evaluate_mse(net, val_samples);
        if (!std::isfinite(rec.train_mse) ||
            (!val_samples.empty() && !std::isfinite(rec.val_mse)))
            throw TrainingDivergence(
                epoch, "training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
        history.push_back(rec);
    }
    return history;
}

inline void write_history_csv(const std::string& path,
                              std::span<const EpochRecord> history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "epoch,train_mse,val_mse\n";
    char buf[96];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.epoch,
                      r.train_mse, r.val_mse);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::string architecture;
    std::string tensor;
    double max_rel_error = 0.0;
};

inline double batch_mse(const Network& net,
                        std::span<const SequenceSample> batch) {
    ForwardCache cache;
    DropoutMasks identity = net.inference_masks(batch[0].steps.size());
    double sse = 0.0;
    for (const auto& s : batch) {
        const Vector& pred = net.forward(s.steps, identity, cache);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double r = pred[i] - s.target[i];
            sse += r * r;
        }
    }
    return sse / (static_cast<double>(batch.size()) *
                  static_cast<double>(batch[0].target.size()));
}

/**
 * Compares analytic gradients against central finite differences on a
 * small random instance. Returns one entry per parameter tensor with the
 * max relative error over its elements.
 */
inline std::vector<GradCheckEntry> gradcheck_architecture(
    Architecture arch, std::uint64_t seed, int hidden_size = 3,
    int hidden_layers = 2, int n_steps = 4, int horizon = 2,
    double fd_step = 1e-5) {
    NetworkSpec spec;
    spec.architecture = arch;
    spec.hidden_layers = hidden_layers;
    spec.hidden_size = hidden_size;
    spec.step_input_dim = 2;
    spec.input_dim = arch == Architecture::Ffnn ? 4 : 2 * n_steps;
    spec.horizon = horizon;
    spec.dropout_rate = 0.0;
    spec.seed = seed;
    Network net = Network::initialize(spec);

    Rng rng = make_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t steps = spec.recurrent()
                                  ? static_cast<std::size_t>(n_steps)
                                  : 1;
    const std::size_t step_dim = spec.recurrent()
                                     ? static_cast<std::size_t>(spec.step_input_dim)
                                     : static_cast<std::size_t>(spec.input_dim);
    std::vector<SequenceSample> batch(2);
    for (auto& s : batch) {
        s.steps.assign(steps, Vector(step_dim));
        for (auto& st : s.steps)
            for (double& v : st) v = uniform_in(rng, -1.0, 1.0);
        s.target.resize(static_cast<std::size_t>(horizon));
        for (double& v : s.target) v = uniform_in(rng, -1.0, 1.0);
    }

    NetworkGrads grads = net.make_zero_gradients();
    bptt_gradients(net, batch, grads);

    std::vector<GradCheckEntry> report;
    auto grad_refs = tensor_refs(grads);
    auto param_refs = tensor_refs(net.params);
    for (std::size_t k = 0; k < param_refs.size(); ++k) {
        GradCheckEntry entry;
        entry.architecture = architecture_name(arch);
        entry.tensor = param_refs[k].name;
        for (std::size_t i = 0; i < param_refs[k].values.size(); ++i) {
            double& theta = param_refs[k].values[i];
            const double saved = theta;
            theta = saved + fd_step;
            const double lp = batch_mse(net, batch);
            theta = saved - fd_step;
            const double lm = batch_mse(net, batch);
            theta = saved;
            const double fd = (lp - lm) / (2.0 * fd_step);
            const double an = grad_refs[k].values[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            entry.max_rel_error =
                std::max(entry.max_rel_error, std::abs(fd - an) / denom);
        }
        report.push_back(entry);
    }
    return report;
}

inline std::vector<GradCheckEntry> gradcheck_all(std::uint64_t seed = 7) {
    std::vector<GradCheckEntry> all;
    for (Architecture a : {Architecture::Ffnn, Architecture::Rnn,
                           Architecture::Lstm, Architecture::Gru}) {
        auto part = gradcheck_architecture(a, seed);
        all.insert(all.end(), part.begin(), part.end());
    }
    return all;
}

}  // namespace pumpcast

#endif  // PUMPCAST_TRAIN_HPP
