#ifndef PUMPCAST_NETWORK_HPP
#define PUMPCAST_NETWORK_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pumpcast/cells.hpp"
#include "pumpcast/linalg.hpp"
#include "pumpcast/timeseries.hpp"

namespace pumpcast {

enum class Architecture { Ffnn, Rnn, Lstm, Gru };

inline const char* architecture_name(Architecture a) {
    switch (a) {
        case Architecture::Ffnn: return "ffnn";
        case Architecture::Rnn: return "rnn";
        case Architecture::Lstm: return "lstm";
        case Architecture::Gru: return "gru";
    }
    return "?";
}

inline std::optional<Architecture> architecture_from_name(
    const std::string& s) {
    if (s == "ffnn") return Architecture::Ffnn;
    if (s == "rnn") return Architecture::Rnn;
    if (s == "lstm") return Architecture::Lstm;
    if (s == "gru") return Architecture::Gru;
    return std::nullopt;
}

struct NetworkSpec {
    Architecture architecture = Architecture::Lstm;
    int hidden_layers = 2;
    int hidden_size = 128;
    int input_dim = 0;      // flat lag-vector width D
    int step_input_dim = 2; // per-step channel count for recurrent nets
    int horizon = 24;
    double dropout_rate = 0.35;
    std::uint64_t seed = 42;

    bool recurrent() const { return architecture != Architecture::Ffnn; }

    void validate() const {
        require_shape(hidden_layers >= 1, "hidden_layers must be >= 1");
        require_shape(hidden_size >= 1, "hidden_size must be >= 1");
        require_shape(horizon >= 1, "horizon must be >= 1");
        require_shape(input_dim >= 1, "input_dim must be >= 1");
        require_shape(dropout_rate >= 0.0 && dropout_rate < 1.0,
                      "dropout_rate must be in [0, 1)");
        if (recurrent())
            require_shape(step_input_dim >= 1, "step_input_dim must be >= 1");
    }
};

/**
 * How a flat lag vector unrolls into a time-major sequence: one step per
 * selected lag (union over channels), oldest first. A step carries only the
 * channels selected at that lag; the other channel reads as zero.
 */
struct SequenceLayout {
    std::vector<int> step_lags;  // descending, so oldest first
    std::vector<int> level_col;  // flat-row column per step, -1 if absent
    std::vector<int> rain_col;

    std::size_t steps() const { return step_lags.size(); }
};

inline SequenceLayout sequence_layout_from(const LagSelection& sel) {
    std::vector<int> all = sel.level_lags;
    all.insert(all.end(), sel.rainfall_lags.begin(), sel.rainfall_lags.end());
    std::sort(all.begin(), all.end(), std::greater<int>());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    SequenceLayout layout;
    layout.step_lags = all;
    layout.level_col.assign(all.size(), -1);
    layout.rain_col.assign(all.size(), -1);
    for (std::size_t s = 0; s < all.size(); ++s) {
        for (std::size_t i = 0; i < sel.level_lags.size(); ++i)
            if (sel.level_lags[i] == all[s])
                layout.level_col[s] = static_cast<int>(i);
        for (std::size_t i = 0; i < sel.rainfall_lags.size(); ++i)
            if (sel.rainfall_lags[i] == all[s])
                layout.rain_col[s] =
                    static_cast<int>(sel.level_lags.size() + i);
    }
    return layout;
}

inline std::vector<Vector> to_sequence(const SequenceLayout& layout,
                                       std::span<const double> flat_row) {
    std::vector<Vector> steps(layout.steps(), Vector(2, 0.0));
    for (std::size_t s = 0; s < layout.steps(); ++s) {
        if (layout.level_col[s] >= 0)
            steps[s][0] = flat_row[static_cast<std::size_t>(layout.level_col[s])];
        if (layout.rain_col[s] >= 0)
            steps[s][1] = flat_row[static_cast<std::size_t>(layout.rain_col[s])];
    }
    return steps;
}

// ---------------------------------------------------------------------------
// Parameters, gradients, tensor traversal
// ---------------------------------------------------------------------------

struct NetworkParams {
    std::vector<DenseLayerParams> dense_layers;
    std::vector<RnnCellParams> rnn_layers;
    std::vector<LstmCellParams> lstm_layers;
    std::vector<GruCellParams> gru_layers;
    DenseLayerParams head;  // horizon x hidden, linear
};

struct NetworkGrads {
    std::vector<DenseGrads> dense_layers;
    std::vector<RnnCellGrads> rnn_layers;
    std::vector<LstmCellGrads> lstm_layers;
    std::vector<GruCellGrads> gru_layers;
    DenseGrads head;
};

/// Visits every tensor in a fixed order shared by params and gradients.
/// fn(name, matrix_or_vector_data_span).
template <typename NetLike, typename Fn>
void visit_tensors(NetLike& net, Fn&& fn) {
    auto span_of = [](auto& tensor) {
        if constexpr (requires { tensor.data; })
            return std::span<double>(tensor.data);
        else
            return std::span<double>(tensor);
    };
    for (std::size_t l = 0; l < net.dense_layers.size(); ++l) {
        auto& p = net.dense_layers[l];
        const std::string base = "hidden" + std::to_string(l) + ".";
        fn(base + "weight", span_of(p.weight));
        fn(base + "bias", span_of(p.bias));
    }
    for (std::size_t l = 0; l < net.rnn_layers.size(); ++l) {
        auto& p = net.rnn_layers[l];
        const std::string base = "layer" + std::to_string(l) + ".";
        fn(base + "w_in", span_of(p.w_in));
        fn(base + "w_rec", span_of(p.w_rec));
        fn(base + "bias", span_of(p.bias));
    }
    for (std::size_t l = 0; l < net.lstm_layers.size(); ++l) {
        auto& p = net.lstm_layers[l];
        const std::string base = "layer" + std::to_string(l) + ".";
        fn(base + "w_in_i", span_of(p.w_in_i));
        fn(base + "w_rec_i", span_of(p.w_rec_i));
        fn(base + "peep_i", span_of(p.peep_i));
        fn(base + "bias_i", span_of(p.bias_i));
        fn(base + "w_in_f", span_of(p.w_in_f));
        fn(base + "w_rec_f", span_of(p.w_rec_f));
        fn(base + "peep_f", span_of(p.peep_f));
        fn(base + "bias_f", span_of(p.bias_f));
        fn(base + "w_in_o", span_of(p.w_in_o));
        fn(base + "w_rec_o", span_of(p.w_rec_o));
        fn(base + "peep_o", span_of(p.peep_o));
        fn(base + "bias_o", span_of(p.bias_o));
        fn(base + "w_in_c", span_of(p.w_in_c));
        fn(base + "w_rec_c", span_of(p.w_rec_c));
        fn(base + "bias_c", span_of(p.bias_c));
    }
    for (std::size_t l = 0; l < net.gru_layers.size(); ++l) {
        auto& p = net.gru_layers[l];
        const std::string base = "layer" + std::to_string(l) + ".";
        fn(base + "w_in_z", span_of(p.w_in_z));
        fn(base + "w_rec_z", span_of(p.w_rec_z));
        fn(base + "bias_z", span_of(p.bias_z));
        fn(base + "w_in_r", span_of(p.w_in_r));
        fn(base + "w_rec_r", span_of(p.w_rec_r));
        fn(base + "bias_r", span_of(p.bias_r));
        fn(base + "w_in_h", span_of(p.w_in_h));
        fn(base + "w_rec_h", span_of(p.w_rec_h));
        fn(base + "bias_h", span_of(p.bias_h));
    }
    fn(std::string("head.weight"), span_of(net.head.weight));
    fn(std::string("head.bias"), span_of(net.head.bias));
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/**
 * Inverted dropout as a standalone op. Training mode keeps each unit with
 * probability 1-rate and scales survivors by 1/(1-rate); inference mode is
 * the identity (a single un-thinned network at test time).
 */
inline Vector apply_dropout(std::span<const double> activations, double rate,
                            Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout rate must be in [0, 1)");
    Vector out(activations.begin(), activations.end());
    if (!training || rate == 0.0) return out;
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (double& v : out) v = keep(rng) ? v * scale : 0.0;
    return out;
}

/**
 * Pre-sampled multipliers (0 or 1/(1-rate)) for the edges where dropout
 * applies: outputs of every hidden layer on their way up to the next layer
 * or the head, never along the recurrent path.
 */
struct DropoutMasks {
    // masks[l][t]: layer l's output mask at step t. For FFNN there is a
    // single "step". For the top recurrent layer only the final step's h
    // feeds the head, so only that mask exists (t index 0).
    std::vector<std::vector<Vector>> masks;
    bool active = false;

    std::span<const double> at(std::size_t layer, std::size_t t) const {
        return masks[layer][t];
    }
};

inline DropoutMasks sample_dropout_masks(const NetworkSpec& spec,
                                         std::size_t n_steps, Rng& rng) {
    DropoutMasks m;
    const std::size_t layers = static_cast<std::size_t>(spec.hidden_layers);
    m.masks.resize(layers);
    if (spec.dropout_rate == 0.0) {
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t steps =
                (!spec.recurrent() || l + 1 == layers) ? 1 : n_steps;
            m.masks[l].assign(steps,
                              Vector(static_cast<std::size_t>(spec.hidden_size),
                                     1.0));
        }
        return m;
    }
    m.active = true;
    std::bernoulli_distribution keep(1.0 - spec.dropout_rate);
    const double scale = 1.0 / (1.0 - spec.dropout_rate);
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t steps =
            (!spec.recurrent() || l + 1 == layers) ? 1 : n_steps;
        m.masks[l].resize(steps);
        for (std::size_t t = 0; t < steps; ++t) {
            Vector& mask = m.masks[l][t];
            mask.resize(static_cast<std::size_t>(spec.hidden_size));
            for (double& v : mask) v = keep(rng) ? scale : 0.0;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct ForwardCache {
    std::vector<DenseCache> dense;                   // [layer]
    std::vector<std::vector<RnnStepCache>> rnn;      // [layer][step]
    std::vector<std::vector<LstmStepCache>> lstm;
    std::vector<std::vector<GruStepCache>> gru;
    std::vector<std::vector<Vector>> up_inputs;      // dropped outputs fed up
    DenseCache head;
    Vector output;
    std::size_t n_steps = 0;
};

class Network {
public:
    NetworkSpec spec;
    NetworkParams params;

    Network() = default;

    /// Seeded initialization: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for
    /// weights, zero biases, LSTM forget-gate bias +1.
    static Network initialize(const NetworkSpec& s) {
        s.validate();
        Network net;
        net.spec = s;
        Rng rng = make_rng(s.seed);
        const std::size_t hidden = static_cast<std::size_t>(s.hidden_size);
        const std::size_t layers = static_cast<std::size_t>(s.hidden_layers);
        const std::size_t first_in = s.recurrent()
                                         ? static_cast<std::size_t>(s.step_input_dim)
                                         : static_cast<std::size_t>(s.input_dim);

        auto init_matrix = [&](std::size_t r, std::size_t c) {
            Matrix m(r, c);
            init_uniform_fan_in(m, c, rng);
            return m;
        };

        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = (l == 0) ? first_in : hidden;
            switch (s.architecture) {
                case Architecture::Ffnn: {
                    DenseLayerParams p;
                    p.weight = init_matrix(hidden, in);
                    p.bias = Vector(hidden, 0.0);
                    net.params.dense_layers.push_back(std::move(p));
                    break;
                }
                case Architecture::Rnn: {
                    RnnCellParams p;
                    p.w_in = init_matrix(hidden, in);
                    p.w_rec = init_matrix(hidden, hidden);
                    p.bias = Vector(hidden, 0.0);
                    net.params.rnn_layers.push_back(std::move(p));
                    break;
                }
                case Architecture::Lstm: {
                    LstmCellParams p;
                    p.w_in_i = init_matrix(hidden, in);
                    p.w_rec_i = init_matrix(hidden, hidden);
                    p.peep_i = Vector(hidden, 0.0);
                    init_uniform_fan_in(p.peep_i, hidden, rng);
                    p.bias_i = Vector(hidden, 0.0);
                    p.w_in_f = init_matrix(hidden, in);
                    p.w_rec_f = init_matrix(hidden, hidden);
                    p.peep_f = Vector(hidden, 0.0);
                    init_uniform_fan_in(p.peep_f, hidden, rng);
                    p.bias_f = Vector(hidden, 1.0);  // keep memory early on
                    p.w_in_o = init_matrix(hidden, in);
                    p.w_rec_o = init_matrix(hidden, hidden);
                    p.peep_o = Vector(hidden, 0.0);
                    init_uniform_fan_in(p.peep_o, hidden, rng);
                    p.bias_o = Vector(hidden, 0.0);
                    p.w_in_c = init_matrix(hidden, in);
                    p.w_rec_c = init_matrix(hidden, hidden);
                    p.bias_c = Vector(hidden, 0.0);
                    net.params.lstm_layers.push_back(std::move(p));
                    break;
                }
                case Architecture::Gru: {
                    GruCellParams p;
                    p.w_in_z = init_matrix(hidden, in);
                    p.w_rec_z = init_matrix(hidden, hidden);
                    p.bias_z = Vector(hidden, 0.0);
                    p.w_in_r = init_matrix(hidden, in);
                    p.w_rec_r = init_matrix(hidden, hidden);
                    p.bias_r = Vector(hidden, 0.0);
                    p.w_in_h = init_matrix(hidden, in);
                    p.w_rec_h = init_matrix(hidden, hidden);
                    p.bias_h = Vector(hidden, 0.0);
                    net.params.gru_layers.push_back(std::move(p));
                    break;
                }
            }
        }
        net.params.head.weight =
            init_matrix(static_cast<std::size_t>(s.horizon), hidden);
        net.params.head.bias = Vector(static_cast<std::size_t>(s.horizon), 0.0);
        return net;
    }

    NetworkGrads make_zero_gradients() const {
        NetworkGrads g;
        for (const auto& p : params.dense_layers)
            g.dense_layers.push_back(make_zero_grads(p));
        for (const auto& p : params.rnn_layers)
            g.rnn_layers.push_back(make_zero_grads(p));
        for (const auto& p : params.lstm_layers)
            g.lstm_layers.push_back(make_zero_grads(p));
        for (const auto& p : params.gru_layers)
            g.gru_layers.push_back(make_zero_grads(p));
        g.head = make_zero_grads(params.head);
        return g;
    }

    /**
     * Forward pass over one sample. Recurrent nets consume `steps` as an
     * ordered sequence (oldest first); the FFNN consumes steps[0] as the
     * flat lag vector. `masks` carries dropout multipliers (pass an inactive
     * mask set for inference).
     */
    const Vector& forward(const std::vector<Vector>& steps,
                          const DropoutMasks& masks, ForwardCache& cache) const {
        const std::size_t layers = static_cast<std::size_t>(spec.hidden_layers);
        const std::size_t n_steps = spec.recurrent() ? steps.size() : 1;
        require_shape(n_steps >= 1, "empty input sequence");
        cache.n_steps = n_steps;
        cache.up_inputs.assign(layers, {});

        Vector head_input;
        if (spec.architecture == Architecture::Ffnn) {
            cache.dense.resize(layers);
            std::span<const double> x(steps[0]);
            for (std::size_t l = 0; l < layers; ++l) {
                dense_forward(params.dense_layers[l], x, true, cache.dense[l]);
                cache.up_inputs[l] = {dropped(cache.dense[l].output, masks, l, 0)};
                x = cache.up_inputs[l][0];
            }
            head_input = cache.up_inputs[layers - 1][0];
        } else {
            const std::size_t hidden =
                static_cast<std::size_t>(spec.hidden_size);
            if (spec.architecture == Architecture::Rnn)
                cache.rnn.assign(layers, std::vector<RnnStepCache>(n_steps));
            else if (spec.architecture == Architecture::Lstm)
                cache.lstm.assign(layers, std::vector<LstmStepCache>(n_steps));
            else
                cache.gru.assign(layers, std::vector<GruStepCache>(n_steps));

            for (std::size_t l = 0; l < layers; ++l) {
                const bool top = (l + 1 == layers);
                cache.up_inputs[l].resize(top ? 1 : n_steps);
                Vector h(hidden, 0.0), c(hidden, 0.0);
                for (std::size_t t = 0; t < n_steps; ++t) {
                    std::span<const double> x =
                        (l == 0) ? std::span<const double>(steps[t])
                                 : std::span<const double>(
                                       cache.up_inputs[l - 1][t]);
                    switch (spec.architecture) {
                        case Architecture::Rnn: {
                            auto& sc = cache.rnn[l][t];
                            rnn_cell_forward(params.rnn_layers[l], x, h, sc);
                            h = sc.h;
                            break;
                        }
                        case Architecture::Lstm: {
                            auto& sc = cache.lstm[l][t];
                            lstm_cell_forward(params.lstm_layers[l], x, h, c, sc);
                            h = sc.h;
                            c = sc.c;
                            break;
                        }
                        case Architecture::Gru: {
                            auto& sc = cache.gru[l][t];
                            gru_cell_forward(params.gru_layers[l], x, h, sc);
                            h = sc.h;
                            break;
                        }
                        default: break;
                    }
                    if (!top)
                        cache.up_inputs[l][t] = dropped(h, masks, l, t);
                }
                if (top)
                    cache.up_inputs[l][0] = dropped(h, masks, l, 0);
            }
            head_input = cache.up_inputs[layers - 1][0];
        }

        dense_forward(params.head, head_input, false, cache.head);
        cache.output = cache.head.output;
        return cache.output;
    }

    /// Backward pass for one sample; accumulates into `grads` the gradient
    /// of whatever scalar produced d_output = dL/d(network output).
    void backward(const ForwardCache& cache, std::span<const double> d_output,
                  const DropoutMasks& masks, NetworkGrads& grads) const {
        const std::size_t layers = static_cast<std::size_t>(spec.hidden_layers);
        const std::size_t hidden = static_cast<std::size_t>(spec.hidden_size);

        // Head (linear): grads + gradient w.r.t. its input.
        outer_add(grads.head.weight, d_output, cache.head.input);
        axpy(1.0, d_output, grads.head.bias);
        Vector d_head_in(hidden, 0.0);
        matvec_transpose_add(params.head.weight, d_output, d_head_in);

        if (spec.architecture == Architecture::Ffnn) {
            Vector d_up = std::move(d_head_in);
            for (std::size_t l = layers; l-- > 0;) {
                // through the dropout multiplier on layer l's output
                Vector d_act(hidden);
                const auto mask = masks.at(l, 0);
                for (std::size_t i = 0; i < hidden; ++i)
                    d_act[i] = d_up[i] * mask[i];
                const DenseCache& dc = cache.dense[l];
                Vector d_pre(hidden);
                for (std::size_t i = 0; i < hidden; ++i)
                    d_pre[i] =
                        d_act[i] * tanh_derivative_from_output(dc.output[i]);
                outer_add(grads.dense_layers[l].weight, d_pre, dc.input);
                axpy(1.0, d_pre, grads.dense_layers[l].bias);
                if (l > 0) {
                    d_up.assign(params.dense_layers[l].in_dim(), 0.0);
                    matvec_transpose_add(params.dense_layers[l].weight, d_pre,
                                         d_up);
                }
            }
            return;
        }

        const std::size_t n_steps = cache.n_steps;
        // d_up[l][t]: gradient reaching layer l's (pre-dropout) output h_t
        // from above. Filled top-down as each layer runs its BPTT.
        std::vector<std::vector<Vector>> d_up(
            layers, std::vector<Vector>(n_steps, Vector(hidden, 0.0)));
        {
            const auto mask = masks.at(layers - 1, 0);
            for (std::size_t i = 0; i < hidden; ++i)
                d_up[layers - 1][n_steps - 1][i] = d_head_in[i] * mask[i];
        }

        Vector d_x, d_h_prev, d_c_prev;
        for (std::size_t l = layers; l-- > 0;) {
            Vector d_h_next(hidden, 0.0), d_c_next(hidden, 0.0);
            for (std::size_t t = n_steps; t-- > 0;) {
                Vector d_h = d_up[l][t];
                axpy(1.0, d_h_next, d_h);
                switch (spec.architecture) {
                    case Architecture::Rnn:
                        rnn_cell_backward(params.rnn_layers[l], cache.rnn[l][t],
                                          d_h, grads.rnn_layers[l], d_x,
                                          d_h_prev);
                        break;
                    case Architecture::Lstm:
                        lstm_cell_backward(params.lstm_layers[l],
                                           cache.lstm[l][t], d_h, d_c_next,
                                           grads.lstm_layers[l], d_x, d_h_prev,
                                           d_c_prev);
                        d_c_next = d_c_prev;
                        break;
                    case Architecture::Gru:
                        gru_cell_backward(params.gru_layers[l], cache.gru[l][t],
                                          d_h, grads.gru_layers[l], d_x,
                                          d_h_prev);
                        break;
                    default: break;
                }
                d_h_next = d_h_prev;
                if (l > 0) {
                    const auto mask = masks.at(l - 1, t);
                    for (std::size_t i = 0; i < hidden; ++i)
                        d_up[l - 1][t][i] += d_x[i] * mask[i];
                }
            }
        }
    }

    /// Inference on a flat window row (no dropout). Recurrent nets unroll
    /// the row through `layout`; the FFNN consumes it directly.
    Vector predict(std::span<const double> flat_row,
                   const SequenceLayout& layout) const {
        ForwardCache cache;
        DropoutMasks identity = inference_masks();
        std::vector<Vector> steps;
        if (spec.recurrent()) {
            require_shape(spec.step_input_dim == 2,
                          "lag-vector unrolling expects 2 channels per step");
            steps = to_sequence(layout, flat_row);
        } else {
            steps = {Vector(flat_row.begin(), flat_row.end())};
        }
        return forward(steps, identity, cache);
    }

    DropoutMasks inference_masks(std::size_t n_steps_hint = 0) const {
        NetworkSpec s = spec;
        s.dropout_rate = 0.0;
        Rng dummy = make_rng(0);
        return sample_dropout_masks(
            s, n_steps_hint == 0 ? 1 : n_steps_hint, dummy);
    }

private:
    static Vector dropped(const Vector& h, const DropoutMasks& masks,
                          std::size_t layer, std::size_t t) {
        const auto mask = masks.masks[layer][t < masks.masks[layer].size() ? t : 0];
        Vector out(h.size());
        for (std::size_t i = 0; i < h.size(); ++i) out[i] = h[i] * mask[i];
        return out;
    }
};

/// Forward a flat window row through the network (spec-level convenience
/// wrapper used by the pipeline and the CLI).
inline Vector sequence_forward(const Network& net,
                               std::span<const double> flat_row,
                               const SequenceLayout& layout) {
    return net.predict(flat_row, layout);
}

}  // namespace pumpcast

#endif  // PUMPCAST_NETWORK_HPP
