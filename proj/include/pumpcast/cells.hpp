#ifndef PUMPCAST_CELLS_HPP
#define PUMPCAST_CELLS_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pumpcast/activations.hpp"
#include "pumpcast/linalg.hpp"

namespace pumpcast {

class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

inline void require_shape(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}

// ---------------------------------------------------------------------------
// Parameter blocks
// ---------------------------------------------------------------------------

struct DenseLayerParams {
    Matrix weight;  // out x in
    Vector bias;    // out

    std::size_t in_dim() const { return weight.cols; }
    std::size_t out_dim() const { return weight.rows; }
};

struct RnnCellParams {
    Matrix w_in;   // hidden x in
    Matrix w_rec;  // hidden x hidden
    Vector bias;   // hidden

    std::size_t in_dim() const { return w_in.cols; }
    std::size_t hidden_dim() const { return w_in.rows; }
};

/**
 * Peephole LSTM cell. All three gates receive the previous cell state
 * through the elementwise peephole vectors, the output gate included:
 *
 *   i = sigmoid(W_i x + U_i h_prev + V_i.c_prev + b_i)
 *   f = sigmoid(W_f x + U_f h_prev + V_f.c_prev + b_f)
 *   o = sigmoid(W_o x + U_o h_prev + V_o.c_prev + b_o)
 *   cbar = tanh(W_c x + U_c h_prev + b_c)
 *   c = f.c_prev + i.cbar
 *   h = o.tanh(c)
 */
struct LstmCellParams {
    Matrix w_in_i, w_rec_i;
    Vector peep_i, bias_i;
    Matrix w_in_f, w_rec_f;
    Vector peep_f, bias_f;
    Matrix w_in_o, w_rec_o;
    Vector peep_o, bias_o;
    Matrix w_in_c, w_rec_c;
    Vector bias_c;

    std::size_t in_dim() const { return w_in_i.cols; }
    std::size_t hidden_dim() const { return w_in_i.rows; }
};

/**
 * GRU cell with the update gate weighting the previous state:
 *
 *   z = sigmoid(W_z x + U_z h_prev + b_z)
 *   r = sigmoid(W_r x + U_r h_prev + b_r)
 *   hbar = tanh(W_h x + U_h (r.h_prev) + b_h)
 *   h = z.h_prev + (1 - z).hbar
 *
 * Note the sign convention: z = 1 keeps the previous state unchanged.
 */
struct GruCellParams {
    Matrix w_in_z, w_rec_z;
    Vector bias_z;
    Matrix w_in_r, w_rec_r;
    Vector bias_r;
    Matrix w_in_h, w_rec_h;
    Vector bias_h;

    std::size_t in_dim() const { return w_in_z.cols; }
    std::size_t hidden_dim() const { return w_in_z.rows; }
};

// ---------------------------------------------------------------------------
// Forward steps with caches for backprop
// ---------------------------------------------------------------------------

struct DenseCache {
    Vector input;
    Vector pre_activation;
    Vector output;  // tanh(pre) for hidden layers, pre for a linear head
};

inline void dense_forward(const DenseLayerParams& p, std::span<const double> x,
                          bool tanh_activation, DenseCache& cache) {
    require_shape(x.size() == p.in_dim(), "dense input dim mismatch");
    require_shape(p.bias.size() == p.out_dim(), "dense bias dim mismatch");
    cache.input.assign(x.begin(), x.end());
    matvec(p.weight, x, cache.pre_activation);
    for (std::size_t i = 0; i < cache.pre_activation.size(); ++i)
        cache.pre_activation[i] += p.bias[i];
    cache.output = cache.pre_activation;
    if (tanh_activation) tanh_inplace(cache.output);
}

struct RnnStepCache {
    Vector input;
    Vector h_prev;
    Vector h;  // tanh(w_rec h_prev + w_in x + b)
};

inline void rnn_cell_forward(const RnnCellParams& p, std::span<const double> x,
                             std::span<const double> h_prev,
                             RnnStepCache& cache) {
    require_shape(x.size() == p.in_dim(), "rnn input dim mismatch");
    require_shape(h_prev.size() == p.hidden_dim(), "rnn state dim mismatch");
    cache.input.assign(x.begin(), x.end());
    cache.h_prev.assign(h_prev.begin(), h_prev.end());
    matvec(p.w_rec, h_prev, cache.h);
    matvec_add(p.w_in, x, cache.h);
    for (std::size_t i = 0; i < cache.h.size(); ++i) cache.h[i] += p.bias[i];
    tanh_inplace(cache.h);
}

struct LstmStepCache {
    Vector input;
    Vector h_prev, c_prev;
    Vector gate_i, gate_f, gate_o;  // post-sigmoid
    Vector c_candidate;             // tanh
    Vector c, c_tanh;
    Vector h;
};

inline void lstm_cell_forward(const LstmCellParams& p,
                              std::span<const double> x,
                              std::span<const double> h_prev,
                              std::span<const double> c_prev,
                              LstmStepCache& cache) {
    const std::size_t hidden = p.hidden_dim();
    require_shape(x.size() == p.in_dim(), "lstm input dim mismatch");
    require_shape(h_prev.size() == hidden && c_prev.size() == hidden,
                  "lstm state dim mismatch");

    cache.input.assign(x.begin(), x.end());
    cache.h_prev.assign(h_prev.begin(), h_prev.end());
    cache.c_prev.assign(c_prev.begin(), c_prev.end());

    auto gate = [&](const Matrix& w_in, const Matrix& w_rec, const Vector& peep,
                    const Vector& bias, Vector& out) {
        matvec(w_in, x, out);
        matvec_add(w_rec, h_prev, out);
        for (std::size_t i = 0; i < hidden; ++i)
            out[i] = sigmoid(out[i] + peep[i] * c_prev[i] + bias[i]);
    };
    gate(p.w_in_i, p.w_rec_i, p.peep_i, p.bias_i, cache.gate_i);
    gate(p.w_in_f, p.w_rec_f, p.peep_f, p.bias_f, cache.gate_f);
    gate(p.w_in_o, p.w_rec_o, p.peep_o, p.bias_o, cache.gate_o);

    matvec(p.w_in_c, x, cache.c_candidate);
    matvec_add(p.w_rec_c, h_prev, cache.c_candidate);
    for (std::size_t i = 0; i < hidden; ++i)
        cache.c_candidate[i] = std::tanh(cache.c_candidate[i] + p.bias_c[i]);

    cache.c.resize(hidden);
    cache.c_tanh.resize(hidden);
    cache.h.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        cache.c[i] =
            cache.gate_f[i] * c_prev[i] + cache.gate_i[i] * cache.c_candidate[i];
        cache.c_tanh[i] = std::tanh(cache.c[i]);
        cache.h[i] = cache.gate_o[i] * cache.c_tanh[i];
    }
}

struct GruStepCache {
    Vector input;
    Vector h_prev;
    Vector gate_z, gate_r;  // post-sigmoid
    Vector reset_h;         // r.h_prev
    Vector h_candidate;     // tanh
    Vector h;
};

inline void gru_cell_forward(const GruCellParams& p, std::span<const double> x,
                             std::span<const double> h_prev,
                             GruStepCache& cache) {
    const std::size_t hidden = p.hidden_dim();
    require_shape(x.size() == p.in_dim(), "gru input dim mismatch");
    require_shape(h_prev.size() == hidden, "gru state dim mismatch");

    cache.input.assign(x.begin(), x.end());
    cache.h_prev.assign(h_prev.begin(), h_prev.end());

    matvec(p.w_in_z, x, cache.gate_z);
    matvec_add(p.w_rec_z, h_prev, cache.gate_z);
    matvec(p.w_in_r, x, cache.gate_r);
    matvec_add(p.w_rec_r, h_prev, cache.gate_r);
    for (std::size_t i = 0; i < hidden; ++i) {
        cache.gate_z[i] = sigmoid(cache.gate_z[i] + p.bias_z[i]);
        cache.gate_r[i] = sigmoid(cache.gate_r[i] + p.bias_r[i]);
    }

    cache.reset_h.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i)
        cache.reset_h[i] = cache.gate_r[i] * h_prev[i];

    matvec(p.w_in_h, x, cache.h_candidate);
    matvec_add(p.w_rec_h, cache.reset_h, cache.h_candidate);
    for (std::size_t i = 0; i < hidden; ++i)
        cache.h_candidate[i] = std::tanh(cache.h_candidate[i] + p.bias_h[i]);

    cache.h.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i)
        cache.h[i] = cache.gate_z[i] * h_prev[i] +
                     (1.0 - cache.gate_z[i]) * cache.h_candidate[i];
}

// ---------------------------------------------------------------------------
// Backward steps. Gradient structs mirror the parameter blocks exactly.
// ---------------------------------------------------------------------------

struct DenseGrads {
    Matrix weight;
    Vector bias;
};

struct RnnCellGrads {
    Matrix w_in, w_rec;
    Vector bias;
};

struct LstmCellGrads {
    Matrix w_in_i, w_rec_i;
    Vector peep_i, bias_i;
    Matrix w_in_f, w_rec_f;
    Vector peep_f, bias_f;
    Matrix w_in_o, w_rec_o;
    Vector peep_o, bias_o;
    Matrix w_in_c, w_rec_c;
    Vector bias_c;
};

struct GruCellGrads {
    Matrix w_in_z, w_rec_z;
    Vector bias_z;
    Matrix w_in_r, w_rec_r;
    Vector bias_r;
    Matrix w_in_h, w_rec_h;
    Vector bias_h;
};

inline DenseGrads make_zero_grads(const DenseLayerParams& p) {
    return {Matrix(p.weight.rows, p.weight.cols), Vector(p.bias.size(), 0.0)};
}

inline RnnCellGrads make_zero_grads(const RnnCellParams& p) {
    return {Matrix(p.w_in.rows, p.w_in.cols), Matrix(p.w_rec.rows, p.w_rec.cols),
            Vector(p.bias.size(), 0.0)};
}

inline LstmCellGrads make_zero_grads(const LstmCellParams& p) {
    LstmCellGrads g;
    g.w_in_i = Matrix(p.w_in_i.rows, p.w_in_i.cols);
    g.w_rec_i = Matrix(p.w_rec_i.rows, p.w_rec_i.cols);
    g.peep_i = Vector(p.peep_i.size(), 0.0);
    g.bias_i = Vector(p.bias_i.size(), 0.0);
    g.w_in_f = Matrix(p.w_in_f.rows, p.w_in_f.cols);
    g.w_rec_f = Matrix(p.w_rec_f.rows, p.w_rec_f.cols);
    g.peep_f = Vector(p.peep_f.size(), 0.0);
    g.bias_f = Vector(p.bias_f.size(), 0.0);
    g.w_in_o = Matrix(p.w_in_o.rows, p.w_in_o.cols);
    g.w_rec_o = Matrix(p.w_rec_o.rows, p.w_rec_o.cols);
    g.peep_o = Vector(p.peep_o.size(), 0.0);
    g.bias_o = Vector(p.bias_o.size(), 0.0);
    g.w_in_c = Matrix(p.w_in_c.rows, p.w_in_c.cols);
    g.w_rec_c = Matrix(p.w_rec_c.rows, p.w_rec_c.cols);
    g.bias_c = Vector(p.bias_c.size(), 0.0);
    return g;
}

inline GruCellGrads make_zero_grads(const GruCellParams& p) {
    GruCellGrads g;
    g.w_in_z = Matrix(p.w_in_z.rows, p.w_in_z.cols);
    g.w_rec_z = Matrix(p.w_rec_z.rows, p.w_rec_z.cols);
    g.bias_z = Vector(p.bias_z.size(), 0.0);
    g.w_in_r = Matrix(p.w_in_r.rows, p.w_in_r.cols);
    g.w_rec_r = Matrix(p.w_rec_r.rows, p.w_rec_r.cols);
    g.bias_r = Vector(p.bias_r.size(), 0.0);
    g.w_in_h = Matrix(p.w_in_h.rows, p.w_in_h.cols);
    g.w_rec_h = Matrix(p.w_rec_h.rows, p.w_rec_h.cols);
    g.bias_h = Vector(p.bias_h.size(), 0.0);
    return g;
}

/// d_output is dL/dh for this step; accumulates parameter grads and returns
/// dL/dx in d_input, dL/dh_prev in d_h_prev.
inline void rnn_cell_backward(const RnnCellParams& p, const RnnStepCache& cache,
                              std::span<const double> d_output,
                              RnnCellGrads& grads, Vector& d_input,
                              Vector& d_h_prev) {
    const std::size_t hidden = p.hidden_dim();
    Vector d_pre(hidden);
    for (std::size_t i = 0; i < hidden; ++i)
        d_pre[i] = d_output[i] * tanh_derivative_from_output(cache.h[i]);
    outer_add(grads.w_in, d_pre, cache.input);
    outer_add(grads.w_rec, d_pre, cache.h_prev);
    axpy(1.0, d_pre, grads.bias);
    d_input.assign(p.in_dim(), 0.0);
    matvec_transpose_add(p.w_in, d_pre, d_input);
    d_h_prev.assign(hidden, 0.0);
    matvec_transpose_add(p.w_rec, d_pre, d_h_prev);
}

/**
 * LSTM step backward. d_h is dL/dh for this step, d_c_in the cell-state
 * gradient arriving from the following step (zero at the last step). The
 * returned d_c_prev carries both the forget-gate path and the peephole
 * paths of all three gates.
 */
inline void lstm_cell_backward(const LstmCellParams& p,
                               const LstmStepCache& cache,
                               std::span<const double> d_h,
                               std::span<const double> d_c_in,
                               LstmCellGrads& grads, Vector& d_input,
                               Vector& d_h_prev, Vector& d_c_prev) {
    const std::size_t hidden = p.hidden_dim();
    Vector d_ao(hidden), d_af(hidden), d_ai(hidden), d_ac(hidden), dc(hidden);

    for (std::size_t i = 0; i < hidden; ++i) {
        const double d_o = d_h[i] * cache.c_tanh[i];
        d_ao[i] = d_o * sigmoid_derivative_from_output(cache.gate_o[i]);
        dc[i] = d_c_in[i] + d_h[i] * cache.gate_o[i] *
                                tanh_derivative_from_output(cache.c_tanh[i]);
        const double d_f = dc[i] * cache.c_prev[i];
        d_af[i] = d_f * sigmoid_derivative_from_output(cache.gate_f[i]);
        const double d_i = dc[i] * cache.c_candidate[i];
        d_ai[i] = d_i * sigmoid_derivative_from_output(cache.gate_i[i]);
        const double d_cand = dc[i] * cache.gate_i[i];
        d_ac[i] = d_cand * tanh_derivative_from_output(cache.c_candidate[i]);
    }

    outer_add(grads.w_in_i, d_ai, cache.input);
    outer_add(grads.w_rec_i, d_ai, cache.h_prev);
    outer_add(grads.w_in_f, d_af, cache.input);
    outer_add(grads.w_rec_f, d_af, cache.h_prev);
    outer_add(grads.w_in_o, d_ao, cache.input);
    outer_add(grads.w_rec_o, d_ao, cache.h_prev);
    outer_add(grads.w_in_c, d_ac, cache.input);
    outer_add(grads.w_rec_c, d_ac, cache.h_prev);
    axpy(1.0, d_ai, grads.bias_i);
    axpy(1.0, d_af, grads.bias_f);
    axpy(1.0, d_ao, grads.bias_o);
    axpy(1.0, d_ac, grads.bias_c);
    for (std::size_t i = 0; i < hidden; ++i) {
        grads.peep_i[i] += d_ai[i] * cache.c_prev[i];
        grads.peep_f[i] += d_af[i] * cache.c_prev[i];
        grads.peep_o[i] += d_ao[i] * cache.c_prev[i];
    }

    d_input.assign(p.in_dim(), 0.0);
    matvec_transpose_add(p.w_in_i, d_ai, d_input);
    matvec_transpose_add(p.w_in_f, d_af, d_input);
    matvec_transpose_add(p.w_in_o, d_ao, d_input);
    matvec_transpose_add(p.w_in_c, d_ac, d_input);

    d_h_prev.assign(hidden, 0.0);
    matvec_transpose_add(p.w_rec_i, d_ai, d_h_prev);
    matvec_transpose_add(p.w_rec_f, d_af, d_h_prev);
    matvec_transpose_add(p.w_rec_o, d_ao, d_h_prev);
    matvec_transpose_add(p.w_rec_c, d_ac, d_h_prev);

    d_c_prev.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i)
        d_c_prev[i] = dc[i] * cache.gate_f[i] + p.peep_i[i] * d_ai[i] +
                      p.peep_f[i] * d_af[i] + p.peep_o[i] * d_ao[i];
}

inline void gru_cell_backward(const GruCellParams& p, const GruStepCache& cache,
                              std::span<const double> d_h, GruCellGrads& grads,
                              Vector& d_input, Vector& d_h_prev) {
    const std::size_t hidden = p.hidden_dim();
    Vector d_az(hidden), d_ar(hidden), d_ah(hidden);

    for (std::size_t i = 0; i < hidden; ++i) {
        // h = z.h_prev + (1-z).hbar
        const double d_z = d_h[i] * (cache.h_prev[i] - cache.h_candidate[i]);
        d_az[i] = d_z * sigmoid_derivative_from_output(cache.gate_z[i]);
        const double d_cand = d_h[i] * (1.0 - cache.gate_z[i]);
        d_ah[i] = d_cand * tanh_derivative_from_output(cache.h_candidate[i]);
    }

    // Gradient entering r.h_prev through the candidate's recurrent weights.
    Vector d_reset_h(hidden, 0.0);
    matvec_transpose_add(p.w_rec_h, d_ah, d_reset_h);
    for (std::size_t i = 0; i < hidden; ++i) {
        const double d_r = d_reset_h[i] * cache.h_prev[i];
        d_ar[i] = d_r * sigmoid_derivative_from_output(cache.gate_r[i]);
    }

    outer_add(grads.w_in_z, d_az, cache.input);
    outer_add(grads.w_rec_z, d_az, cache.h_prev);
    outer_add(grads.w_in_r, d_ar, cache.input);
    outer_add(grads.w_rec_r, d_ar, cache.h_prev);
    outer_add(grads.w_in_h, d_ah, cache.input);
    outer_add(grads.w_rec_h, d_ah, cache.reset_h);
    axpy(1.0, d_az, grads.bias_z);
    axpy(1.0, d_ar, grads.bias_r);
    axpy(1.0, d_ah, grads.bias_h);

    d_input.assign(p.in_dim(), 0.0);
    matvec_transpose_add(p.w_in_z, d_az, d_input);
    matvec_transpose_add(p.w_in_r, d_ar, d_input);
    matvec_transpose_add(p.w_in_h, d_ah, d_input);

    d_h_prev.assign(hidden, 0.0);
    matvec_transpose_add(p.w_rec_z, d_az, d_h_prev);
    matvec_transpose_add(p.w_rec_r, d_ar, d_h_prev);
    for (std::size_t i = 0; i < hidden; ++i)
        d_h_prev[i] += d_h[i] * cache.gate_z[i] + d_reset_h[i] * cache.gate_r[i];
}

}  // namespace pumpcast

#endif  // PUMPCAST_CELLS_HPP
