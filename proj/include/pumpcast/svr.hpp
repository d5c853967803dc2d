#ifndef PUMPCAST_SVR_HPP
#define PUMPCAST_SVR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pumpcast/linalg.hpp"
#include "pumpcast/metrics.hpp"
#include "pumpcast/timeseries.hpp"

namespace pumpcast {

class SvrError : public std::runtime_error {
public:
    explicit SvrError(const std::string& what) : std::runtime_error(what) {}
};

struct SvrHyperparams {
    double gamma = 0.5;    // RBF width
    double C = 5.0;        // box constraint
    double epsilon = 0.01; // tube half-width

    void validate() const {
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw SvrError("gamma must be finite and > 0");
        if (!(C > 0.0) || !std::isfinite(C))
            throw SvrError("C must be finite and > 0");
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
            throw SvrError("epsilon must be finite and >= 0");
    }
};

/// exp(-gamma * ||x - y||^2)
inline double rbf_kernel(std::span<const double> x, std::span<const double> y,
                         double gamma) {
    if (x.size() != y.size())
        throw SvrError("kernel input dimension mismatch");
    return std::exp(-gamma * squared_distance(x, y));
}

/**
 * One fitted epsilon-SVR. Dual coefficients are (alpha_i - alpha_i*) for
 * the retained support vectors; prediction sums them in storage order so
 * results are reproducible bit for bit.
 */
struct SvrModel {
    SvrHyperparams hyperparams;
    Matrix support_vectors;    // n_sv x D
    Vector dual_coefficients;  // n_sv, each in [-C, C]
    double intercept = 0.0;
    // fit diagnostics
    std::int64_t iterations = 0;
    double kkt_violation = 0.0;
};

inline double svr_predict(const SvrModel& model, std::span<const double> x) {
    double acc = model.intercept;
    for (std::size_t i = 0; i < model.support_vectors.rows; ++i) {
        std::span<const double> sv(
            model.support_vectors.data.data() + i * model.support_vectors.cols,
            model.support_vectors.cols);
        acc += model.dual_coefficients[i] *
               rbf_kernel(sv, x, model.hyperparams.gamma);
    }
    return acc;
}

struct SvrFitOptions {
    double tolerance = 1e-3;               // KKT stopping threshold
    std::int64_t max_iterations_per_sample = 100000;
    std::size_t cache_budget_bytes = 256u << 20;
};

namespace detail {

/// Row-wise RBF Gram access. Precomputes the full matrix when it fits the
/// budget, otherwise serves rows on demand through a bounded cache.
class KernelCache {
public:
    KernelCache(const Matrix& points, double gamma, std::size_t budget_bytes)
        : points_(points), gamma_(gamma), n_(points.rows) {
        const std::size_t full_bytes = n_ * n_ * sizeof(double);
        if (full_bytes <= budget_bytes) {
            full_.resize(n_ * n_);
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t j = 0; j <= i; ++j) {
                    const double k = rbf_kernel(row(i), row(j), gamma_);
                    full_[i * n_ + j] = k;
                    full_[j * n_ + i] = k;
                }
        } else {
            max_cached_rows_ = std::max<std::size_t>(
                2, budget_bytes / (n_ * sizeof(double)));
        }
    }

    std::span<const double> get_row(std::size_t i) {
        if (!full_.empty())
            return {full_.data() + i * n_, n_};
        auto it = cache_.find(i);
        if (it == cache_.end()) {
            if (cache_.size() >= max_cached_rows_) {
                cache_.erase(cache_.begin());  // drop an arbitrary row
            }
            Vector r(n_);
            for (std::size_t j = 0; j < n_; ++j)
                r[j] = rbf_kernel(row(i), row(j), gamma_);
            it = cache_.emplace(i, std::move(r)).first;
        }
        return it->second;
    }

    double diagonal(std::size_t) const { return 1.0; }  // RBF: k(x,x) = 1

private:
    std::span<const double> row(std::size_t i) const {
        return {points_.data.data() + i * points_.cols, points_.cols};
    }

    const Matrix& points_;
    double gamma_;
    std::size_t n_;
    Vector full_;
    std::size_t max_cached_rows_ = 0;
    std::unordered_map<std::size_t, Vector> cache_;
};

}  // namespace detail

/**
 * Fit one epsilon-SVR by SMO over the signed duals beta_i = alpha_i -
 * alpha_i* in [-C, C] with sum(beta) = 0. Working pairs are chosen by
 * maximal KKT violation; each pair move minimizes the piecewise-quadratic
 * restriction of the dual objective exactly. Throws on non-convergence
 * within the iteration cap, reporting the residual violation.
 */
inline SvrModel svr_fit(const Matrix& inputs, std::span<const double> targets,
                        const SvrHyperparams& hp,
                        const SvrFitOptions& opts = {}) {
    hp.validate();
    const std::size_t n = inputs.rows;
    if (n < 2) throw SvrError("need at least 2 samples");
    if (targets.size() != n) throw SvrError("targets/inputs length mismatch");
    for (double y : targets)
        if (!std::isfinite(y)) throw SvrError("non-finite target");

    detail::KernelCache kernel(inputs, hp.gamma, opts.cache_budget_bytes);
    const double C = hp.C;
    const double eps = hp.epsilon;

    Vector beta(n, 0.0);
    Vector g(n);  // g_i = sum_j beta_j K_ij - y_i
    for (std::size_t i = 0; i < n; ++i) g[i] = -targets[i];

    auto up_value = [&](std::size_t i) {
        return g[i] + (beta[i] >= 0.0 ? eps : -eps);
    };
    auto down_value = [&](std::size_t i) {
        return g[i] + (beta[i] > 0.0 ? eps : -eps);
    };

    const std::int64_t max_iter =
        opts.max_iterations_per_sample * static_cast<std::int64_t>(n);
    std::int64_t iter = 0;
    double violation = 0.0;

    for (;; ++iter) {
        // Maximal violating pair: i may move up, j may move down.
        std::size_t best_i = n, best_j = n;
        double min_up = std::numeric_limits<double>::infinity();
        double max_down = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            if (beta[k] < C) {
                const double u = up_value(k);
                if (u < min_up) {
                    min_up = u;
                    best_i = k;
                }
            }
            if (beta[k] > -C) {
                const double d = down_value(k);
                if (d > max_down) {
                    max_down = d;
                    best_j = k;
                }
            }
        }
        violation = max_down - min_up;
        if (violation <= opts.tolerance) break;
        if (iter >= max_iter)
            throw SvrError("SMO did not converge within " +
                           std::to_string(max_iter) +
                           " iterations (residual KKT violation " +
                           std::to_string(violation) + ")");

        const std::size_t i = best_i, j = best_j;
        std::span<const double> row_i = kernel.get_row(i);
        std::span<const double> row_j = kernel.get_row(j);
        const double eta =
            kernel.diagonal(i) + kernel.diagonal(j) - 2.0 * row_i[j];
        const double t_max = std::min(C - beta[i], beta[j] + C);

        // phi(t) = eta t^2/2 + (g_i - g_j) t + eps(|b_i+t| - |b_i|)
        //        + eps(|b_j-t| - |b_j|); walk its breakpoints.
        const double cross_i = (beta[i] < 0.0) ? -beta[i] : -1.0;
        const double cross_j = (beta[j] > 0.0) ? beta[j] : -1.0;
        double marks[2];
        std::size_t n_marks = 0;
        if (cross_i > 0.0 && cross_i < t_max) marks[n_marks++] = cross_i;
        if (cross_j > 0.0 && cross_j < t_max) marks[n_marks++] = cross_j;
        if (n_marks == 2 && marks[0] > marks[1]) std::swap(marks[0], marks[1]);

        double t_star = t_max;
        double seg_start = 0.0;
        for (std::size_t s = 0; s <= n_marks; ++s) {
            const double seg_end = (s < n_marks) ? marks[s] : t_max;
            if (seg_end <= seg_start) {
                seg_start = seg_end;
                continue;
            }
            const double si = (beta[i] + seg_start >= 0.0) ? 1.0 : -1.0;
            const double sj = (beta[j] - seg_start > 0.0) ? 1.0 : -1.0;
            const double slope0 =
                eta * seg_start + (g[i] - g[j]) + eps * si - eps * sj;
            if (slope0 >= 0.0) {
                t_star = seg_start;
                break;
            }
            if (eta > 1e-12) {
                const double root = seg_start - slope0 / eta;
                if (root <= seg_end) {
                    t_star = root;
                    break;
                }
            }
            seg_start = seg_end;
        }

        double new_i = beta[i] + t_star;
        double new_j = beta[j] - t_star;
        if (t_star == cross_i) new_i = 0.0;
        if (t_star == cross_j) new_j = 0.0;
        if (t_star == t_max) {
            if (t_max == C - beta[i]) new_i = C;
            if (t_max == beta[j] + C) new_j = -C;
        }
        const double di = new_i - beta[i];
        const double dj = new_j - beta[j];
        beta[i] = new_i;
        beta[j] = new_j;
        for (std::size_t k = 0; k < n; ++k)
            g[k] += row_i[k] * di + row_j[k] * dj;
    }

    // Final bias from the KKT bracket midpoint.
    double min_up = std::numeric_limits<double>::infinity();
    double max_down = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        if (beta[k] < C) min_up = std::min(min_up, up_value(k));
        if (beta[k] > -C) max_down = std::max(max_down, down_value(k));
    }
    double b;
    if (std::isfinite(min_up) && std::isfinite(max_down))
        b = -0.5 * (min_up + max_down);
    else if (std::isfinite(min_up))
        b = -min_up;
    else
        b = -max_down;

    SvrModel model;
    model.hyperparams = hp;
    model.intercept = b;
    model.iterations = iter;
    model.kkt_violation = violation;
    std::size_t n_sv = 0;
    for (double v : beta)
        if (v != 0.0) ++n_sv;
    model.support_vectors = Matrix(n_sv, inputs.cols);
    model.dual_coefficients.resize(n_sv);
    std::size_t r = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (beta[k] == 0.0) continue;
        std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(k * inputs.cols),
                    inputs.cols,
                    model.support_vectors.data.begin() +
                        static_cast<std::ptrdiff_t>(r * inputs.cols));
        model.dual_coefficients[r] = beta[k];
        ++r;
    }
    return model;
}

/// One independent epsilon-SVR per lead step.
struct MultiSvrModel {
    std::vector<SvrModel> per_lead;

    int horizon() const { return static_cast<int>(per_lead.size()); }
};

inline MultiSvrModel svr_fit_multi(const Matrix& inputs, const Matrix& targets,
                                   const SvrHyperparams& hp,
                                   const SvrFitOptions& opts = {}) {
    if (inputs.rows != targets.rows)
        throw SvrError("inputs/targets row mismatch");
    MultiSvrModel model;
    model.per_lead.reserve(targets.cols);
    Vector column(inputs.rows);
    for (std::size_t h = 0; h < targets.cols; ++h) {
        for (std::size_t i = 0; i < targets.rows; ++i)
            column[i] = targets(i, h);
        model.per_lead.push_back(svr_fit(inputs, column, hp, opts));
    }
    return model;
}

inline Vector svr_predict_row(const MultiSvrModel& model,
                              std::span<const double> x) {
    Vector out(model.per_lead.size());
    for (std::size_t h = 0; h < model.per_lead.size(); ++h)
        out[h] = svr_predict(model.per_lead[h], x);
    return out;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct GridSearchSpec {
    std::vector<double> gammas{0.05, 0.1, 0.5, 1.0, 2.0};
    std::vector<double> Cs{0.5, 1.0, 5.0, 10.0, 50.0};
    std::vector<double> epsilons{0.005, 0.01, 0.05, 0.1};
    double validation_fraction = 0.25;  // chronological tail of the windows
    SvrFitOptions fit_options;

    void validate() const {
        if (gammas.empty() || Cs.empty() || epsilons.empty())
            throw SvrError("grid lists must be non-empty");
        if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
            throw SvrError("validation fraction must be in (0, 1)");
    }
};

struct GridCell {
    double gamma = 0.0;
    double C = 0.0;
    double epsilon = 0.0;
    double val_rmse = 0.0;
};

struct GridSearchResult {
    SvrHyperparams best;
    double best_rmse = 0.0;
    std::vector<GridCell> table;  // one row per evaluated cell
};

/**
 * Exhaustive grid evaluation on a chronological validation split. Ties are
 * broken toward smaller C, then larger epsilon, then smaller gamma.
 */
inline GridSearchResult grid_search(const GridSearchSpec& spec,
                                    const SupervisedWindowSet& windows) {
    spec.validate();
    auto [fit_ws, val_ws] =
        chronological_split(windows, 1.0 - spec.validation_fraction);

    GridSearchResult result;
    bool have_best = false;
    auto better = [](double rmse_a, const SvrHyperparams& a, double rmse_b,
                     const SvrHyperparams& b) {
        if (rmse_a != rmse_b) return rmse_a < rmse_b;
        if (a.C != b.C) return a.C < b.C;
        if (a.epsilon != b.epsilon) return a.epsilon > b.epsilon;
        return a.gamma < b.gamma;
    };

    for (double gamma : spec.gammas)
        for (double C : spec.Cs)
            for (double epsilon : spec.epsilons) {
                SvrHyperparams hp{gamma, C, epsilon};
                MultiSvrModel model =
                    svr_fit_multi(fit_ws.inputs, fit_ws.targets, hp,
                                  spec.fit_options);
                // RMSE pooled over every validation row and lead step.
                double sse = 0.0;
                std::size_t count = 0;
                for (std::size_t i = 0; i < val_ws.size(); ++i) {
                    std::span<const double> row(
                        val_ws.inputs.data.data() + i * val_ws.inputs.cols,
                        val_ws.inputs.cols);
                    const Vector pred = svr_predict_row(model, row);
                    for (std::size_t h = 0; h < pred.size(); ++h) {
                        const double r = pred[h] - val_ws.targets(i, h);
                        sse += r * r;
                        ++count;
                    }
                }
                const double rmse_val =
                    std::sqrt(sse / static_cast<double>(count));
                result.table.push_back({gamma, C, epsilon, rmse_val});
                if (!have_best ||
                    better(rmse_val, hp, result.best_rmse, result.best)) {
                    result.best = hp;
                    result.best_rmse = rmse_val;
                    have_best = true;
                }
            }
    return result;
}

inline void write_grid_csv(const std::string& path,
                           const GridSearchResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "gamma,C,epsilon,val_rmse\n";
    char buf[160];
    for (const auto& c : result.table) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", c.gamma,
                      c.C, c.epsilon, c.val_rmse);
        out << buf;
    }
}

}  // namespace pumpcast

#endif  // PUMPCAST_SVR_HPP
