#ifndef PUMPCAST_METRICS_HPP
#define PUMPCAST_METRICS_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pumpcast/linalg.hpp"
#include "pumpcast/timeseries.hpp"

namespace pumpcast {

class MetricError : public std::runtime_error {
public:
    explicit MetricError(const std::string& what) : std::runtime_error(what) {}
};

inline void require_pair(std::span<const double> obs,
                         std::span<const double> sim) {
    if (obs.empty()) throw MetricError("empty series");
    if (obs.size() != sim.size())
        throw MetricError("observed/simulated length mismatch: " +
                          std::to_string(obs.size()) + " vs " +
                          std::to_string(sim.size()));
}

/// Root mean square error: sqrt(sum((obs-sim)^2)/n).
inline double rmse(std::span<const double> obs, std::span<const double> sim) {
    require_pair(obs, sim);
    double ss = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const double d = obs[i] - sim[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(obs.size()));
}

/// Nash-Sutcliffe efficiency: 1 - sum((obs-sim)^2)/sum((obs-mean)^2).
inline double nse(std::span<const double> obs, std::span<const double> sim) {
    require_pair(obs, sim);
    double mean = 0.0;
    for (double v : obs) mean += v;
    mean /= static_cast<double>(obs.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const double e = obs[i] - sim[i];
        num += e * e;
        const double d = obs[i] - mean;
        den += d * d;
    }
    if (den <= 0.0)
        throw MetricError("NSE undefined for constant observations");
    return 1.0 - num / den;
}

/// Squared Pearson correlation, as the ratio of the squared covariance sum
/// to the product of the variance sums.
inline double r_squared(std::span<const double> obs,
                        std::span<const double> sim) {
    require_pair(obs, sim);
    double mo = 0.0, ms = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        mo += obs[i];
        ms += sim[i];
    }
    mo /= static_cast<double>(obs.size());
    ms /= static_cast<double>(obs.size());
    double cov = 0.0, vo = 0.0, vs = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const double a = obs[i] - mo;
        const double b = sim[i] - ms;
        cov += a * b;
        vo += a * a;
        vs += b * b;
    }
    if (vo <= 0.0 || vs <= 0.0)
        throw MetricError("R^2 undefined for a constant series");
    return (cov * cov) / (vo * vs);
}

/// A trained model as the evaluator sees it: a name plus a pure map from a
/// scaled window row to the scaled H-step prediction.
struct ModelHandle {
    std::string name;
    std::function<Vector(std::span<const double>)> predict;
};

struct EvaluationCell {
    int lead_steps = 0;
    std::string model;
    double rmse_m = 0.0;  // unscaled meters
    double nse = 0.0;
    double r2 = 0.0;
    double rmse_scaled = 0.0;
    double nse_scaled = 0.0;
    double r2_scaled = 0.0;
};

struct EvaluationReport {
    std::vector<EvaluationCell> cells;  // lead-major, then model order
};

inline const std::vector<int>& default_leads() {
    static const std::vector<int> leads{4, 8, 12, 16, 20, 24};
    return leads;
}

/**
 * Per-lead-time metrics over a window set, pooled over all rows. Metrics
 * are computed on unscaled meters (predictions inverted through the window
 * scaler) and reported alongside their scaled-space counterparts.
 */
inline EvaluationReport evaluate(std::span<const ModelHandle> models,
                                 const SupervisedWindowSet& ws,
                                 std::span<const int> leads) {
    if (ws.size() == 0) throw MetricError("empty window set");
    for (int lead : leads)
        if (lead < 1 || lead > ws.horizon)
            throw MetricError("lead " + std::to_string(lead) +
                              " outside model horizon " +
                              std::to_string(ws.horizon));

    EvaluationReport report;
    const std::size_t n = ws.size();
    for (const auto& model : models) {
        // One prediction pass per model, reused across leads.
        Matrix preds(n, static_cast<std::size_t>(ws.horizon));
        for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> row(
                ws.inputs.data.data() + i * ws.inputs.cols, ws.inputs.cols);
            Vector p = model.predict(row);
            if (p.size() != static_cast<std::size_t>(ws.horizon))
                throw MetricError("model '" + model.name +
                                  "' returned wrong horizon");
            std::copy(p.begin(), p.end(),
                      preds.data.begin() +
                          static_cast<std::ptrdiff_t>(i * preds.cols));
        }
        for (int lead : leads) {
            const std::size_t col = static_cast<std::size_t>(lead - 1);
            Vector obs_s(n), sim_s(n), obs_m(n), sim_m(n);
            for (std::size_t i = 0; i < n; ++i) {
                obs_s[i] = ws.targets(i, col);
                sim_s[i] = preds(i, col);
                obs_m[i] = unscale_level(ws.scaler, obs_s[i]);
                sim_m[i] = unscale_level(ws.scaler, sim_s[i]);
            }
            EvaluationCell cell;
            cell.lead_steps = lead;
            cell.model = model.name;
            cell.rmse_m = rmse(obs_m, sim_m);
            cell.nse = nse(obs_m, sim_m);
            cell.r2 = r_squared(obs_m, sim_m);
            cell.rmse_scaled = rmse(obs_s, sim_s);
            cell.nse_scaled = nse(obs_s, sim_s);
            cell.r2_scaled = r_squared(obs_s, sim_s);
            report.cells.push_back(cell);
        }
    }
    // Lead-major ordering mirrors the report table layout.
    std::stable_sort(report.cells.begin(), report.cells.end(),
                     [](const EvaluationCell& a, const EvaluationCell& b) {
                         return a.lead_steps < b.lead_steps;
                     });
    return report;
}

inline void write_report_csv(const std::string& path,
                             const EvaluationReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "lead_steps,model,rmse_m,nse,r2,rmse_scaled,nse_scaled,r2_scaled\n";
    char buf[256];
    for (const auto& c : report.cells) {
        std::snprintf(buf, sizeof(buf),
                      "%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      c.lead_steps, c.model.c_str(), c.rmse_m, c.nse, c.r2,
                      c.rmse_scaled, c.nse_scaled, c.r2_scaled);
        out << buf;
    }
}

}  // namespace pumpcast

#endif  // PUMPCAST_METRICS_HPP
