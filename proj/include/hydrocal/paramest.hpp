#pragma once

/**
 * @file paramest.hpp
 * @brief Bounded nonlinear least squares for the nine model parameters:
 *        finite-difference Jacobians, SVD-truncated Gauss-Newton steps, and
 *        a backtracking estimation loop that mirrors an automatic parameter
 *        estimation tool run in estimation mode (no prior information).
 */

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydrocal/hydromodel.hpp"

namespace hydrocal {

/// Maps a parameter set to the prediction vector U aligned with C.
using VectorSimulator = std::function<Eigen::VectorXd(const ParameterSet&)>;

/// Maps a parameter set to per-station hydrographs.
using SeriesSimulator = std::function<std::vector<StreamflowSeries>(const ParameterSet&)>;

/// Weighted sum of squared residuals: sum_i (C_i - U_i)^2 / Q_ii.
inline double phi_p(const Eigen::VectorXd& observed, const Eigen::VectorXd& predicted,
                    const Eigen::VectorXd& q_diag) {
    if (observed.size() != predicted.size() || observed.size() != q_diag.size())
        throw ShapeError("phi_p: vector length mismatch");
    double phi = 0.0;
    for (Eigen::Index i = 0; i < observed.size(); ++i) {
        const double r = observed[i] - predicted[i];
        phi += r * r / q_diag[i];
    }
    return phi;
}

/**
 * Observations, weights, and the seasonal evaluation window that define the
 * objective. One sample = one valid observed day inside the window at one
 * station; samples are ordered by station then date so that predictions can
 * be aligned deterministically.
 */
struct ObjectiveSpec {
    std::vector<StreamflowSeries> observations;
    MonthDayWindow window;
    Eigen::VectorXd q_diag;   // per-sample variance

    struct Sample {
        int station;
        int index;   // into the station's series
    };
    std::vector<Sample> samples;

    Eigen::VectorXd observation_vector() const {
        Eigen::VectorXd c(samples.size());
        for (size_t k = 0; k < samples.size(); ++k)
            c[Eigen::Index(k)] = observations[samples[k].station].values[samples[k].index];
        return c;
    }

    /// Aligns simulated hydrographs with the sample plan.
    Eigen::VectorXd prediction_vector(const std::vector<StreamflowSeries>& simulated) const {
        if (simulated.size() != observations.size())
            throw ShapeError("prediction_vector: station count mismatch");
        Eigen::VectorXd u(samples.size());
        for (size_t k = 0; k < samples.size(); ++k) {
            const Sample& s = samples[k];
            const Date date = observations[s.station].dates[s.index];
            const int j = simulated[s.station].index_of(date);
            if (j < 0 || !simulated[s.station].valid[j])
                throw MissingForcing(date.to_string());
            u[Eigen::Index(k)] = simulated[s.station].values[j];
        }
        return u;
    }

    void validate() const {
        if (samples.size() < kParamCount)
            throw InsufficientData("objective needs at least as many observations as parameters");
        for (Eigen::Index i = 0; i < q_diag.size(); ++i)
            if (!(q_diag[i] > 0)) throw InvalidArgument("Q diagonal entries must be positive");
    }
};

/**
 * Builds an objective from observed hydrographs. The weight for every
 * sample at a station is (rel_sigma * mean observed flow there)^2, a
 * per-station relative error variance.
 */
inline ObjectiveSpec build_objective(std::vector<StreamflowSeries> observations,
                                     const MonthDayWindow& window,
                                     double rel_sigma = 0.1) {
    ObjectiveSpec spec;
    spec.window = window;
    spec.observations = std::move(observations);
    std::vector<double> variances;
    for (int s = 0; s < int(spec.observations.size()); ++s) {
        const StreamflowSeries& obs = spec.observations[s];
        obs.validate();
        double sum = 0.0;
        int n = 0;
        for (size_t i = 0; i < obs.size(); ++i) {
            if (!obs.valid[i] || !window.contains(obs.dates[i])) continue;
            spec.samples.push_back({s, int(i)});
            sum += obs.values[i];
            ++n;
        }
        const double mean = n > 0 ? sum / n : 0.0;
        const double sigma = std::max(rel_sigma * mean, 1e-9);
        variances.resize(spec.samples.size(), sigma * sigma);
    }
    spec.q_diag = Eigen::Map<Eigen::VectorXd>(variances.data(), Eigen::Index(variances.size()));
    spec.validate();
    return spec;
}

/**
 * Forward-difference Jacobian. Column j perturbs parameter j by
 * rel_step * (hi_j - lo_j), flipping the step direction at a bound, and
 * costs one extra simulation; columns are evaluated concurrently and merged
 * in column order.
 */
inline Eigen::MatrixXd jacobian(const VectorSimulator& simulator, const ParameterSet& p,
                                double rel_step, const Eigen::VectorXd& base_prediction,
                                bool parallel = true) {
    p.validate();
    Eigen::MatrixXd j(base_prediction.size(), kParamCount);
    auto column = [&](int k) {
        const ParamInfo& info = kParamTable[k];
        double delta = rel_step * (info.hi - info.lo);
        if (p[k] + delta > info.hi) delta = -delta;
        ParameterSet pk = p;
        pk[k] += delta;
        const Eigen::VectorXd u = simulator(pk);
        if (u.size() != base_prediction.size())
            throw ShapeError("jacobian: simulator changed prediction length");
        return Eigen::VectorXd(((u - base_prediction) / delta).eval());
    };
    if (parallel) {
        std::vector<std::future<Eigen::VectorXd>> futures;
        futures.reserve(kParamCount);
        for (int k = 0; k < kParamCount; ++k)
            futures.push_back(std::async(std::launch::async, column, k));
        for (int k = 0; k < kParamCount; ++k) j.col(k) = futures[k].get();
    } else {
        for (int k = 0; k < kParamCount; ++k) j.col(k) = column(k);
    }
    return j;
}

/**
 * Truncated-SVD Gauss-Newton increment for the weighted system
 * Q^{-1/2} J dp = Q^{-1/2} r. Singular values below tol * sigma_max are
 * zeroed; if that removes all of them the system is reported singular.
 * Each component of dp is clamped to half of its parameter's range.
 */
inline Eigen::VectorXd svd_step(const Eigen::MatrixXd& j, const Eigen::VectorXd& residual,
                                const Eigen::VectorXd& q_diag, double truncation_tol = 1e-8) {
    if (j.rows() != residual.size() || j.rows() != q_diag.size())
        throw ShapeError("svd_step: dimension mismatch");
    if (!j.allFinite()) throw InvalidArgument("svd_step: non-finite Jacobian");

    const Eigen::VectorXd w = q_diag.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd jw = w.asDiagonal() * j;
    const Eigen::VectorXd rw = w.asDiagonal() * residual;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jw, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sigma = svd.singularValues();
    const double sigma_max = sigma.size() > 0 ? sigma[0] : 0.0;

    Eigen::VectorXd inv_sigma = Eigen::VectorXd::Zero(sigma.size());
    int kept = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (sigma[i] >= truncation_tol * sigma_max && sigma[i] > 0.0) {
            inv_sigma[i] = 1.0 / sigma[i];
            ++kept;
        }
    }
    if (kept == 0) throw SingularSystem("all singular values truncated");

    Eigen::VectorXd dp =
        svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose() * rw;
    for (int k = 0; k < kParamCount; ++k) {
        const double limit = 0.5 * (kParamTable[k].hi - kParamTable[k].lo);
        dp[k] = std::clamp(dp[k], -limit, limit);
    }
    return dp;
}

struct TraceEntry {
    ParameterSet params;
    double phi = 0.0;
    int model_runs = 0;
};

struct EstimationTrace {
    std::vector<TraceEntry> entries;

    void validate() const {
        for (const TraceEntry& e : entries)
            if (!std::isfinite(e.phi) || e.phi < 0)
                throw InvalidArgument("trace phi must be finite and non-negative");
    }
};

enum class EstimateStatus { converged, max_iterations, no_improvement, singular };

inline const char* estimate_status_name(EstimateStatus s) {
    switch (s) {
        case EstimateStatus::converged: return "converged";
        case EstimateStatus::max_iterations: return "max_iterations";
        case EstimateStatus::no_improvement: return "no_improvement";
        case EstimateStatus::singular: return "singular";
    }
    return "?";
}

struct EstimationResult {
    ParameterSet params;
    EstimationTrace trace;
    EstimateStatus status = EstimateStatus::max_iterations;
    std::vector<std::string> at_bound;   // parameters that ended on a range limit
};

struct EstimateOptions {
    int max_iterations = 5;
    double rel_step = 0.01;
    double truncation_tol = 1e-8;
    int max_backtracks = 5;
    bool parallel = true;
};

/**
 * Gauss-Newton estimation with backtracking step halving.
 *
 * Each iteration spends 9 simulations on the Jacobian plus one per trial
 * step. Trial points are clamped to the parameter box; a component that
 * lands on a bound has its increment zeroed for the remaining trials of the
 * iteration. Phi is non-increasing across accepted iterations; when no
 * trial improves it the loop stops with status no_improvement.
 */
inline EstimationResult estimate(const VectorSimulator& simulator,
                                 const ObjectiveSpec& spec, const ParameterSet& p0,
                                 const EstimateOptions& opts = {}) {
    spec.validate();
    p0.validate();
    const Eigen::VectorXd observed = spec.observation_vector();

    EstimationResult result;
    ParameterSet p = p0;
    Eigen::VectorXd predicted = simulator(p);
    double phi = phi_p(observed, predicted, spec.q_diag);
    result.trace.entries.push_back({p, phi, 1});
    result.status = EstimateStatus::max_iterations;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        if (phi == 0.0) {
            result.status = EstimateStatus::converged;
            break;
        }
        const Eigen::MatrixXd j =
            jacobian(simulator, p, opts.rel_step, predicted, opts.parallel);
        int runs = kParamCount;

        Eigen::VectorXd dp;
        try {
            dp = svd_step(j, observed - predicted, spec.q_diag, opts.truncation_tol);
            // A parameter pinned at a bound with an outward increment cannot
            // move; freeze it and solve the reduced system so the remaining
            // components get a consistent step.
            Eigen::MatrixXd j_free = j;
            bool reduced = false;
            for (int k = 0; k < kParamCount; ++k) {
                const bool at_lo = p[k] <= kParamTable[k].lo && dp[k] < 0;
                const bool at_hi = p[k] >= kParamTable[k].hi && dp[k] > 0;
                if (at_lo || at_hi) {
                    j_free.col(k).setZero();
                    reduced = true;
                }
            }
            if (reduced)
                dp = svd_step(j_free, observed - predicted, spec.q_diag, opts.truncation_tol);
        } catch (const SingularSystem&) {
            result.status = EstimateStatus::singular;
            break;
        }

        bool accepted = false;
        for (int trial = 0; trial < opts.max_backtracks; ++trial) {
            const double scale = std::ldexp(1.0, -trial);   // 1, 1/2, 1/4, ...
            ParameterSet p_try = p;
            std::vector<int> clamped;
            for (int k = 0; k < kParamCount; ++k) {
                const double raw = p[k] + scale * dp[k];
                p_try[k] = std::clamp(raw, kParamTable[k].lo, kParamTable[k].hi);
                if (p_try[k] != raw) clamped.push_back(k);
            }
            const Eigen::VectorXd u_try = simulator(p_try);
            ++runs;
            const double phi_try = phi_p(observed, u_try, spec.q_diag);
            if (phi_try < phi) {
                p = p_try;
                predicted = u_try;
                phi = phi_try;
                accepted = true;
                break;
            }
            for (int k : clamped) dp[k] = 0.0;
        }
        if (!accepted) {
            result.status = EstimateStatus::no_improvement;
            break;
        }
        result.trace.entries.push_back({p, phi, runs});
        if (phi == 0.0) {
            result.status = EstimateStatus::converged;
            break;
        }
    }

    result.params = p;
    result.at_bound = p.at_bounds();
    result.trace.validate();
    return result;
}

/// Convenience overload taking a per-station simulator.
inline EstimationResult estimate(const SeriesSimulator& simulator,
                                 const ObjectiveSpec& spec, const ParameterSet& p0,
                                 const EstimateOptions& opts = {}) {
    VectorSimulator vec = [&](const ParameterSet& p) {
        return spec.prediction_vector(simulator(p));
    };
    return estimate(vec, spec, p0, opts);
}

// ---------------------------------------------------------------------------
// JSON persistence
// ---------------------------------------------------------------------------

inline nlohmann::json parameters_to_json(const ParameterSet& p) {
    nlohmann::json out = nlohmann::json::object();
    for (int i = 0; i < kParamCount; ++i) {
        const ParamInfo& info = kParamTable[i];
        out[info.name] = {
            {"value", p[i]},
            {"lo", info.lo},
            {"hi", info.hi},
            {"kind", info.kind == ParamKind::multiplier ? "multiplier" : "absolute"},
        };
    }
    return out;
}

inline ParameterSet parameters_from_json(const nlohmann::json& j) {
    ParameterSet p;
    for (int i = 0; i < kParamCount; ++i) {
        const ParamInfo& info = kParamTable[i];
        if (!j.contains(info.name))
            throw ConfigError(std::string("parameter file missing ") + info.name);
        const auto& entry = j.at(info.name);
        p[i] = entry.is_object() ? entry.at("value").get<double>() : entry.get<double>();
    }
    p.validate();
    return p;
}

inline nlohmann::json estimation_to_json(const EstimationResult& r) {
    nlohmann::json trace = nlohmann::json::array();
    for (const TraceEntry& e : r.trace.entries) {
        nlohmann::json values = nlohmann::json::object();
        for (int i = 0; i < kParamCount; ++i) values[kParamTable[i].name] = e.params[i];
        trace.push_back({{"params", values}, {"phi", e.phi}, {"model_runs", e.model_runs}});
    }
    return {{"parameters", parameters_to_json(r.params)},
            {"status", estimate_status_name(r.status)},
            {"at_bound", r.at_bound},
            {"trace", trace}};
}

}  // namespace hydrocal
