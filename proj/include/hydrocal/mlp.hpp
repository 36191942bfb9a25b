#pragma once

/**
 * @file mlp.hpp
 * @brief Dense N-H-N post-processing networks with hidden batch
 *        normalization and ELU activations, trained full-batch by an
 *        adaptive first-order optimizer with manually derived gradients.
 *
 * Architecture: y = W2 * ELU(BN(ELU(W1 x + b1))) + b2. Batch statistics
 * normalize the hidden layer during training; running statistics take over
 * at inference. The two standard configurations are 2-3-2 (daily + 12-day
 * average channels) and 3-4-3 (daily + monthly + annual channels).
 */

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydrocal/multiscale.hpp"

namespace hydrocal {

inline double elu(double z) { return z >= 0.0 ? z : std::expm1(z); }
inline double elu_derivative(double z) { return z >= 0.0 ? 1.0 : std::exp(z); }

enum class NetMode { train, infer };

struct MlpNetwork {
    int inputs = 0, hidden = 0, outputs = 0;
    Eigen::MatrixXd w1;             // hidden x inputs
    Eigen::VectorXd b1;             // hidden
    Eigen::VectorXd gamma, beta;    // batch-norm scale and shift
    Eigen::VectorXd running_mean, running_var;   // inference statistics
    Eigen::MatrixXd w2;             // outputs x hidden
    Eigen::VectorXd b2;             // outputs
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    /// Trainable parameters: weights, biases, gamma, and beta. Running
    /// statistics are state, not parameters.
    static int parameter_count(int in, int h, int out) {
        return in * h + h + 2 * h + h * out + out;
    }
    int parameter_count() const { return parameter_count(inputs, hidden, outputs); }

    static MlpNetwork zeros(int in, int h, int out) {
        MlpNetwork n;
        n.inputs = in;
        n.hidden = h;
        n.outputs = out;
        n.w1 = Eigen::MatrixXd::Zero(h, in);
        n.b1 = Eigen::VectorXd::Zero(h);
        n.gamma = Eigen::VectorXd::Ones(h);
        n.beta = Eigen::VectorXd::Zero(h);
        n.running_mean = Eigen::VectorXd::Zero(h);
        n.running_var = Eigen::VectorXd::Ones(h);
        n.w2 = Eigen::MatrixXd::Zero(out, h);
        n.b2 = Eigen::VectorXd::Zero(out);
        return n;
    }

    /// Symmetric uniform fan-in initialization, deterministic in the seed.
    static MlpNetwork seeded(int in, int h, int out, uint64_t seed) {
        MlpNetwork n = zeros(in, h, out);
        std::mt19937_64 rng(seed);
        auto fill = [&rng](Eigen::MatrixXd& m, int fan_in) {
            std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(double(fan_in)),
                                                        1.0 / std::sqrt(double(fan_in)));
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
        };
        fill(n.w1, in);
        fill(n.w2, h);
        return n;
    }

    // Flat parameter order: w1 (row-major), b1, gamma, beta, w2 (row-major), b2.
    Eigen::VectorXd flat_parameters() const {
        Eigen::VectorXd p(parameter_count());
        Eigen::Index k = 0;
        for (Eigen::Index r = 0; r < w1.rows(); ++r)
            for (Eigen::Index c = 0; c < w1.cols(); ++c) p[k++] = w1(r, c);
        for (Eigen::Index i = 0; i < b1.size(); ++i) p[k++] = b1[i];
        for (Eigen::Index i = 0; i < gamma.size(); ++i) p[k++] = gamma[i];
        for (Eigen::Index i = 0; i < beta.size(); ++i) p[k++] = beta[i];
        for (Eigen::Index r = 0; r < w2.rows(); ++r)
            for (Eigen::Index c = 0; c < w2.cols(); ++c) p[k++] = w2(r, c);
        for (Eigen::Index i = 0; i < b2.size(); ++i) p[k++] = b2[i];
        return p;
    }

    void set_flat_parameters(const Eigen::VectorXd& p) {
        if (p.size() != parameter_count())
            throw ShapeError("set_flat_parameters: wrong parameter count");
        Eigen::Index k = 0;
        for (Eigen::Index r = 0; r < w1.rows(); ++r)
            for (Eigen::Index c = 0; c < w1.cols(); ++c) w1(r, c) = p[k++];
        for (Eigen::Index i = 0; i < b1.size(); ++i) b1[i] = p[k++];
        for (Eigen::Index i = 0; i < gamma.size(); ++i) gamma[i] = p[k++];
        for (Eigen::Index i = 0; i < beta.size(); ++i) beta[i] = p[k++];
        for (Eigen::Index r = 0; r < w2.rows(); ++r)
            for (Eigen::Index c = 0; c < w2.cols(); ++c) w2(r, c) = p[k++];
        for (Eigen::Index i = 0; i < b2.size(); ++i) b2[i] = p[k++];
    }

    void validate() const {
        auto finite = [](const auto& m) { return m.allFinite(); };
        if (!finite(w1) || !finite(b1) || !finite(gamma) || !finite(beta) ||
            !finite(running_mean) || !finite(running_var) || !finite(w2) || !finite(b2))
            throw InvalidArgument("network has non-finite parameters");
    }
};

/// Intermediates of one training-mode forward pass, kept for backprop.
/// Matrices are samples x width.
struct ForwardCache {
    Eigen::MatrixXd x, z, a, a_hat, h, u;
    Eigen::VectorXd mean, var;   // batch statistics of a
};

/**
 * Batch forward pass. Training mode normalizes with batch statistics (and
 * caches intermediates when asked); inference mode uses the stored running
 * statistics.
 */
inline Eigen::MatrixXd forward_batch(const MlpNetwork& net, const Eigen::MatrixXd& x,
                                     NetMode mode, ForwardCache* cache = nullptr) {
    if (x.cols() != net.inputs) throw ShapeError("forward: input width mismatch");
    const Eigen::Index n = x.rows();

    Eigen::MatrixXd z = (x * net.w1.transpose()).rowwise() + net.b1.transpose();
    Eigen::MatrixXd a = z.unaryExpr([](double v) { return elu(v); });

    Eigen::VectorXd mean(net.hidden), var(net.hidden);
    if (mode == NetMode::train) {
        mean = a.colwise().mean();
        for (int j = 0; j < net.hidden; ++j)
            var[j] = (a.col(j).array() - mean[j]).square().sum() / double(n);
    } else {
        mean = net.running_mean;
        var = net.running_var;
    }

    Eigen::MatrixXd a_hat(n, net.hidden), h(n, net.hidden);
    for (int j = 0; j < net.hidden; ++j) {
        const double inv = 1.0 / std::sqrt(var[j] + net.bn_eps);
        a_hat.col(j) = (a.col(j).array() - mean[j]) * inv;
        h.col(j) = net.gamma[j] * a_hat.col(j).array() + net.beta[j];
    }

    Eigen::MatrixXd u = h.unaryExpr([](double v) { return elu(v); });
    Eigen::MatrixXd y = (u * net.w2.transpose()).rowwise() + net.b2.transpose();

    if (cache) {
        cache->x = x;
        cache->z = std::move(z);
        cache->a = std::move(a);
        cache->a_hat = std::move(a_hat);
        cache->h = std::move(h);
        cache->u = std::move(u);
        cache->mean = std::move(mean);
        cache->var = std::move(var);
    }
    return y;
}

/// Single-sample forward pass (train mode sees a batch of one).
inline Eigen::VectorXd forward(const MlpNetwork& net, const Eigen::VectorXd& x,
                               NetMode mode) {
    return forward_batch(net, x.transpose(), mode).row(0);
}

/// Updates running statistics from one batch: run <- (1-m) run + m batch.
inline void update_running_stats(MlpNetwork& net, const Eigen::VectorXd& batch_mean,
                                 const Eigen::VectorXd& batch_var) {
    net.running_mean = (1.0 - net.bn_momentum) * net.running_mean + net.bn_momentum * batch_mean;
    net.running_var = (1.0 - net.bn_momentum) * net.running_var + net.bn_momentum * batch_var;
}

/// Unweighted sum of squared differences over all samples and output nodes.
inline double phi_n(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& outputs) {
    if (targets.rows() != outputs.rows() || targets.cols() != outputs.cols())
        throw ShapeError("phi_n: shape mismatch");
    return (targets - outputs).squaredNorm();
}

/**
 * Training-mode loss and its analytic gradient in flat parameter order.
 * The batch-normalization backward pass accounts for the dependence of the
 * batch mean and variance on the upstream parameters.
 */
inline double loss_and_gradient(const MlpNetwork& net, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& targets, Eigen::VectorXd& grad) {
    ForwardCache cc;
    const Eigen::MatrixXd y = forward_batch(net, x, NetMode::train, &cc);
    const double loss = phi_n(targets, y);
    const Eigen::Index n = x.rows();

    const Eigen::MatrixXd d_y = 2.0 * (y - targets);               // n x out
    const Eigen::MatrixXd d_w2 = d_y.transpose() * cc.u;           // out x hidden
    const Eigen::VectorXd d_b2 = d_y.colwise().sum();
    const Eigen::MatrixXd d_u = d_y * net.w2;                      // n x hidden
    const Eigen::MatrixXd d_h =
        d_u.cwiseProduct(cc.h.unaryExpr([](double v) { return elu_derivative(v); }));

    Eigen::VectorXd d_gamma(net.hidden), d_beta(net.hidden);
    Eigen::MatrixXd d_a(n, net.hidden);
    for (int j = 0; j < net.hidden; ++j) {
        const double inv = 1.0 / std::sqrt(cc.var[j] + net.bn_eps);
        const Eigen::ArrayXd dh = d_h.col(j).array();
        const Eigen::ArrayXd ah = cc.a_hat.col(j).array();
        d_gamma[j] = (dh * ah).sum();
        d_beta[j] = dh.sum();
        const Eigen::ArrayXd d_ahat = dh * net.gamma[j];
        const double sum_dahat = d_ahat.sum();
        const double sum_dahat_ah = (d_ahat * ah).sum();
        d_a.col(j) =
            (inv / double(n)) * (double(n) * d_ahat - sum_dahat - ah * sum_dahat_ah);
    }

    const Eigen::MatrixXd d_z =
        d_a.cwiseProduct(cc.z.unaryExpr([](double v) { return elu_derivative(v); }));
    const Eigen::MatrixXd d_w1 = d_z.transpose() * cc.x;           // hidden x in
    const Eigen::VectorXd d_b1 = d_z.colwise().sum();

    grad.resize(net.parameter_count());
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < d_w1.rows(); ++r)
        for (Eigen::Index c = 0; c < d_w1.cols(); ++c) grad[k++] = d_w1(r, c);
    for (Eigen::Index i = 0; i < d_b1.size(); ++i) grad[k++] = d_b1[i];
    for (Eigen::Index i = 0; i < d_gamma.size(); ++i) grad[k++] = d_gamma[i];
    for (Eigen::Index i = 0; i < d_beta.size(); ++i) grad[k++] = d_beta[i];
    for (Eigen::Index r = 0; r < d_w2.rows(); ++r)
        for (Eigen::Index c = 0; c < d_w2.cols(); ++c) grad[k++] = d_w2(r, c);
    for (Eigen::Index i = 0; i < d_b2.size(); ++i) grad[k++] = d_b2[i];
    return loss;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class NetArch { nn232, nn343 };

inline int arch_channels(NetArch a) { return a == NetArch::nn232 ? 2 : 3; }
inline int arch_hidden(NetArch a) { return a == NetArch::nn232 ? 3 : 4; }

inline const char* arch_name(NetArch a) { return a == NetArch::nn232 ? "232" : "343"; }

inline NetArch parse_arch(const std::string& name) {
    if (name == "232" || name == "nn232") return NetArch::nn232;
    if (name == "343" || name == "nn343") return NetArch::nn343;
    throw InvalidArgument("unknown network architecture '" + name + "'");
}

struct TrainOptions {
    int iterations = 1000;
    uint64_t seed = 0;
    double learning_rate = 0.02;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

/**
 * A trained network bundled with its per-channel standardization constants.
 * Inputs are standardized by the training-set mean/std before the network
 * and outputs de-standardized after.
 */
struct TrainedNetwork {
    NetArch arch = NetArch::nn232;
    MlpNetwork net;
    Eigen::VectorXd input_mean, input_std, target_mean, target_std;
    uint64_t seed = 0;
    std::vector<double> loss_curve;   // entry i = loss before update i; last = final

    int channels() const { return arch_channels(arch); }
};

/// Sample matrix builder: one row per day on which every requested channel
/// of both series is valid. Returns the kept day indices of `inputs.daily`.
inline std::vector<size_t> paired_sample_days(const MultiScaleSeries& inputs,
                                              const MultiScaleSeries& targets,
                                              int channels) {
    if (inputs.daily.size() != targets.daily.size())
        throw ShapeError("paired_sample_days: date axes differ");
    std::vector<size_t> days;
    for (size_t i = 0; i < inputs.daily.size(); ++i) {
        if (inputs.daily.dates[i] != targets.daily.dates[i])
            throw ShapeError("paired_sample_days: date axes differ");
        bool ok = true;
        for (int c = 0; c < channels && ok; ++c)
            ok = inputs.channel(c, channels).valid[i] && targets.channel(c, channels).valid[i];
        if (ok) days.push_back(i);
    }
    return days;
}

inline Eigen::MatrixXd sample_matrix(const MultiScaleSeries& series,
                                     const std::vector<size_t>& days, int channels) {
    Eigen::MatrixXd m(days.size(), channels);
    for (size_t r = 0; r < days.size(); ++r)
        for (int c = 0; c < channels; ++c)
            m(Eigen::Index(r), c) = series.channel(c, channels).values[days[r]];
    return m;
}

/**
 * Full-batch training on raw sample matrices for a fixed number of
 * iterations with Adam-style per-parameter step adaptation. Deterministic
 * given the seed. Throws DivergedTraining if the loss becomes non-finite.
 */
inline TrainedNetwork train_on_matrices(NetArch arch, const Eigen::MatrixXd& x_raw,
                                        const Eigen::MatrixXd& c_raw,
                                        const TrainOptions& opts = {}) {
    const int ch = arch_channels(arch);
    if (x_raw.cols() != ch || c_raw.cols() != ch || x_raw.rows() != c_raw.rows())
        throw ShapeError("train_on_matrices: sample shape mismatch");
    if (x_raw.rows() < 2) throw InsufficientData("training needs at least two paired days");

    TrainedNetwork model;
    model.arch = arch;
    model.seed = opts.seed;
    auto standardize = [](const Eigen::MatrixXd& m, Eigen::VectorXd& mean,
                          Eigen::VectorXd& std_dev) {
        mean = m.colwise().mean();
        std_dev.resize(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double var = (m.col(j).array() - mean[j]).square().sum() / double(m.rows());
            std_dev[j] = std::max(std::sqrt(var), 1e-9);
        }
        Eigen::MatrixXd out = m;
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out.col(j) = (m.col(j).array() - mean[j]) / std_dev[j];
        return out;
    };
    const Eigen::MatrixXd x = standardize(x_raw, model.input_mean, model.input_std);
    const Eigen::MatrixXd c = standardize(c_raw, model.target_mean, model.target_std);

    MlpNetwork net = MlpNetwork::seeded(ch, arch_hidden(arch), ch, opts.seed);
    Eigen::VectorXd theta = net.flat_parameters();
    Eigen::VectorXd m_adam = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd v_adam = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd grad;

    model.loss_curve.reserve(opts.iterations + 1);
    for (int iter = 0; iter < opts.iterations; ++iter) {
        const double loss = loss_and_gradient(net, x, c, grad);
        if (!std::isfinite(loss)) throw DivergedTraining(iter);
        model.loss_curve.push_back(loss);

        m_adam = opts.adam_beta1 * m_adam + (1.0 - opts.adam_beta1) * grad;
        v_adam = opts.adam_beta2 * v_adam + (1.0 - opts.adam_beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(opts.adam_beta1, iter + 1);
        const double bc2 = 1.0 - std::pow(opts.adam_beta2, iter + 1);
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            const double m_hat = m_adam[i] / bc1;
            const double v_hat = v_adam[i] / bc2;
            theta[i] -= opts.learning_rate * m_hat / (std::sqrt(v_hat) + opts.adam_eps);
        }
        net.set_flat_parameters(theta);

        // Track batch statistics for inference.
        ForwardCache cache;
        forward_batch(net, x, NetMode::train, &cache);
        update_running_stats(net, cache.mean, cache.var);
    }
    Eigen::VectorXd dummy;
    const double final_loss = loss_and_gradient(net, x, c, dummy);
    if (!std::isfinite(final_loss)) throw DivergedTraining(opts.iterations);
    model.loss_curve.push_back(final_loss);

    model.net = std::move(net);
    return model;
}

/// Trains on the jointly valid days of one input/target series pair.
inline TrainedNetwork train_network(NetArch arch, const MultiScaleSeries& inputs,
                                    const MultiScaleSeries& targets,
                                    const TrainOptions& opts = {}) {
    const int ch = arch_channels(arch);
    const std::vector<size_t> days = paired_sample_days(inputs, targets, ch);
    return train_on_matrices(arch, sample_matrix(inputs, days, ch),
                             sample_matrix(targets, days, ch), opts);
}

/// Trains one network on the pooled samples of several series pairs
/// (the uniform all-stations calibration).
inline TrainedNetwork train_network_pooled(
    NetArch arch,
    const std::vector<std::pair<MultiScaleSeries, MultiScaleSeries>>& pairs,
    const TrainOptions& opts = {}) {
    const int ch = arch_channels(arch);
    std::vector<Eigen::MatrixXd> xs, cs;
    Eigen::Index total = 0;
    for (const auto& [inputs, targets] : pairs) {
        const std::vector<size_t> days = paired_sample_days(inputs, targets, ch);
        xs.push_back(sample_matrix(inputs, days, ch));
        cs.push_back(sample_matrix(targets, days, ch));
        total += xs.back().rows();
    }
    Eigen::MatrixXd x(total, ch), c(total, ch);
    Eigen::Index at = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        x.middleRows(at, xs[i].rows()) = xs[i];
        c.middleRows(at, cs[i].rows()) = cs[i];
        at += xs[i].rows();
    }
    return train_on_matrices(arch, x, c, opts);
}

/**
 * Runs a trained network over a multi-scale series in inference mode.
 * Only the daily output node is emitted, clamped at zero; days with any
 * invalid input channel are masked. The date axis is passed through
 * unchanged.
 */
inline StreamflowSeries apply_network(const TrainedNetwork& model,
                                      const MultiScaleSeries& inputs) {
    model.net.validate();
    const int ch = model.channels();
    StreamflowSeries out = inputs.daily;
    for (size_t i = 0; i < inputs.daily.size(); ++i) {
        bool ok = true;
        for (int c = 0; c < ch && ok; ++c) ok = inputs.channel(c, ch).valid[i];
        if (!ok) {
            out.values[i] = 0.0;
            out.valid[i] = 0;
            continue;
        }
        Eigen::VectorXd x(ch);
        for (int c = 0; c < ch; ++c)
            x[c] = (inputs.channel(c, ch).values[i] - model.input_mean[c]) / model.input_std[c];
        const Eigen::VectorXd y = forward(model.net, x, NetMode::infer);
        const double daily = y[0] * model.target_std[0] + model.target_mean[0];
        out.values[i] = std::max(daily, 0.0);
        out.valid[i] = 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON persistence: weights, architecture, normalization, and seed in one
// document.
// ---------------------------------------------------------------------------

namespace detail {
inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const size_t rows = j.size();
    const size_t cols = rows ? j[0].size() : 0;
    Eigen::MatrixXd m(rows, cols);
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) m(Eigen::Index(r), Eigen::Index(c)) = j[r][c];
    return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v[Eigen::Index(i)] = j[i];
    return v;
}
}  // namespace detail

inline nlohmann::json network_to_json(const TrainedNetwork& model) {
    const MlpNetwork& n = model.net;
    return {
        {"arch", arch_name(model.arch)},
        {"layers", {n.inputs, n.hidden, n.outputs}},
        {"w1", detail::matrix_to_json(n.w1)},
        {"b1", detail::vector_to_json(n.b1)},
        {"gamma", detail::vector_to_json(n.gamma)},
        {"beta", detail::vector_to_json(n.beta)},
        {"running_mean", detail::vector_to_json(n.running_mean)},
        {"running_var", detail::vector_to_json(n.running_var)},
        {"w2", detail::matrix_to_json(n.w2)},
        {"b2", detail::vector_to_json(n.b2)},
        {"bn_eps", n.bn_eps},
        {"bn_momentum", n.bn_momentum},
        {"input_mean", detail::vector_to_json(model.input_mean)},
        {"input_std", detail::vector_to_json(model.input_std)},
        {"target_mean", detail::vector_to_json(model.target_mean)},
        {"target_std", detail::vector_to_json(model.target_std)},
        {"seed", model.seed},
    };
}

inline TrainedNetwork network_from_json(const nlohmann::json& j) {
    TrainedNetwork model;
    model.arch = parse_arch(j.at("arch").get<std::string>());
    const auto layers = j.at("layers");
    MlpNetwork n = MlpNetwork::zeros(layers[0], layers[1], layers[2]);
    n.w1 = detail::matrix_from_json(j.at("w1"));
    n.b1 = detail::vector_from_json(j.at("b1"));
    n.gamma = detail::vector_from_json(j.at("gamma"));
    n.beta = detail::vector_from_json(j.at("beta"));
    n.running_mean = detail::vector_from_json(j.at("running_mean"));
    n.running_var = detail::vector_from_json(j.at("running_var"));
    n.w2 = detail::matrix_from_json(j.at("w2"));
    n.b2 = detail::vector_from_json(j.at("b2"));
    n.bn_eps = j.at("bn_eps");
    n.bn_momentum = j.at("bn_momentum");
    model.net = std::move(n);
    model.input_mean = detail::vector_from_json(j.at("input_mean"));
    model.input_std = detail::vector_from_json(j.at("input_std"));
    model.target_mean = detail::vector_from_json(j.at("target_mean"));
    model.target_std = detail::vector_from_json(j.at("target_std"));
    model.seed = j.at("seed");
    model.net.validate();
    return model;
}

}  // namespace hydrocal
