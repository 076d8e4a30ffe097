#include "icafuse/ica.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <string>

#include "icafuse/error.hpp"

namespace icafuse {

namespace {

// W <- (W W^T)^{-1/2} W
Matrix symmetric_orthogonalize(const Matrix& w) {
    return inverse_sqrt_spd(w * w.transpose()) * w;
}

}  // namespace

Matrix IcaModel::unmixing() const {
    const Matrix gram = mixing.transpose() * mixing;
    return gram.ldlt().solve(mixing.transpose());
}

IcaModel fit_ica(const Matrix& x, std::size_t c, const IcaConfig& config, RngStream& rng) {
    const auto n = static_cast<std::size_t>(x.rows());
    const auto m = static_cast<std::size_t>(x.cols());
    if (c < 1 || n < 2 || c > std::min(n - 1, m)) {
        throw ValidationError("fit_ica needs 1 <= c <= min(rows - 1, cols); got c = " + std::to_string(c) +
                              " for a " + std::to_string(n) + "x" + std::to_string(m) + " matrix");
    }
    if (m < 2) throw ValidationError("fit_ica needs at least 2 feature columns");
    if (config.max_iter < 1 || !(config.tol > 0.0)) throw ValidationError("fit_ica: max_iter >= 1 and tol > 0 required");
    if (!x.allFinite()) throw ValidationError("fit_ica input has non-finite entries");

    IcaModel model;
    model.whitening = fit_whitening(x, c);
    model.feature_mean = model.whitening.mean;

    const Matrix scores = model.whitening.apply(x);                     // n x c
    const Matrix signals = model.whitening.back_projection.transpose();  // c x m
    const auto ci = static_cast<Eigen::Index>(c);
    const auto mi = static_cast<Eigen::Index>(m);

    // Second whitening over the feature axis so each signal row is centered,
    // unit variance and uncorrelated with the others.
    const Vector signal_mean = signals.rowwise().mean();
    const Matrix centered = signals.colwise() - signal_mean;
    const Matrix signal_cov = centered * centered.transpose() / static_cast<double>(m - 1);
    const Matrix sphere = inverse_sqrt_spd(signal_cov);
    const Matrix white = sphere * centered;

    Matrix w(ci, ci);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    w = symmetric_orthogonalize(w);

    ConvergenceInfo info;
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t it = 1; it <= config.max_iter; ++it) {
        const Matrix projected = w * white;  // c x m
        Matrix g(ci, mi);
        Vector g_prime_mean = Vector::Zero(ci);
        for (Eigen::Index i = 0; i < ci; ++i) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < mi; ++j) {
                const double t = std::tanh(projected(i, j));
                g(i, j) = t;
                acc += 1.0 - t * t;
            }
            g_prime_mean(i) = acc * inv_m;
        }
        Matrix updated = g * white.transpose() * inv_m - g_prime_mean.asDiagonal() * w;
        updated = symmetric_orthogonalize(updated);

        double change = 0.0;
        const Matrix overlap = updated * w.transpose();
        for (Eigen::Index i = 0; i < ci; ++i) change = std::max(change, std::abs(std::abs(overlap(i, i)) - 1.0));
        w = updated;
        info.iterations = it;
        info.final_change = change;
        if (change < config.tol) {
            info.converged = true;
            break;
        }
    }

    model.rotation = w * sphere;
    model.sources = model.rotation * signals;
    model.mixing = scores * model.rotation.inverse();
    model.convergence = info;
    return model;
}

Matrix reconstruct(const Matrix& mixing, const Matrix& sources, const RowVector& feature_mean) {
    if (mixing.cols() != sources.rows() || sources.cols() != feature_mean.size()) {
        throw ValidationError("reconstruct: mixing is " + std::to_string(mixing.rows()) + "x" +
                              std::to_string(mixing.cols()) + ", sources " + std::to_string(sources.rows()) + "x" +
                              std::to_string(sources.cols()) + ", feature_mean length " +
                              std::to_string(feature_mean.size()));
    }
    Matrix out = mixing * sources;
    out.rowwise() += feature_mean;
    return out;
}

}  // namespace icafuse
