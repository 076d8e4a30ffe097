#include "icafuse/baselines.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "icafuse/error.hpp"

namespace icafuse {

namespace {

constexpr double kVarianceFloor = 1e-9;
constexpr double kLrTolerance = 1e-6;

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Mean cross-entropy plus l2 * |w|^2 / (2n).
double lr_loss(const Matrix& x, const Vector& y, const Vector& w, double b, double l2) {
    const Vector z = (x * w).array() + b;
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) s += softplus(z(i)) - y(i) * z(i);
    const double n = static_cast<double>(x.rows());
    return s / n + 0.5 * l2 * w.squaredNorm() / n;
}

LogisticRegressionFit fit_lr(const LogisticRegressionKind& kind, const Matrix& x, const Vector& y) {
    const double n = static_cast<double>(x.rows());
    LogisticRegressionFit fit;
    fit.weights = Vector::Zero(x.cols());
    double loss = lr_loss(x, y, fit.weights, fit.bias, kind.l2);
    fit.loss_trace.push_back(loss);
    double step = 1.0;
    for (std::size_t it = 0; it < kind.max_iter; ++it) {
        Vector p = (x * fit.weights).array() + fit.bias;
        for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = stable_sigmoid(p(i));
        const Vector r = p - y;
        const Vector gw = (x.transpose() * r + kind.l2 * fit.weights) / n;
        const double gb = r.sum() / n;
        const double gnorm2 = gw.squaredNorm() + gb * gb;
        if (std::sqrt(gnorm2) < kLrTolerance) break;

        // Armijo backtracking: halve the step until the loss decreases enough.
        double candidate_loss = loss;
        Vector w_new;
        double b_new = 0.0;
        bool accepted = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
            w_new = fit.weights - step * gw;
            b_new = fit.bias - step * gb;
            candidate_loss = lr_loss(x, y, w_new, b_new, kind.l2);
            if (candidate_loss <= loss - 0.5 * step * gnorm2) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        fit.weights = std::move(w_new);
        fit.bias = b_new;
        const double change = loss - candidate_loss;
        loss = candidate_loss;
        fit.loss_trace.push_back(loss);
        fit.iterations = it + 1;
        if (change < kLrTolerance * std::max(1.0, std::abs(loss))) break;
        step *= 2.0;
    }
    return fit;
}

GaussianNbFit fit_gnb(const Matrix& x, std::span<const Label> y) {
    GaussianNbFit fit;
    fit.means = Matrix::Zero(2, x.cols());
    fit.variances = Matrix::Zero(2, x.cols());
    std::array<double, 2> counts{0.0, 0.0};
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(y[i]);
        fit.means.row(c) += x.row(static_cast<Eigen::Index>(i));
        counts[static_cast<std::size_t>(c)] += 1.0;
    }
    for (Eigen::Index c = 0; c < 2; ++c) fit.means.row(c) /= counts[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(y[i]);
        fit.variances.row(c).array() += (x.row(static_cast<Eigen::Index>(i)) - fit.means.row(c)).array().square();
    }
    for (Eigen::Index c = 0; c < 2; ++c) {
        fit.variances.row(c) /= counts[static_cast<std::size_t>(c)];
        fit.variances.row(c) = fit.variances.row(c).cwiseMax(kVarianceFloor);
    }
    fit.log_prior_ratio = std::log(counts[1] / counts[0]);
    return fit;
}

LdaFit fit_lda(const LdaKind& kind, const Matrix& x, std::span<const Label> y) {
    const Eigen::Index n = x.rows();
    const Eigen::Index m = x.cols();
    Matrix means = Matrix::Zero(2, m);
    std::array<double, 2> counts{0.0, 0.0};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
        means.row(c) += x.row(i);
        counts[static_cast<std::size_t>(c)] += 1.0;
    }
    for (Eigen::Index c = 0; c < 2; ++c) means.row(c) /= counts[static_cast<std::size_t>(c)];
    Matrix centered(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        centered.row(i) = x.row(i) - means.row(static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]));
    }
    const double dof = std::max<double>(1.0, static_cast<double>(n - 2));
    // Pooled covariance S = Xc^T Xc / dof; shrunk toward (trace(S) / m) * I.
    const double avg_var = centered.squaredNorm() / dof / static_cast<double>(m);
    const double beta = kind.shrinkage * avg_var;
    const double gamma = (1.0 - kind.shrinkage) / dof;
    const Vector delta = (means.row(1) - means.row(0)).transpose();

    LdaFit fit;
    if (!(beta > 0.0)) {
        fit.weights = Vector::Zero(m);
    } else {
        // Woodbury: (beta I + gamma Xc^T Xc)^{-1} d
        //   = (d - gamma Xc^T (beta I + gamma Xc Xc^T)^{-1} Xc d) / beta
        Matrix small = gamma * (centered * centered.transpose());
        small.diagonal().array() += beta;
        const Vector inner = small.ldlt().solve(centered * delta);
        fit.weights = (delta - gamma * centered.transpose() * inner) / beta;
    }
    const Vector midpoint = 0.5 * (means.row(0) + means.row(1)).transpose();
    fit.bias = -fit.weights.dot(midpoint) + std::log(counts[1] / counts[0]);
    return fit;
}

}  // namespace

std::string baseline_name(const BaselineKind& kind) {
    struct Visitor {
        std::string operator()(const LogisticRegressionKind&) const { return "Logistic Regression"; }
        std::string operator()(const GaussianNbKind&) const { return "Naive Bayes"; }
        std::string operator()(const LdaKind&) const { return "LDA"; }
        std::string operator()(const KnnKind&) const { return "Nearest Neighbors"; }
    };
    return std::visit(Visitor{}, kind);
}

BaselineModel fit_baseline(const BaselineKind& kind, const Matrix& x, std::span<const Label> y) {
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw ValidationError("fit_baseline: rows and labels differ");
    if (!x.allFinite()) throw ValidationError("fit_baseline: non-finite features");
    if (x.cols() < 1) throw ValidationError("fit_baseline: no features");
    const auto n_sz = static_cast<std::size_t>(std::count(y.begin(), y.end(), Label::SZ));
    const auto n_hc = y.size() - n_sz;
    if (n_sz < 2 || n_hc < 2) {
        throw ValidationError("fit_baseline needs at least 2 samples per class (HC " + std::to_string(n_hc) + ", SZ " +
                              std::to_string(n_sz) + ")");
    }

    BaselineModel model;
    model.kind = kind;
    model.features = static_cast<std::size_t>(x.cols());
    if (const auto* lr = std::get_if<LogisticRegressionKind>(&kind)) {
        if (!(lr->l2 >= 0.0) || lr->max_iter < 1) throw ValidationError("logistic regression: bad hyperparameters");
        Vector target(x.rows());
        for (std::size_t i = 0; i < y.size(); ++i) target(static_cast<Eigen::Index>(i)) = y[i] == Label::SZ ? 1.0 : 0.0;
        model.fit = fit_lr(*lr, x, target);
    } else if (std::holds_alternative<GaussianNbKind>(kind)) {
        model.fit = fit_gnb(x, y);
    } else if (const auto* lda = std::get_if<LdaKind>(&kind)) {
        if (!(lda->shrinkage > 0.0 && lda->shrinkage <= 1.0)) throw ValidationError("LDA shrinkage must lie in (0, 1]");
        model.fit = fit_lda(*lda, x, y);
    } else {
        const auto& knn = std::get<KnnKind>(kind);
        if (knn.k < 1) throw ValidationError("kNN needs k >= 1");
        model.fit = KnnFit{x, std::vector<Label>(y.begin(), y.end()), knn.k};
    }
    return model;
}

Vector baseline_predict_proba(const BaselineModel& model, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != model.features) {
        throw ValidationError("baseline expects " + std::to_string(model.features) + " features, got " +
                              std::to_string(x.cols()));
    }
    const Eigen::Index n = x.rows();
    Vector out(n);
    if (const auto* lr = std::get_if<LogisticRegressionFit>(&model.fit)) {
        const Vector z = (x * lr->weights).array() + lr->bias;
        for (Eigen::Index i = 0; i < n; ++i) out(i) = stable_sigmoid(z(i));
    } else if (const auto* nb = std::get_if<GaussianNbFit>(&model.fit)) {
        const RowVector log_var_diff = (nb->variances.row(1).array().log() - nb->variances.row(0).array().log()).matrix();
        const double const_term = nb->log_prior_ratio - 0.5 * log_var_diff.sum();
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto d0 = (x.row(i) - nb->means.row(0)).array().square() / nb->variances.row(0).array();
            const auto d1 = (x.row(i) - nb->means.row(1)).array().square() / nb->variances.row(1).array();
            out(i) = stable_sigmoid(const_term + 0.5 * (d0.sum() - d1.sum()));
        }
    } else if (const auto* lda = std::get_if<LdaFit>(&model.fit)) {
        const Vector z = (x * lda->weights).array() + lda->bias;
        for (Eigen::Index i = 0; i < n; ++i) out(i) = stable_sigmoid(z(i));
    } else {
        const auto& knn = std::get<KnnFit>(model.fit);
        const Eigen::Index n_train = knn.train.rows();
        const auto k = std::min<std::size_t>(knn.k, static_cast<std::size_t>(n_train));
        std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n_train));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n_train; ++j) {
                dist[static_cast<std::size_t>(j)] = {(knn.train.row(j) - x.row(i)).squaredNorm(), j};
            }
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
            std::size_t votes = 0;
            for (std::size_t r = 0; r < k; ++r) {
                if (knn.labels[static_cast<std::size_t>(dist[r].second)] == Label::SZ) ++votes;
            }
            out(i) = static_cast<double>(votes) / static_cast<double>(k);
        }
    }
    return out;
}

}  // namespace icafuse
