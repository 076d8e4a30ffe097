#include <doctest.h>

#include <algorithm>

#include <Eigen/LU>

#include "icafuse/baselines.hpp"
#include "icafuse/error.hpp"
#include "support.hpp"

using namespace icafuse;

namespace {

struct Toy {
    Matrix x;
    std::vector<Label> y;
};

// Two Gaussian clusters: HC around -shift, SZ around +shift on every axis.
Toy clusters(RngStream& rng, long per_class, long m, double shift, double sd = 1.0) {
    Toy t;
    t.x.resize(2 * per_class, m);
    for (long i = 0; i < 2 * per_class; ++i) {
        const bool sz = i % 2 == 1;
        t.y.push_back(sz ? Label::SZ : Label::HC);
        for (long j = 0; j < m; ++j) t.x(i, j) = (sz ? shift : -shift) + sd * rng.normal();
    }
    return t;
}

}  // namespace

TEST_CASE("logistic regression separates separable data with decreasing loss") {
    RngStream rng(1);
    const Toy t = clusters(rng, 30, 3, 3.0, 0.5);
    const BaselineModel model = fit_baseline(LogisticRegressionKind{1.0, 500}, t.x, t.y);
    const Vector p = baseline_predict_proba(model, t.x);
    for (long i = 0; i < p.size(); ++i) CHECK((p(i) > 0.5) == (t.y[i] == Label::SZ));
    const auto& fit = std::get<LogisticRegressionFit>(model.fit);
    REQUIRE(fit.loss_trace.size() >= 2);
    for (std::size_t i = 1; i < fit.loss_trace.size(); ++i) CHECK(fit.loss_trace[i] <= fit.loss_trace[i - 1]);
}

TEST_CASE("logistic regression with zero weights scores 0.5") {
    BaselineModel model{LogisticRegressionKind{}, LogisticRegressionFit{Vector::Zero(4), 0.0, 0, {}}, 4};
    RngStream rng(2);
    const Vector p = baseline_predict_proba(model, testing::random_matrix(rng, 6, 4));
    for (long i = 0; i < 6; ++i) CHECK(p(i) == 0.5);
}

TEST_CASE("naive Bayes boundary sits at the analytic midpoint") {
    RngStream rng(3);
    Toy t;
    t.x.resize(2000, 2);
    for (long i = 0; i < 2000; ++i) {
        const bool sz = i % 2 == 1;
        t.y.push_back(sz ? Label::SZ : Label::HC);
        t.x(i, 0) = (sz ? 4.0 : 0.0) + rng.normal();
        t.x(i, 1) = rng.normal();  // uninformative axis
    }
    const BaselineModel model = fit_baseline(GaussianNbKind{}, t.x, t.y);
    double lo = 0, hi = 4;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        Matrix q(1, 2);
        q << mid, 0.0;
        (baseline_predict_proba(model, q)(0) < 0.5 ? lo : hi) = mid;
    }
    CHECK(std::abs(lo - 2.0) < 0.2);

    Matrix deep_hc(1, 2);
    deep_hc << -1.0, 0.0;
    CHECK(baseline_predict_proba(model, deep_hc)(0) < 0.5);
}

TEST_CASE("naive Bayes variance floor keeps constant features finite") {
    Matrix x(4, 2);
    x << 1, 0, 1, 1, 1, 2, 1, 3;
    const std::vector<Label> y{Label::HC, Label::HC, Label::SZ, Label::SZ};
    const BaselineModel model = fit_baseline(GaussianNbKind{}, x, y);
    CHECK(std::get<GaussianNbFit>(model.fit).variances.minCoeff() >= 1e-9);
    CHECK(baseline_predict_proba(model, x).allFinite());
}

TEST_CASE("shrinkage LDA matches the direct solve") {
    RngStream rng(4);
    const Toy t = clusters(rng, 15, 5, 0.5);
    const double alpha = 0.3;
    const BaselineModel model = fit_baseline(LdaKind{alpha}, t.x, t.y);
    const auto& fit = std::get<LdaFit>(model.fit);

    RowVector mu[2] = {RowVector::Zero(5), RowVector::Zero(5)};
    for (long i = 0; i < 30; ++i) mu[static_cast<int>(t.y[i])] += t.x.row(i) / 15.0;
    Matrix s = Matrix::Zero(5, 5);
    for (long i = 0; i < 30; ++i) {
        const RowVector d = t.x.row(i) - mu[static_cast<int>(t.y[i])];
        s += d.transpose() * d;
    }
    s /= 28.0;
    const Matrix shrunk = (1 - alpha) * s + alpha * (s.trace() / 5) * Matrix::Identity(5, 5);
    const Vector w = shrunk.inverse() * (mu[1] - mu[0]).transpose();
    CHECK((fit.weights - w).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(fit.bias == doctest::Approx(-w.dot(0.5 * (mu[0] + mu[1]).transpose())).epsilon(1e-10));
}

TEST_CASE("LDA in the wide regime") {
    RngStream rng(5);
    const Toy t = clusters(rng, 20, 500, 0.3);
    const BaselineModel model = fit_baseline(LdaKind{}, t.x, t.y);
    const Toy test = clusters(rng, 50, 500, 0.3);
    const Vector p = baseline_predict_proba(model, test.x);
    long right = 0;
    for (long i = 0; i < p.size(); ++i) right += (p(i) > 0.5) == (test.y[i] == Label::SZ);
    CHECK(right > 90);
}

TEST_CASE("kNN votes") {
    RngStream rng(6);
    const Toy t = clusters(rng, 10, 3, 1.0);
    const BaselineModel one = fit_baseline(KnnKind{1}, t.x, t.y);
    const Vector p = baseline_predict_proba(one, t.x);
    for (long i = 0; i < p.size(); ++i) CHECK(p(i) == (t.y[i] == Label::SZ ? 1.0 : 0.0));

    Matrix x(4, 1);
    x << 0.0, 1.0, 2.0, 10.0;
    const std::vector<Label> y{Label::SZ, Label::HC, Label::SZ, Label::HC};
    const BaselineModel three = fit_baseline(KnnKind{3}, x, y);
    Matrix q(1, 1);
    q << 0.9;
    CHECK(baseline_predict_proba(three, q)(0) == doctest::Approx(2.0 / 3.0));

    // Equidistant neighbours: the smaller training index wins.
    Matrix tie(1, 1);
    tie << 0.5;
    CHECK(baseline_predict_proba(fit_baseline(KnnKind{1}, x, y), tie)(0) == 1.0);
}

TEST_CASE("baselines ignore training order") {
    RngStream rng(7);
    const Toy t = clusters(rng, 12, 4, 0.7);
    std::vector<std::size_t> perm(t.y.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
    Toy r;
    r.x.resize(t.x.rows(), t.x.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        r.x.row(static_cast<long>(i)) = t.x.row(static_cast<long>(perm[i]));
        r.y.push_back(t.y[perm[i]]);
    }
    const Matrix q = testing::random_matrix(rng, 5, 4);
    for (const BaselineKind& kind : {BaselineKind{LogisticRegressionKind{}}, BaselineKind{GaussianNbKind{}},
                                     BaselineKind{LdaKind{}}, BaselineKind{KnnKind{5}}}) {
        const Vector a = baseline_predict_proba(fit_baseline(kind, t.x, t.y), q);
        const Vector b = baseline_predict_proba(fit_baseline(kind, r.x, r.y), q);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(a.minCoeff() >= 0.0);
        CHECK(a.maxCoeff() <= 1.0);
    }
}

TEST_CASE("baseline argument checks") {
    RngStream rng(8);
    const Matrix x = testing::random_matrix(rng, 4, 2);
    const std::vector<Label> one_class(4, Label::HC);
    CHECK_THROWS_AS(fit_baseline(GaussianNbKind{}, x, one_class), ValidationError);
    const std::vector<Label> y{Label::HC, Label::SZ, Label::HC, Label::SZ};
    const BaselineModel m = fit_baseline(LdaKind{}, x, y);
    CHECK_THROWS_AS(baseline_predict_proba(m, testing::random_matrix(rng, 2, 3)), ValidationError);
    CHECK(baseline_name(KnnKind{}) == "Nearest Neighbors");
}
