#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "icafuse/error.hpp"
#include "icafuse/numerics.hpp"
#include "icafuse/rvgen.hpp"
#include "support.hpp"

using namespace icafuse;

TEST_CASE("histogram fitting") {
    const std::vector<double> same(5, 3.0);
    const HistogramPdf point = fit_histogram(same, 5);
    CHECK(point.degenerate());
    CHECK(point.lower == 3.0);

    const std::vector<double> two{0.0, 1.0};
    const HistogramPdf h2 = fit_histogram(two, 2);
    CHECK(h2.masses == std::vector<double>{0.5, 0.5});
    CHECK(h2.bin_of(1.0) == 1);
    CHECK(h2.bin_of(0.5) == 1);
    CHECK(h2.bin_of(0.49) == 0);

    RngStream rng(1);
    std::vector<double> u(1000);
    for (auto& v : u) v = rng.uniform();
    const HistogramPdf h = fit_histogram(u, 10);
    double total = 0;
    for (double m : h.masses) {
        CHECK(m >= 0.07);
        CHECK(m <= 0.13);
        total += m;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(fit_histogram(std::vector<double>{}, 3), ValidationError);
    CHECK_THROWS_AS(fit_histogram(two, 0), ValidationError);
}

TEST_CASE("density is mass over bin width") {
    const std::vector<double> s{0.0, 0.0, 0.0, 4.0};
    const HistogramPdf h = fit_histogram(s, 2);
    CHECK(h.density(1.0) == doctest::Approx(0.75 / 2.0));
    CHECK(h.density(3.0) == doctest::Approx(0.25 / 2.0));
    CHECK(h.density(5.0) == 0.0);
}

TEST_CASE("rejection sampling from a uniform histogram passes KS") {
    HistogramPdf pdf{10, 2.0, 5.0, std::vector<double>(10, 0.1)};
    RngStream rng(2);
    std::vector<double> v = rejection_sample(pdf, 10000, rng);
    REQUIRE(v.size() == 10000);
    std::sort(v.begin(), v.end());
    double ks = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double f = (v[i] - 2.0) / 3.0;
        ks = std::max({ks, std::abs(f - double(i) / v.size()), std::abs(f - double(i + 1) / v.size())});
    }
    CHECK(ks < 0.02);
}

TEST_CASE("rejection sampling stays in the supported bin") {
    std::vector<double> masses(10, 0.0);
    masses[3] = 1.0;
    HistogramPdf pdf{10, 0.0, 10.0, masses};
    RngStream rng(3);
    for (double x : rejection_sample(pdf, 2000, rng)) {
        CHECK(x >= 3.0);
        CHECK(x <= 4.0);
    }
    CHECK(rejection_sample(pdf, 0, rng).empty());

    HistogramPdf point{4, 1.5, 1.5, {1, 0, 0, 0}};
    for (double x : rejection_sample(point, 10, rng)) CHECK(x == 1.5);
}

TEST_CASE("MVN fitting") {
    Matrix a(2, 2);
    a << 0, 0, 2, 2;
    const MvnParams p = fit_mvn(a);
    CHECK(p.mean(0) == 1.0);
    CHECK(p.covariance(0, 1) == 2.0);
    CHECK(p.covariance(1, 1) == 2.0);
    CHECK((p.spectral_root * p.spectral_root.transpose() - p.covariance).norm() < 1e-8 * p.covariance.norm());

    const MvnParams z = fit_mvn(Matrix::Ones(4, 3));
    CHECK(z.covariance.isZero(0));
    CHECK(z.spectral_root.isZero(0));
    RngStream rng(4);
    const Matrix rows = mvn_sample(z, 5, rng);
    for (long i = 0; i < 5; ++i) CHECK(rows.row(i) == RowVector::Ones(3));

    CHECK_THROWS_AS(fit_mvn(Matrix::Ones(1, 3)), ValidationError);
}

TEST_CASE("fit_mvn recovers a known covariance and is translation equivariant") {
    Matrix sigma(3, 3);
    sigma << 2, 0.5, 0, 0.5, 1, -0.3, 0, -0.3, 0.5;
    MvnParams truth{Vector::Zero(3), sigma, spectral_root_of(sigma)};
    RngStream rng(5);
    const Matrix a = mvn_sample(truth, 500, rng);
    const MvnParams fitted = fit_mvn(a);
    CHECK((fitted.covariance - sigma).norm() / sigma.norm() < 0.15);

    RowVector t(3);
    t << 10, -4, 1e3;
    const MvnParams shifted = fit_mvn(a.rowwise() + t);
    CHECK((shifted.mean - fitted.mean - t.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((shifted.covariance - fitted.covariance).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("MVN sampling moments") {
    Matrix sigma(2, 2);
    sigma << 1, 0.8, 0.8, 1;
    Vector mu(2);
    mu << 3, -1;
    MvnParams p{mu, sigma, spectral_root_of(sigma)};
    RngStream rng(6);
    const Matrix x = mvn_sample(p, 100000, rng);
    CHECK((sample_covariance(x) - sigma).norm() / sigma.norm() < 0.05);
    const RowVector m = column_mean(x);
    for (long j = 0; j < 2; ++j) CHECK(std::abs(m(j) - mu(j)) < 3 * std::sqrt(sigma(j, j) / 100000.0));
    CHECK(mvn_sample(p, 0, rng).rows() == 0);
    CHECK(mvn_sample(p, 0, rng).cols() == 2);
}

TEST_CASE("spectral root clips negative eigenvalues") {
    Matrix c(2, 2);
    c << 1, 2, 2, 1;  // eigenvalues 3 and -1
    const Matrix r = spectral_root_of(c);
    Matrix psd(2, 2);
    psd << 1.5, 1.5, 1.5, 1.5;
    CHECK((r * r.transpose() - psd).cwiseAbs().maxCoeff() < 1e-12);
}
