#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "icafuse/error.hpp"
#include "icafuse/numerics.hpp"
#include "support.hpp"

using namespace icafuse;

TEST_CASE("column_mean") {
    Matrix a(2, 2);
    a << 1, 3, 3, 5;
    const RowVector m = column_mean(a);
    CHECK(m(0) == 2.0);
    CHECK(m(1) == 4.0);

    Matrix one(1, 2);
    one << 7, 8;
    CHECK(column_mean(one) == one.row(0));

    CHECK_THROWS_AS(column_mean(Matrix(0, 3)), ValidationError);
}

TEST_CASE("sample_covariance uses n - 1") {
    Matrix x(3, 1);
    x << 1, 2, 3;
    CHECK(sample_covariance(x)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("sym_eig on identity and diagonal") {
    const EigenDecomposition id = sym_eig(Matrix::Identity(3, 3));
    for (int i = 0; i < 3; ++i) CHECK(id.eigenvalues(i) == 1.0);

    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 1;
    d(1, 1) = 4;
    const EigenDecomposition e = sym_eig(d);
    CHECK(e.eigenvalues(0) == 4.0);
    CHECK(e.eigenvalues(1) == 1.0);
    CHECK(std::abs(e.eigenvectors(1, 0)) == 1.0);
    CHECK(std::abs(e.eigenvectors(0, 1)) == 1.0);
}

TEST_CASE("sym_eig reconstruction and orthonormality on random symmetric matrices") {
    RngStream rng(11);
    for (long n : {2L, 6L, 15L}) {
        const Matrix g = testing::random_matrix(rng, n, n);
        const Matrix k = (g + g.transpose()) / 2;
        const EigenDecomposition e = sym_eig(k);
        const Matrix& v = e.eigenvectors;
        const Matrix back = v * e.eigenvalues.asDiagonal() * v.transpose();
        CHECK((back - k).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((v.transpose() * v - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
        for (long i = 0; i < n; ++i) {
            CHECK((k * v.col(i) - e.eigenvalues(i) * v.col(i)).norm() <= 1e-8 * k.norm());
            if (i > 0) CHECK(e.eigenvalues(i - 1) >= e.eigenvalues(i));
        }
        // Independent solver as oracle for the spectrum.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(k);
        for (long i = 0; i < n; ++i) {
            CHECK(e.eigenvalues(i) == doctest::Approx(ref.eigenvalues()(n - 1 - i)).epsilon(1e-10));
        }
    }
}

TEST_CASE("sym_eig rejects bad input") {
    Matrix a(2, 2);
    a << 1, 2, 3, 4;
    CHECK_THROWS_AS(sym_eig(a), ValidationError);
    CHECK_THROWS_AS(sym_eig(Matrix(2, 3)), ValidationError);
    Matrix n = Matrix::Identity(2, 2);
    n(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sym_eig(n), ValidationError);
}

TEST_CASE("whitening of a correlated cloud gives identity covariance") {
    RngStream rng(3);
    Matrix x(500, 2);
    for (long i = 0; i < x.rows(); ++i) {
        const double a = rng.normal(), b = rng.normal();
        x(i, 0) = 3 * a + 5;
        x(i, 1) = a + 0.5 * b - 2;
    }
    const WhiteningTransform w = fit_whitening(x, 2);
    const Matrix z = w.apply(x);
    CHECK((sample_covariance(z) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((w.invert(z) - x).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(w.eigenvalues(0) > w.eigenvalues(1));
}

TEST_CASE("Gram-form whitening when features exceed samples") {
    RngStream rng(4);
    const Matrix x = testing::random_matrix(rng, 12, 40);
    const WhiteningTransform w = fit_whitening(x, 5);
    const Matrix z = w.apply(x);
    CHECK(z.cols() == 5);
    CHECK((sample_covariance(z) - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((w.projection * w.back_projection - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-9);
    // Top-c eigenvalues agree with the covariance-form spectrum.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(sample_covariance(x));
    for (long i = 0; i < 5; ++i) {
        CHECK(w.eigenvalues(i) == doctest::Approx(ref.eigenvalues()(39 - i)).epsilon(1e-9));
    }
}

TEST_CASE("whitening rank checks") {
    RngStream rng(5);
    const Matrix x = testing::random_matrix(rng, 6, 4);
    CHECK_THROWS_AS(fit_whitening(x, 6), ValidationError);
    CHECK_THROWS_AS(fit_whitening(x, 0), ValidationError);
    CHECK_NOTHROW(fit_whitening(x, 4));

    Matrix dup(30, 3);
    for (long i = 0; i < 30; ++i) {
        dup(i, 0) = rng.normal();
        dup(i, 1) = dup(i, 0);
        dup(i, 2) = rng.normal();
    }
    try {
        fit_whitening(dup, 3);
        FAIL("expected RankDeficiencyError");
    } catch (const RankDeficiencyError& e) {
        CHECK(e.component() == 2);
    }
}

TEST_CASE("inverse_sqrt_spd") {
    RngStream rng(6);
    const Matrix g = testing::random_matrix(rng, 4, 4);
    const Matrix k = g * g.transpose() + Matrix::Identity(4, 4);
    const Matrix r = inverse_sqrt_spd(k);
    CHECK((r * k * r - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK_THROWS_AS(inverse_sqrt_spd(-Matrix::Identity(2, 2)), NumericError);
}
