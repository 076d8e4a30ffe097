#include "icafuse/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "icafuse/error.hpp"

namespace icafuse {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOffDiagonalTol = 1e-11;
constexpr double kSymmetryTol = 1e-9;
constexpr double kRankTol = 1e-12;

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < a.cols(); ++j) s += 2.0 * a(i, j) * a(i, j);
    }
    return std::sqrt(s);
}

}  // namespace

Matrix WhiteningTransform::apply(const Matrix& x) const {
    if (x.cols() != mean.size()) {
        throw ValidationError("whitening expects " + std::to_string(mean.size()) + " columns, got " +
                              std::to_string(x.cols()));
    }
    return (x.rowwise() - mean) * projection.transpose();
}

Matrix WhiteningTransform::invert(const Matrix& z) const {
    if (z.cols() != projection.rows()) {
        throw ValidationError("inverse whitening expects " + std::to_string(projection.rows()) +
                              " columns, got " + std::to_string(z.cols()));
    }
    Matrix x = z * back_projection.transpose();
    x.rowwise() += mean;
    return x;
}

RowVector column_mean(const Matrix& x) {
    if (x.rows() < 1) throw ValidationError("column_mean of a matrix with no rows");
    return x.colwise().mean();
}

Matrix sample_covariance(const Matrix& x) {
    if (x.rows() < 2) throw ValidationError("sample covariance needs at least 2 rows");
    const Matrix centered = x.rowwise() - x.colwise().mean();
    return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

EigenDecomposition sym_eig(const Matrix& k) {
    if (k.rows() != k.cols()) {
        throw ValidationError("sym_eig needs a square matrix, got " + std::to_string(k.rows()) + "x" +
                              std::to_string(k.cols()));
    }
    if (!k.allFinite()) throw ValidationError("sym_eig input has non-finite entries");
    const Eigen::Index n = k.rows();
    const double scale = k.norm();
    if ((k - k.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * std::max(scale, 1e-300) && n > 0) {
        throw ValidationError("sym_eig input is not symmetric");
    }

    Matrix a = 0.5 * (k + k.transpose());
    Matrix v = Matrix::Identity(n, n);
    EigenDecomposition out;

    const double target = kOffDiagonalTol * scale;
    int sweep = 0;
    while (off_diagonal_norm(a) > target) {
        if (sweep == kMaxSweeps) {
            throw NumericError("sym_eig did not converge after " + std::to_string(kMaxSweeps) + " sweeps");
        }
        ++sweep;
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double arp = a(r, p);
                    const double arq = a(r, q);
                    a(r, p) = c * arp - s * arq;
                    a(r, q) = s * arp + c * arq;
                }
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double apr = a(p, r);
                    const double aqr = a(q, r);
                    a(p, r) = c * apr - s * aqr;
                    a(q, r) = s * apr + c * aqr;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double vrp = v(r, p);
                    const double vrq = v(r, q);
                    v(r, p) = c * vrp - s * vrq;
                    v(r, q) = s * vrp + c * vrq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto src = order[static_cast<std::size_t>(i)];
        out.eigenvalues(i) = a(src, src);
        out.eigenvectors.col(i) = v.col(src);
    }
    out.sweeps = sweep;
    return out;
}

WhiteningTransform fit_whitening(const Matrix& x, std::size_t c) {
    const auto n = static_cast<std::size_t>(x.rows());
    const auto m = static_cast<std::size_t>(x.cols());
    if (c < 1 || n < 2 || c > std::min(n - 1, m)) {
        throw ValidationError("whitening needs 1 <= c <= min(rows - 1, cols) = " +
                              std::to_string(n >= 1 ? std::min(n - 1, m) : 0) + ", got c = " + std::to_string(c));
    }
    WhiteningTransform w;
    w.mean = column_mean(x);
    const Matrix centered = x.rowwise() - w.mean;
    const double dof = static_cast<double>(n - 1);
    const auto ci = static_cast<Eigen::Index>(c);

    Matrix directions(x.cols(), ci);  // covariance eigenvectors, m x c
    Vector lambda(ci);
    if (m > n) {
        const EigenDecomposition eig = sym_eig(centered * centered.transpose() / dof);
        for (Eigen::Index i = 0; i < ci; ++i) {
            const double li = eig.eigenvalues(i);
            if (!(li > kRankTol * std::max(eig.eigenvalues(0), 0.0)) || li <= 0.0) {
                throw RankDeficiencyError("component " + std::to_string(i) + " has eigenvalue " +
                                              std::to_string(li) + "; data rank is below c = " + std::to_string(c),
                                          static_cast<std::size_t>(i));
            }
            lambda(i) = li;
            directions.col(i) = centered.transpose() * eig.eigenvectors.col(i) / std::sqrt(dof * li);
        }
    } else {
        const EigenDecomposition eig = sym_eig(centered.transpose() * centered / dof);
        for (Eigen::Index i = 0; i < ci; ++i) {
            const double li = eig.eigenvalues(i);
            if (!(li > kRankTol * std::max(eig.eigenvalues(0), 0.0)) || li <= 0.0) {
                throw RankDeficiencyError("component " + std::to_string(i) + " has eigenvalue " +
                                              std::to_string(li) + "; data rank is below c = " + std::to_string(c),
                                          static_cast<std::size_t>(i));
            }
            lambda(i) = li;
            directions.col(i) = eig.eigenvectors.col(i);
        }
    }
    w.eigenvalues = lambda;
    w.projection = lambda.cwiseSqrt().cwiseInverse().asDiagonal() * directions.transpose();
    w.back_projection = directions * lambda.cwiseSqrt().asDiagonal();
    return w;
}

Matrix inverse_sqrt_spd(const Matrix& k) {
    const EigenDecomposition eig = sym_eig(k);
    const Eigen::Index n = k.rows();
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(eig.eigenvalues(i) > 0.0)) {
            throw NumericError("inverse square root of a matrix that is not positive definite");
        }
        d(i) = 1.0 / std::sqrt(eig.eigenvalues(i));
    }
    return eig.eigenvectors * d.asDiagonal() * eig.eigenvectors.transpose();
}

}  // namespace icafuse
