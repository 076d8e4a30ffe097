#pragma once

#include <cstddef>

#include "icafuse/matrix.hpp"

namespace icafuse {

struct EigenDecomposition {
    Vector eigenvalues;   // descending
    Matrix eigenvectors;  // columns, orthonormal
    int sweeps = 0;
};

// PCA whitening of the rows of x (samples) to c dimensions.
struct WhiteningTransform {
    RowVector mean;         // length m
    Matrix projection;      // c x m: z = projection * (x - mean)
    Matrix back_projection; // m x c: pseudo-inverse of projection
    Vector eigenvalues;     // top-c covariance eigenvalues

    std::size_t components() const { return static_cast<std::size_t>(projection.rows()); }
    // Rows of x -> whitened rows (n x c).
    Matrix apply(const Matrix& x) const;
    // Whitened rows -> feature space, mean restored.
    Matrix invert(const Matrix& z) const;
};

RowVector column_mean(const Matrix& x);

// Unbiased sample covariance of the rows of x.
Matrix sample_covariance(const Matrix& x);

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Stops when the
// off-diagonal Frobenius norm drops below 1e-11 * ||k||_F; throws
// NumericError after 100 sweeps without convergence.
EigenDecomposition sym_eig(const Matrix& k);

// Top-c PCA whitening. Uses the n x n Gram matrix when cols > rows.
WhiteningTransform fit_whitening(const Matrix& x, std::size_t c);

// Symmetric inverse square root of an SPD matrix via sym_eig.
Matrix inverse_sqrt_spd(const Matrix& k);

}  // namespace icafuse
