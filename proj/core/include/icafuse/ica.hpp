#pragma once

#include <cstddef>

#include "icafuse/matrix.hpp"
#include "icafuse/numerics.hpp"
#include "icafuse/rng.hpp"

namespace icafuse {

struct IcaConfig {
    std::size_t max_iter = 200;
    double tol = 1e-4;
};

struct ConvergenceInfo {
    std::size_t iterations = 0;
    double final_change = 0.0;
    bool converged = false;
};

// X (n x m) ~ mixing (n x c) * sources (c x m) + feature_mean.
//
// Sources are the independent signals over the m feature columns; each has
// unit sample variance and keeps its own mean, with all scale carried by the
// mixing columns.
struct IcaModel {
    Matrix mixing;
    Matrix sources;
    RowVector feature_mean;
    WhiteningTransform whitening;
    // c x c map from the PCA-reduced feature signals to the sources.
    Matrix rotation;
    ConvergenceInfo convergence;

    std::size_t components() const { return static_cast<std::size_t>(sources.rows()); }
    std::size_t features() const { return static_cast<std::size_t>(sources.cols()); }
    // c x n pseudo-inverse of mixing: maps centered data to sources.
    Matrix unmixing() const;
};

// Symmetric FastICA with the logcosh contrast after PCA reduction to c
// components. Non-convergence is reported through model.convergence.
IcaModel fit_ica(const Matrix& x, std::size_t c, const IcaConfig& config, RngStream& rng);

Matrix reconstruct(const Matrix& mixing, const Matrix& sources, const RowVector& feature_mean);

}  // namespace icafuse
