#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "icafuse/matrix.hpp"
#include "icafuse/rng.hpp"

namespace icafuse {

// N-bin normalized histogram over [lower, upper]. lower == upper encodes a
// point mass at lower.
struct HistogramPdf {
    std::size_t bin_count = 0;
    double lower = 0.0;
    double upper = 0.0;
    std::vector<double> masses;

    bool degenerate() const { return !(upper > lower); }
    double bin_width() const { return (upper - lower) / static_cast<double>(bin_count); }
    // Index of the bin containing v; the last bin is closed on the right.
    std::size_t bin_of(double v) const;
    double density(double v) const;
};

struct MvnParams {
    Vector mean;
    Matrix covariance;
    Matrix spectral_root;  // V * Lambda^{1/2}

    std::size_t dims() const { return static_cast<std::size_t>(mean.size()); }
};

struct RejectionKind {
    std::size_t bin_count = 20;
};
struct MvnKind {};
using RvGeneratorKind = std::variant<RejectionKind, MvnKind>;

HistogramPdf fit_histogram(std::span<const double> samples, std::size_t bin_count);

// Proposal v ~ U(lower, upper), u ~ U(0, 1); accept when u < density(v) / max density.
std::vector<double> rejection_sample(const HistogramPdf& pdf, std::size_t m, RngStream& rng);

MvnParams fit_mvn(const Matrix& a);
// Rebuilds spectral_root from a covariance; negative eigenvalues clipped to 0.
Matrix spectral_root_of(const Matrix& covariance);
Matrix mvn_sample(const MvnParams& params, std::size_t m, RngStream& rng);

}  // namespace icafuse
