#include "icafuse/rvgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "icafuse/error.hpp"
#include "icafuse/numerics.hpp"

namespace icafuse {

std::size_t HistogramPdf::bin_of(double v) const {
    if (degenerate()) return 0;
    const double pos = (v - lower) / (upper - lower) * static_cast<double>(bin_count);
    if (!(pos > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(pos), bin_count - 1);
}

double HistogramPdf::density(double v) const {
    if (v < lower || v > upper) return 0.0;
    if (degenerate()) return v == lower ? 1.0 : 0.0;
    return masses[bin_of(v)] / bin_width();
}

HistogramPdf fit_histogram(std::span<const double> samples, std::size_t bin_count) {
    if (samples.empty()) throw ValidationError("fit_histogram: no samples");
    if (bin_count < 1) throw ValidationError("fit_histogram: bin_count must be >= 1");
    HistogramPdf pdf;
    pdf.bin_count = bin_count;
    const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    if (!std::isfinite(*lo) || !std::isfinite(*hi)) throw ValidationError("fit_histogram: non-finite sample");
    for (double s : samples) {
        if (!std::isfinite(s)) throw ValidationError("fit_histogram: non-finite sample");
    }
    pdf.lower = *lo;
    pdf.upper = *hi;
    pdf.masses.assign(bin_count, 0.0);
    if (pdf.degenerate()) {
        pdf.masses[0] = 1.0;
        return pdf;
    }
    std::vector<std::size_t> counts(bin_count, 0);
    for (double s : samples) ++counts[pdf.bin_of(s)];
    const double total = static_cast<double>(samples.size());
    for (std::size_t b = 0; b < bin_count; ++b) pdf.masses[b] = static_cast<double>(counts[b]) / total;
    return pdf;
}

std::vector<double> rejection_sample(const HistogramPdf& pdf, std::size_t m, RngStream& rng) {
    std::vector<double> out;
    out.reserve(m);
    if (pdf.degenerate()) {
        out.assign(m, pdf.lower);
        return out;
    }
    // Equal-width bins: density ratio equals mass ratio.
    const double max_mass = *std::max_element(pdf.masses.begin(), pdf.masses.end());
    if (!(max_mass > 0.0)) throw ValidationError("rejection_sample: histogram has no mass");
    while (out.size() < m) {
        const double v = rng.uniform(pdf.lower, pdf.upper);
        const double u = rng.uniform();
        if (u * max_mass < pdf.masses[pdf.bin_of(v)]) out.push_back(v);
    }
    return out;
}

Matrix spectral_root_of(const Matrix& covariance) {
    const EigenDecomposition eig = sym_eig(covariance);
    const Vector root = eig.eigenvalues.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors * root.asDiagonal();
}

MvnParams fit_mvn(const Matrix& a) {
    if (a.rows() < 2) throw ValidationError("fit_mvn needs at least 2 rows, got " + std::to_string(a.rows()));
    MvnParams p;
    p.mean = a.colwise().mean().transpose();
    const Matrix centered = a.rowwise() - p.mean.transpose();
    p.covariance = centered.transpose() * centered / static_cast<double>(a.rows() - 1);
    p.spectral_root = spectral_root_of(p.covariance);
    return p;
}

Matrix mvn_sample(const MvnParams& params, std::size_t m, RngStream& rng) {
    const auto c = static_cast<Eigen::Index>(params.dims());
    Matrix z(static_cast<Eigen::Index>(m), c);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    Matrix out = z * params.spectral_root.transpose();
    out.rowwise() += params.mean.transpose();
    return out;
}

}  // namespace icafuse
