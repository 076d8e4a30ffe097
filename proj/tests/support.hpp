#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>
#include <unistd.h>

#include "icafuse/matrix.hpp"
#include "icafuse/rng.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("icafuse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline icafuse::Matrix random_matrix(icafuse::RngStream& rng, long rows, long cols) {
    icafuse::Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

}  // namespace testing

namespace testing {

// Observed rows x = mixing * sources for independent non-Gaussian sources
// over `samples` columns. Source k cycles through uniform, Laplace,
// exponential and a bimodal mixture.
struct ToyIca {
    icafuse::Matrix mixing;   // rows x k
    icafuse::Matrix sources;  // k x samples
    icafuse::Matrix x;
};

inline ToyIca make_toy_ica(icafuse::RngStream& rng, long k, long samples, long rows) {
    ToyIca t;
    t.sources.resize(k, samples);
    for (long s = 0; s < k; ++s) {
        for (long j = 0; j < samples; ++j) {
            double v = 0;
            switch (s % 4) {
                case 0: v = rng.uniform(-1.7320508, 1.7320508); break;
                case 1: v = (rng.uniform() < 0.5 ? -1 : 1) * -std::log(1 - rng.uniform()); break;
                case 2: v = -std::log(1 - rng.uniform()) - 1; break;
                default: v = (rng.uniform() < 0.5 ? -1.5 : 1.5) + 0.4 * rng.normal(); break;
            }
            t.sources(s, j) = v;
        }
    }
    t.mixing = random_matrix(rng, rows, k);
    t.x = t.mixing * t.sources;
    return t;
}

// |corr| for the best one-to-one matching of estimated to true sources.
inline std::vector<double> matched_correlations(const icafuse::Matrix& est, const icafuse::Matrix& truth) {
    const long k = truth.rows();
    icafuse::Matrix c(k, k);
    for (long i = 0; i < k; ++i) {
        for (long j = 0; j < k; ++j) {
            const auto a = est.row(i).array() - est.row(i).mean();
            const auto b = truth.row(j).array() - truth.row(j).mean();
            c(i, j) = std::abs((a * b).sum() / std::sqrt((a * a).sum() * (b * b).sum()));
        }
    }
    std::vector<int> perm(k);
    for (long i = 0; i < k; ++i) perm[i] = static_cast<int>(i);
    std::vector<double> best;
    double best_sum = -1;
    do {
        double sum = 0;
        std::vector<double> cur(k);
        for (long i = 0; i < k; ++i) sum += cur[i] = c(i, perm[i]);
        if (sum > best_sum) {
            best_sum = sum;
            best = cur;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Amari index of a square matrix: 0 for a scaled permutation, at most 1.
inline double amari_index(const icafuse::Matrix& p) {
    const long k = p.rows();
    const icafuse::Matrix a = p.cwiseAbs();
    double sum = 0;
    for (long i = 0; i < k; ++i) sum += a.row(i).sum() / a.row(i).maxCoeff() - 1;
    for (long j = 0; j < k; ++j) sum += a.col(j).sum() / a.col(j).maxCoeff() - 1;
    return sum / (2.0 * k * (k - 1));
}

}  // namespace testing
