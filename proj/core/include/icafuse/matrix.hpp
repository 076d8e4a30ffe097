#pragma once

#include <Eigen/Core>

namespace icafuse {

// Dense row-major real matrix; the subject x feature container used throughout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace icafuse
