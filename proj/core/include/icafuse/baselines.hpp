#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>

#include "icafuse/datamodel.hpp"
#include "icafuse/matrix.hpp"

namespace icafuse {

struct LogisticRegressionKind {
    double l2 = 1.0;
    std::size_t max_iter = 500;
};
struct GaussianNbKind {};
struct LdaKind {
    double shrinkage = 0.5;
};
struct KnnKind {
    std::size_t k = 5;
};
using BaselineKind = std::variant<LogisticRegressionKind, GaussianNbKind, LdaKind, KnnKind>;

std::string baseline_name(const BaselineKind& kind);

struct LogisticRegressionFit {
    Vector weights;
    double bias = 0.0;
    std::size_t iterations = 0;
    std::vector<double> loss_trace;
};

struct GaussianNbFit {
    Matrix means;      // 2 x m, row = class
    Matrix variances;  // 2 x m
    double log_prior_ratio = 0.0;  // log P(SZ) - log P(HC)
};

// Linear discriminant: score = sigmoid(weights . x + bias).
struct LdaFit {
    Vector weights;
    double bias = 0.0;
};

struct KnnFit {
    Matrix train;
    std::vector<Label> labels;
    std::size_t k = 5;
};

struct BaselineModel {
    BaselineKind kind;
    std::variant<LogisticRegressionFit, GaussianNbFit, LdaFit, KnnFit> fit;
    std::size_t features = 0;
};

BaselineModel fit_baseline(const BaselineKind& kind, const Matrix& x, std::span<const Label> y);

// P(SZ)-like score in [0, 1]. kNN ties on distance go to the smaller
// training index.
Vector baseline_predict_proba(const BaselineModel& model, const Matrix& x);

}  // namespace icafuse
