#pragma once

#include <Eigen/Dense>

#include <vector>

#include "ornatag/error.hpp"
#include "ornatag/rules.hpp"
#include "ornatag/tagger.hpp"

namespace ornatag {

using CombinedMatrix = Eigen::MatrixXd;

// Hadamard product of the rule weights and the base predictions. Scores are
// left unnormalized.
template <typename DerivedW, typename DerivedP>
auto combine(const Eigen::MatrixBase<DerivedW>& weights, const Eigen::MatrixBase<DerivedP>& predictions) {
    if (weights.rows() != predictions.rows() || weights.cols() != predictions.cols())
        throw Error(ErrorKind::ShapeMismatch, "weight matrix is " + std::to_string(weights.rows()) + "x" +
                                                  std::to_string(weights.cols()) + ", prediction matrix is " +
                                                  std::to_string(predictions.rows()) + "x" +
                                                  std::to_string(predictions.cols()));
    return weights.cwiseProduct(predictions);
}

// Per column, the smallest row index attaining the column maximum.
template <typename Derived>
StateSequence decode(const Eigen::MatrixBase<Derived>& scores) {
    StateSequence out(static_cast<std::size_t>(scores.cols()));
    for (Eigen::Index t = 0; t < scores.cols(); ++t) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < scores.rows(); ++k)
            if (scores(k, t) > scores(best, t)) best = k;
        out[static_cast<std::size_t>(t)] = static_cast<int>(best);
    }
    return out;
}

// Columns rescaled to sum to one; for display only.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> normalize_columns(
    const Eigen::MatrixBase<Derived>& scores) {
    auto out = scores.eval();
    for (Eigen::Index t = 0; t < out.cols(); ++t) {
        const auto total = out.col(t).sum();
        if (total > 0) out.col(t) /= total;
    }
    return out;
}

struct KnowledgeTagging {
    StateSequence final;
    StateSequence base;
    WeightMatrix p1;
    PredictionMatrix p2;
    CombinedMatrix combined;
    std::vector<Firing> firing_log;
};

// Base tagger -> rule weights -> fusion -> per-position argmax.
KnowledgeTagging tag_with_knowledge(const TaggerModel& model, const RuleSet& rules, const Melody& melody);

}  // namespace ornatag
