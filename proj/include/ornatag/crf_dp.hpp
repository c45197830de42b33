#pragma once

// Linear-chain dynamic programs over an H x T emission score matrix (rows are
// tags, columns are positions) and an H x H transition matrix (row = previous
// tag, column = next tag). Everything runs in log space.

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace ornatag {

template <typename Scalar>
using ScoreMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// log(sum(exp(x))) without overflow; -inf for an all -inf input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    const Scalar max = x.maxCoeff();
    if (!std::isfinite(max)) return max;
    return max + std::log((x.derived().array() - max).exp().sum());
}

template <typename Scalar>
struct ForwardBackward {
    // alpha(k, t): log-sum of prefix scores ending in tag k at t, emission at t included.
    ScoreMatrix<Scalar> alpha;
    // beta(k, t): log-sum of suffix scores after t given tag k at t, emission at t excluded.
    ScoreMatrix<Scalar> beta;
    Scalar log_partition = 0;
};

template <typename DerivedE, typename DerivedA>
ForwardBackward<typename DerivedE::Scalar> forward_backward(const Eigen::MatrixBase<DerivedE>& emissions,
                                                            const Eigen::MatrixBase<DerivedA>& transitions) {
    using Scalar = typename DerivedE::Scalar;
    const Eigen::Index tags = emissions.rows();
    const Eigen::Index length = emissions.cols();
    assert(length >= 1 && transitions.rows() == tags && transitions.cols() == tags);

    ForwardBackward<Scalar> fb;
    fb.alpha.resize(tags, length);
    fb.beta.resize(tags, length);

    fb.alpha.col(0) = emissions.col(0);
    for (Eigen::Index t = 1; t < length; ++t) {
        for (Eigen::Index k = 0; k < tags; ++k)
            fb.alpha(k, t) = emissions(k, t) + log_sum_exp(fb.alpha.col(t - 1) + transitions.col(k));
    }

    fb.beta.col(length - 1).setZero();
    for (Eigen::Index t = length - 2; t >= 0; --t) {
        const auto next = (emissions.col(t + 1) + fb.beta.col(t + 1)).eval();
        for (Eigen::Index k = 0; k < tags; ++k)
            fb.beta(k, t) = log_sum_exp(transitions.row(k).transpose() + next);
    }

    fb.log_partition = log_sum_exp(fb.alpha.col(length - 1));
    return fb;
}

// Per-position posterior marginals P(tag_k at t | observations). Each column is
// renormalized so it sums to one to working precision.
template <typename Scalar>
ScoreMatrix<Scalar> posterior_from(const ForwardBackward<Scalar>& fb) {
    ScoreMatrix<Scalar> marginals = ((fb.alpha + fb.beta).array() - fb.log_partition).exp().matrix();
    for (Eigen::Index t = 0; t < marginals.cols(); ++t) marginals.col(t) /= marginals.col(t).sum();
    return marginals;
}

// Unnormalized log score of one tag path.
template <typename DerivedE, typename DerivedA>
typename DerivedE::Scalar path_score(const Eigen::MatrixBase<DerivedE>& emissions,
                                     const Eigen::MatrixBase<DerivedA>& transitions, std::span<const int> path) {
    using Scalar = typename DerivedE::Scalar;
    assert(static_cast<Eigen::Index>(path.size()) == emissions.cols());
    Scalar score = 0;
    for (std::size_t t = 0; t < path.size(); ++t) {
        score += emissions(path[t], static_cast<Eigen::Index>(t));
        if (t > 0) score += transitions(path[t - 1], path[t]);
    }
    return score;
}

// Maximum-scoring path. Among maximal paths the lexicographically smallest
// index sequence is returned: a backward max-product pass fills best suffix
// scores, then a forward sweep picks the smallest index attaining each max.
template <typename DerivedE, typename DerivedA>
std::vector<int> viterbi_path(const Eigen::MatrixBase<DerivedE>& emissions,
                              const Eigen::MatrixBase<DerivedA>& transitions) {
    using Scalar = typename DerivedE::Scalar;
    const Eigen::Index tags = emissions.rows();
    const Eigen::Index length = emissions.cols();
    assert(length >= 1 && tags >= 1);

    // suffix(k, t): best score of positions t..T-1 given tag k at t, emission at t included.
    ScoreMatrix<Scalar> suffix(tags, length);
    suffix.col(length - 1) = emissions.col(length - 1);
    for (Eigen::Index t = length - 2; t >= 0; --t) {
        for (Eigen::Index k = 0; k < tags; ++k)
            suffix(k, t) = emissions(k, t) + (transitions.row(k).transpose() + suffix.col(t + 1)).maxCoeff();
    }

    auto first_argmax = [](const auto& column) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < column.size(); ++k)
            if (column(k) > column(best)) best = k;
        return static_cast<int>(best);
    };

    std::vector<int> path(static_cast<std::size_t>(length));
    path[0] = first_argmax(suffix.col(0));
    for (Eigen::Index t = 1; t < length; ++t) {
        const auto candidates = (transitions.row(path[t - 1]).transpose() + suffix.col(t)).eval();
        path[static_cast<std::size_t>(t)] = first_argmax(candidates);
    }
    return path;
}

}  // namespace ornatag
