#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ornatag/score_model.hpp"

namespace ornatag {

inline constexpr std::string_view kModelMagic = "ORNATAG-MODEL";
inline constexpr int kModelFormatVersion = 1;

// Per-position posterior marginals, H rows (tags) x T columns (positions).
using PredictionMatrix = Eigen::MatrixXd;

using EmissionWeights = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TransitionWeights = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Feature name -> contiguous index. Grows until frozen. An alias makes one
// name resolve to another feature's index, so the two are indistinguishable.
class FeatureVectorizer {
public:
    // Returns the index of `name`, adding it when not frozen. Unknown names on a
    // frozen vectorizer yield nullopt.
    std::optional<int> index(const std::string& name);
    std::optional<int> find(const std::string& name) const;
    void alias(const std::string& name, int target);
    const std::vector<std::pair<std::string, int>>& aliases() const { return aliases_; }

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }
    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> lookup_;
    std::vector<std::pair<std::string, int>> aliases_;
    bool frozen_ = false;
};

struct TrainingMeta {
    int epochs = 0;
    double final_loss = 0.0;
    std::uint64_t seed = 0;
};

// Linear-chain CRF. Emission weights are num_features x H, transitions H x H
// (row = previous tag). Parameters flatten as emissions row-major followed by
// transitions row-major.
struct TaggerModel {
    TagSet tagset;
    FeatureVectorizer vectorizer;
    EmissionWeights emission_weights;
    TransitionWeights transition_weights;
    TrainingMeta meta;

    int num_tags() const { return tagset.size(); }
    int num_features() const { return vectorizer.size(); }
    Eigen::Index num_parameters() const { return emission_weights.size() + transition_weights.size(); }

    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& flat);
};

// Zero-weight model over a frozen vectorizer.
TaggerModel make_model(TagSet tagset, FeatureVectorizer vectorizer);

// Duration bucket label: (0,1/4] (1/4,1/2] (1/2,1] (1,2] (2,3] (3,inf).
std::string duration_bucket(const Rational& duration);

// Observation features of position `t`, in a fixed order. Throws
// InvalidArgument when t is out of range.
std::vector<std::string> extract_features(const Melody& melody, std::size_t t);

// Active feature indices per position; features unknown to the frozen
// vectorizer are dropped.
using EncodedMelody = std::vector<std::vector<int>>;
EncodedMelody encode(const FeatureVectorizer& vectorizer, const Melody& melody);

// H x T emission score matrix.
Eigen::MatrixXd emission_scores(const TaggerModel& model, const EncodedMelody& encoded);
Eigen::MatrixXd emission_scores(const TaggerModel& model, const Melody& melody);

PredictionMatrix posterior_marginals(const TaggerModel& model, const Melody& melody);
StateSequence viterbi_decode(const TaggerModel& model, const Melody& melody);

// Unnormalized score of a tag path under the model.
double sequence_score(const TaggerModel& model, const Melody& melody, std::span<const int> path);

struct LossAndGradient {
    double loss = 0.0;
    Eigen::VectorXd gradient;
};

// Sum over entries of (log Z - gold path score) plus (l2 / 2) * |w|^2, and its
// gradient in the flattened parameter order.
LossAndGradient nll_and_gradient(const TaggerModel& model, std::span<const TaggedMelody> batch, double l2);
LossAndGradient nll_and_gradient(const TaggerModel& model, const TaggedCorpus& batch, double l2);

struct TrainConfig {
    int epochs = 50;
    double step_size = 0.1;
    double l2 = 0.01;
    int batch = 32;
    std::uint64_t seed = 1;
    bool shuffle = true;
    // Features hidden from the model. A withheld duration bucket is merged
    // into the nearest lower bucket seen in training (nearest higher if none),
    // so its notes look like that bucket's notes. Other withheld names are
    // simply dropped.
    std::vector<std::string> withheld_features;
    // Called after every epoch with the full-corpus objective.
    std::function<void(int epoch, double loss)> on_epoch;
};

// Mini-batch gradient descent on the per-token mean negative log-likelihood
// plus (l2 / 2) * |w|^2. Deterministic for a given seed.
TaggerModel train(const TaggedCorpus& corpus, const TrainConfig& config);

// Per-token mean negative log-likelihood plus (l2 / 2) * |w|^2 over the corpus.
double training_objective(const TaggerModel& model, const TaggedCorpus& corpus, double l2);

std::string save_model(const TaggerModel& model);
TaggerModel load_model(std::string_view contents);

}  // namespace ornatag
