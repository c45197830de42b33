#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ornatag/rules.hpp"
#include "ornatag/score_model.hpp"

namespace ornatag {

inline constexpr int kDurationBuckets = 6;

// Index of the duration bucket used by the emission bias, matching
// duration_bucket(): (0,1/4] (1/4,1/2] (1/2,1] (1,2] (2,3] (3,inf).
int duration_bucket_index(const Rational& duration);

struct DurationChoice {
    Rational duration;
    double probability = 0.0;
};

// Generative process for synthetic tagged melodies: tags follow a Markov
// chain, each note's duration is drawn from the pool reweighted by the tag's
// bucket bias, pitches do a bounded random walk, and planted Type1 rules then
// overwrite gold tags wherever their antecedent holds.
struct SynthProfile {
    TagSet tagset;
    int pitch_low = 60;
    int pitch_high = 84;
    std::vector<DurationChoice> duration_pool;
    Eigen::MatrixXd tag_markov;     // H x H, row-stochastic
    Eigen::MatrixXd emission_bias;  // H x kDurationBuckets, positive multipliers
    RuleSet planted_rules;
    int min_length = 8;
    int max_length = 64;

    // Throws InvalidArgument when a probability table or range is inconsistent.
    void validate() const;
};

TagSet default_tagset();

// Default tag set, chain with 0.5 self-transition, and the planted rule
// `IF duration(@t) > 3 THEN tag(@t) = trills`.
SynthProfile default_profile();

// JSON profile; absent keys fall back to default_profile() values.
SynthProfile parse_profile(std::string_view json_text);

TaggedCorpus generate_synthetic(const SynthProfile& profile, std::size_t n_melodies, std::uint64_t seed);

struct TagMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;  // gold count
};

struct Metrics {
    double token_accuracy = 0.0;
    std::vector<TagMetrics> per_tag;
    double macro_f1 = 0.0;
    double rule_satisfaction = 1.0;
    Eigen::MatrixXi confusion;  // rows gold, columns predicted
    std::size_t total = 0;
};

Metrics evaluate(std::span<const StateSequence> predictions, const TaggedCorpus& gold);

struct SatisfactionCount {
    std::size_t satisfied = 0;
    std::size_t firings = 0;

    double rate() const { return firings == 0 ? 1.0 : static_cast<double>(satisfied) / static_cast<double>(firings); }
    SatisfactionCount& operator+=(const SatisfactionCount& other) {
        satisfied += other.satisfied;
        firings += other.firings;
        return *this;
    }
};

SatisfactionCount count_rule_satisfaction(const StateSequence& predicted, const Melody& melody, const RuleSet& rules,
                                          const StateSequence& base);

// Fraction of (rule, position) firings whose predicted tag at the target
// equals the rule's consequent; 1.0 when nothing fires.
double rule_satisfaction(const StateSequence& predicted, const Melody& melody, const RuleSet& rules,
                         const StateSequence& base);

// Seeded melody-level split.
std::pair<TaggedCorpus, TaggedCorpus> split(const TaggedCorpus& corpus, double train_fraction, std::uint64_t seed);

// Stable-key JSON object, reals with six decimals.
std::string metrics_to_json(const Metrics& metrics, const TagSet& tagset);

}  // namespace ornatag
