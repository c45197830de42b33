#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ornatag/score_model.hpp"

namespace ornatag {

enum class Comparator { Less, LessEqual, Greater, GreaterEqual, Equal, NotEqual };

enum class ObsFeature { Duration, Midi, Octave, Step, Position };

// Reads an observation at `@t + offset` and compares it with a literal.
// Duration literals are rationals, step literals are letters (compared by
// step letter only), the rest are integers.
struct ObsClause {
    ObsFeature feature = ObsFeature::Duration;
    int offset = 0;
    Comparator comparator = Comparator::Greater;
    std::variant<Rational, long long, char> literal;

    friend bool operator==(const ObsClause&, const ObsClause&) = default;
};

// Reads the base prediction at `@t + offset`: `pred(@t-1) == trills`.
struct StateClause {
    int offset = 0;
    bool equal = true;
    int tag = 0;

    friend bool operator==(const StateClause&, const StateClause&) = default;
};

using Clause = std::variant<ObsClause, StateClause>;

enum class RuleClass { Type1, Type2 };

// IF <clauses> THEN tag(@t + consequent_offset) = <tag> [WEIGHT w]
struct Rule {
    std::vector<Clause> antecedent;
    int consequent_tag = 0;
    int consequent_offset = 0;
    std::optional<double> weight;  // nullopt -> the class default (h1 or h2)
    int source_line = 0;

    // Type2 when any clause reads the state sequence.
    RuleClass rule_class() const;

    friend bool operator==(const Rule&, const Rule&) = default;
};

inline constexpr double kDefaultConfidence = 2.0;

struct RuleSet {
    std::vector<Rule> rules;
    double h1 = kDefaultConfidence;
    double h2 = kDefaultConfidence;
    // Whether H1/H2 directives were present in the source text.
    bool has_h1 = false;
    bool has_h2 = false;

    double weight_of(const Rule& rule) const;

    friend bool operator==(const RuleSet&, const RuleSet&) = default;
};

RuleSet parse_rules(std::string_view text, const TagSet& tagset);
std::string serialize_rule(const Rule& rule, const TagSet& tagset);
std::string serialize_rules(const RuleSet& rules, const TagSet& tagset);

// Antecedent truth with @t bound to `t`. A clause whose position falls outside
// the melody makes the whole antecedent false.
bool evaluate_antecedent(const Rule& rule, const Melody& melody, const StateSequence& base, std::size_t t);

// Strictly positive H x T multiplier matrix (rows are tags, columns positions).
using WeightMatrix = Eigen::MatrixXd;

struct Firing {
    int source_line = 0;
    int position = 0;  // target column
    int tag = 0;       // target row
    double weight = 1.0;

    friend bool operator==(const Firing&, const Firing&) = default;
};

struct WeightResult {
    WeightMatrix weights;
    std::vector<Firing> firings;
};

// Starts from an all-ones matrix and, rule by rule in source order, multiplies
// cell [tag, t + offset] by the rule weight at every position t where the
// antecedent holds. Targets outside the melody are skipped.
WeightResult build_weight_matrix_logged(const RuleSet& rules, const Melody& melody, const StateSequence& base,
                                        int num_tags);
WeightMatrix build_weight_matrix(const RuleSet& rules, const Melody& melody, const StateSequence& base,
                                 int num_tags);

// `line <n>: Type<1|2> tag=<name> weight=<w|default>`
std::string describe_rule(const Rule& rule, const TagSet& tagset);

std::string format_weight(double weight);

}  // namespace ornatag
