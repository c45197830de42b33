#pragma once

// Five-note example with four technique tags: the base prediction is
// [trills, none, fermata, none, mordent] and the two rules below turn it into
// [trills, none, mordent, none, trills].

#include <Eigen/Dense>

#include "ornatag/rules.hpp"
#include "ornatag/score_model.hpp"

namespace ornatag::testing {

struct FlipFixture {
    TagSet tagset;
    Melody melody;
    Eigen::MatrixXd p2;
    RuleSet rules;
    StateSequence expected_base;
    StateSequence expected_final;
};

inline FlipFixture flip_fixture() {
    FlipFixture fx;
    fx.tagset = TagSet({"none", "trills", "fermata", "mordent"});
    for (const char* token : {"a12", "b12", "c24", "a12", "e12"}) fx.melody.notes.push_back(parse_legacy_note(token));

    fx.p2.resize(4, 5);
    // clang-format off
    fx.p2 <<
        0.20, 0.70, 0.10, 0.60, 0.20,   // none
        0.60, 0.10, 0.10, 0.20, 0.30,   // trills
        0.10, 0.10, 0.50, 0.10, 0.10,   // fermata
        0.10, 0.10, 0.30, 0.10, 0.40;   // mordent
    // clang-format on

    fx.rules = parse_rules(
        "# long notes after the opening turn into mordents\n"
        "IF duration(@t) > 3 AND position(@t) > 0 THEN tag(@t) = mordent WEIGHT 6\n"
        "# an E following an unornamented note gets a trill\n"
        "IF pred(@t-1) == none AND step(@t) == E THEN tag(@t) = trills WEIGHT 4\n",
        fx.tagset);

    const int none = 0, trills = 1, fermata = 2, mordent = 3;
    fx.expected_base = {trills, none, fermata, none, mordent};
    fx.expected_final = {trills, none, mordent, none, trills};
    return fx;
}

}  // namespace ornatag::testing
