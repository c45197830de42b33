#include "ornatag/combiner.hpp"

namespace ornatag {

KnowledgeTagging tag_with_knowledge(const TaggerModel& model, const RuleSet& rules, const Melody& melody) {
    KnowledgeTagging out;
    out.p2 = posterior_marginals(model, melody);
    out.base = viterbi_decode(model, melody);
    auto weights = build_weight_matrix_logged(rules, melody, out.base, model.num_tags());
    out.p1 = std::move(weights.weights);
    out.firing_log = std::move(weights.firings);
    out.combined = combine(out.p1, out.p2);
    out.final = decode(out.combined);
    return out;
}

}  // namespace ornatag
