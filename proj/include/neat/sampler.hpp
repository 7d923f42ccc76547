#pragma once

#include "neat/dataset.hpp"
#include "neat/prompt.hpp"
#include "neat/reward.hpp"
#include "neat/sample.hpp"

namespace neat {

// One prompted draw: render the steering context for the query, sample a
// response at temperature lambda, and score it against the plain query's
// family. The prefix shapes the draw but never reaches the scorer.
inline ScoredResponse sample_prompted(SeqEval& ev, const ModelParams& params,
                                      const PromptTemplate& tmpl, const TokenSeq& query,
                                      const RewardSpec& spec, int family, double lambda,
                                      int max_len, Rng& rng) {
    ScoredResponse sr;
    sr.tokens =
        sample_from_context(ev, params, render_prompted_context(tmpl, query), max_len, rng, lambda);
    sr.reward = score_response(spec, family, sr.tokens);
    sr.origin =
        tmpl.kind == PromptTemplate::Kind::positive ? kOriginPositive : kOriginNegative;
    return sr;
}

// Standalone flavor: resolves the family from the query, budgets the draw by
// the reward spec's length cap, and derives its RNG from the seed alone.
inline ScoredResponse sample_prompted(const ModelParams& params, const PromptTemplate& tmpl,
                                      const TokenSeq& query, const RewardSpec& spec, double lambda,
                                      std::uint64_t rng_seed) {
    SeqEval ev;
    Rng rng(rng_seed);
    return sample_prompted(ev, params, tmpl, query, spec, spec.family_of(query), lambda,
                           spec.max_len, rng);
}

}  // namespace neat
