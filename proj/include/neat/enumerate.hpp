#pragma once

#include <cstdint>
#include <vector>

#include "neat/forward.hpp"
#include "neat/reward.hpp"
#include "neat/sample.hpp"

namespace neat {

// Exact statistics of the decode distribution for one query, computed by
// walking every reachable response. Outcome space mirrors sampling: a natural
// EOS at depth j < max_len carries its EOS draw probability; a length-capped
// branch at depth max_len carries the prefix probability alone (the forced EOS
// is never drawn). Masses therefore sum to one by construction.
struct EnumStats {
    double expected_reward = 0.0;
    double total_mass = 0.0;
    double p_any_bad = 0.0;            // probability the response has >= 1 bad token
    double expected_bad_tokens = 0.0;
    std::int64_t n_outcomes = 0;
    std::int64_t n_dist_evals = 0;
};

namespace detail {

struct EnumWalker {
    const RewardSpec& spec;
    int family;
    int max_len;
    int vocab;
    SeqEval& ev;
    std::vector<std::vector<double>> dist;  // one buffer per depth
    EnumStats stats;
    int ngood = 0, nbad = 0;

    void outcome(double mass, int size, bool truncated) {
        const int over = size - spec.target_len;
        double r = spec.weights.good * ngood + spec.weights.bad * nbad +
                   spec.weights.len * (over > 0 ? over : 0) +
                   (truncated ? spec.weights.trunc : 0.0);
        stats.expected_reward += mass * r;
        stats.total_mass += mass;
        stats.expected_bad_tokens += mass * nbad;
        if (nbad == 0) stats.p_any_bad -= mass;  // accumulates -P(no bad); fixed up at the end
        ++stats.n_outcomes;
    }

    void walk(int depth, double prefix_mass) {
        if (depth == max_len) {
            // length cap: EOS appended without a draw, size max_len+1, truncated
            outcome(prefix_mass, max_len + 1, max_len + 1 > spec.max_len);
            return;
        }
        auto& probs = dist[static_cast<std::size_t>(depth)];
        response_distribution(ev.logits_at(ev.len() - 1), vocab, probs);
        ++stats.n_dist_evals;
        outcome(prefix_mass * probs[kEos], depth + 1, depth + 1 > spec.max_len);
        const bool leaf_children = depth + 1 == max_len;
        for (TokenId c = kFirstContent; c < vocab; ++c) {
            const bool bad = spec.is_bad(c);
            const bool good = spec.is_good(family, c);
            if (good) ++ngood;
            if (bad) ++nbad;
            if (leaf_children) {
                // capped children contribute O(1) each; no model evaluation needed
                outcome(prefix_mass * probs[static_cast<std::size_t>(c)], max_len + 1,
                        max_len + 1 > spec.max_len);
            } else {
                ev.push(c);
                walk(depth + 1, prefix_mass * probs[static_cast<std::size_t>(c)]);
                ev.truncate(ev.len() - 1);
            }
            if (good) --ngood;
            if (bad) --nbad;
        }
    }
};

}  // namespace detail

inline std::int64_t enum_outcome_count(int vocab, int max_len) {
    const std::int64_t branch = vocab - 3;  // content tokens (no BOS/SEP/EOS)
    std::int64_t total = 0, level = 1;
    for (int d = 0; d <= max_len; ++d) {
        total += level;
        if (total > (std::int64_t{1} << 40)) return total;
        level *= branch;
    }
    return total;
}

inline constexpr std::int64_t kEnumOutcomeLimit = 1000000;

// Walk from an already-rendered context (a steered prompt, say). The family
// picks the reward column explicitly since the context no longer implies it.
inline EnumStats enumerate_context_stats(const ModelParams& params, const RewardSpec& spec,
                                         int family, const TokenSeq& ctx, int max_len) {
    if (family < 0 || family >= static_cast<int>(spec.family_names.size()))
        throw DomainError("family index out of range");
    if (max_len < 1) throw DomainError("max_len must be positive");
    if (ctx.empty() || ctx.front() != kBos || ctx.back() != kSep)
        throw StructureError("context must run BOS ... SEP");
    const ModelArch& a = params.arch();
    if (enum_outcome_count(a.vocab, max_len) > kEnumOutcomeLimit)
        throw CapacityError("enumeration outcome count exceeds limit");
    if (static_cast<std::int64_t>(ctx.size()) + max_len > a.max_seq)
        throw LengthError("context leaves no room for enumeration depth");

    SeqEval ev;
    ev.reset(params);
    ev.push_all(ctx);
    detail::EnumWalker w{spec, family, max_len, a.vocab, ev, {}, {}, 0, 0};
    w.dist.resize(static_cast<std::size_t>(max_len));
    w.walk(0, 1.0);
    w.stats.p_any_bad += w.stats.total_mass;  // P(any bad) = total - P(no bad)
    return w.stats;
}

inline EnumStats enumerate_decode_stats(const ModelParams& params, const RewardSpec& spec,
                                        const TokenSeq& query, int max_len) {
    check_query_role(query);
    return enumerate_context_stats(params, spec, spec.family_of(query), make_context(query),
                                   max_len);
}

}  // namespace neat
