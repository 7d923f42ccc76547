#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "neat/dataset.hpp"
#include "neat/enumerate.hpp"
#include "neat/forward.hpp"
#include "neat/sample.hpp"

namespace neat {

struct EvalReport {
    double avg_reward = 0.0;  // greedy decode, scored by the oracle
    double perplexity = 0.0;  // over each record's best stored response
    int n = 0;
};

inline const ScoredResponse& best_stored_response(const PreferenceRecord& rec) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < rec.responses.size(); ++i)
        if (rec.responses[i].reward > rec.responses[best].reward) best = i;
    return rec.responses[best];
}

inline EvalReport evaluate(const ModelParams& params, const RewardSpec& spec, const Dataset& data,
                           int max_len) {
    if (data.size() == 0) throw DomainError("evaluation dataset is empty");
    EvalReport rep;
    SeqEval ev;
    std::vector<std::pair<TokenSeq, TokenSeq>> ppl_corpus;
    double sum = 0.0;
    for (const auto& rec : data.records()) {
        const int fam = spec.family_index(rec.family);
        const TokenSeq y = greedy_from_context(ev, params, make_context(rec.query), max_len);
        sum += score_response(spec, fam, y);
        ppl_corpus.emplace_back(rec.query, best_stored_response(rec).tokens);
    }
    rep.n = static_cast<int>(data.size());
    rep.avg_reward = sum / rep.n;
    rep.perplexity = perplexity(params, ppl_corpus);
    return rep;
}

struct CompareReport {
    int wins = 0;    // model A beats B by at least the margin
    int losses = 0;  // model B beats A by at least the margin
    int ties = 0;
    double mean_a = 0.0;
    double mean_b = 0.0;
};

inline CompareReport compare_models(const ModelParams& a, const ModelParams& b,
                                    const RewardSpec& spec, const Dataset& data, double margin,
                                    int max_len) {
    if (data.size() == 0) throw DomainError("comparison dataset is empty");
    if (margin < 0.0) throw DomainError("comparison margin must be non-negative");
    CompareReport rep;
    SeqEval ev;
    for (const auto& rec : data.records()) {
        const int fam = spec.family_index(rec.family);
        const TokenSeq ctx = make_context(rec.query);
        const double ra = score_response(spec, fam, greedy_from_context(ev, a, ctx, max_len));
        const double rb = score_response(spec, fam, greedy_from_context(ev, b, ctx, max_len));
        rep.mean_a += ra;
        rep.mean_b += rb;
        if (ra > rb + margin) ++rep.wins;
        else if (rb > ra + margin) ++rep.losses;
        else ++rep.ties;
    }
    rep.mean_a /= static_cast<double>(data.size());
    rep.mean_b /= static_cast<double>(data.size());
    return rep;
}

// Mean exact expected decode reward over a probe basket.
inline double exact_eval_mean(const ModelParams& params, const RewardSpec& spec,
                              const std::vector<TokenSeq>& queries, int max_len) {
    if (queries.empty()) throw DomainError("probe basket is empty");
    double sum = 0.0;
    for (const auto& q : queries) sum += enumerate_decode_stats(params, spec, q, max_len).expected_reward;
    return sum / static_cast<double>(queries.size());
}

// Spearman rank correlation with average ranks for ties; 0 when either side
// has no rank variance.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DomainError("spearman length mismatch");
    const int n = static_cast<int>(x.size());
    if (n < 2) throw DomainError("spearman needs at least two points");
    auto ranks = [n](const std::vector<double>& v) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return v[static_cast<std::size_t>(a)] < v[static_cast<std::size_t>(b)]; });
        std::vector<double> r(static_cast<std::size_t>(n));
        int i = 0;
        while (i < n) {
            int j = i;
            while (j + 1 < n && v[static_cast<std::size_t>(idx[static_cast<std::size_t>(j + 1)])] ==
                                    v[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])])
                ++j;
            const double avg = 0.5 * (i + j) + 1.0;
            for (int k = i; k <= j; ++k) r[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> rx = ranks(x), ry = ranks(y);
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
        mx += rx[static_cast<std::size_t>(i)];
        my += ry[static_cast<std::size_t>(i)];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dx = rx[static_cast<std::size_t>(i)] - mx;
        const double dy = ry[static_cast<std::size_t>(i)] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace neat
