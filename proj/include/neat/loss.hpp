#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "neat/backward.hpp"
#include "neat/dataset.hpp"
#include "neat/forward.hpp"

namespace neat {

struct LossConfig {
    double alpha = 1.0;  // ranking weight
    double beta = 0.1;   // negative-response penalty weight
    double tau = 8.0;    // per-token clip on the penalty NLL
};

struct LossBreakdown {
    double sft = 0.0;
    double ranking = 0.0;
    double penalty = 0.0;
    double total = 0.0;
    bool clipped = false;  // any worst-response token hit the tau clip
    int best = -1;
    int worst = -1;
};

// Best = highest reward, worst = lowest, each at the lowest qualifying index;
// when every reward ties, worst moves to the last index so the two roles stay
// distinct.
inline std::pair<int, int> select_extremes(const std::vector<double>& rewards) {
    const int n = static_cast<int>(rewards.size());
    if (n < 2) throw DomainError("need at least two responses to rank");
    int best = 0, worst = 0;
    for (int i = 1; i < n; ++i) {
        if (rewards[static_cast<std::size_t>(i)] > rewards[static_cast<std::size_t>(best)]) best = i;
        if (rewards[static_cast<std::size_t>(i)] < rewards[static_cast<std::size_t>(worst)]) worst = i;
    }
    if (best == worst) worst = n - 1;  // all rewards equal
    return {best, worst};
}

// Pairwise hinge on length-normalized log-probs: every pair ordered by reward
// contributes max(0, p_low - p_high).
inline double ranking_loss_from_logprobs(const std::vector<double>& p,
                                         const std::vector<double>& rewards) {
    if (p.size() != rewards.size()) throw DomainError("logprob/reward length mismatch");
    const int n = static_cast<int>(p.size());
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (rewards[static_cast<std::size_t>(i)] < rewards[static_cast<std::size_t>(j)])
                acc += std::max(0.0, p[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(j)]);
    return acc;
}

// Hinge coefficients: c[i] = d(ranking)/d(p_i). Ties in p contribute nothing
// (subgradient zero at the kink).
inline std::vector<double> ranking_coeffs(const std::vector<double>& p,
                                          const std::vector<double>& rewards) {
    const int n = static_cast<int>(p.size());
    std::vector<double> c(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (rewards[static_cast<std::size_t>(i)] < rewards[static_cast<std::size_t>(j)] &&
                p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(j)]) {
                c[static_cast<std::size_t>(i)] += 1.0;
                c[static_cast<std::size_t>(j)] -= 1.0;
            }
        }
    }
    return c;
}

// Scratch shared across loss evaluations so the hot path does not allocate.
struct LossWorkspace {
    SeqEval ev;
    BackwardPass bp;
    std::vector<double> weights;
    std::vector<std::vector<double>> token_lp;  // per response, per-token log-probs
    std::vector<double> p;                      // length-normalized conditional log-probs
    std::vector<double> rewards;
};

namespace detail {

// Fills ws.token_lp / ws.p / ws.rewards for every response of `rec`, sharing
// the [BOS, query, SEP] prefix across responses via truncate().
inline void record_forward(LossWorkspace& ws, const ModelParams& params, const PreferenceRecord& rec) {
    const ModelArch& a = params.arch();
    const TokenSeq ctx = make_context(rec.query);
    const int ctx_len = static_cast<int>(ctx.size());
    ws.ev.reset(params);
    ws.ev.push_all(ctx);
    const std::size_t n = rec.responses.size();
    ws.token_lp.resize(n);
    ws.p.resize(n);
    ws.rewards.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const TokenSeq& y = rec.responses[i].tokens;
        check_response_role(y);
        if (static_cast<std::int64_t>(ctx_len) + static_cast<std::int64_t>(y.size()) > a.max_seq)
            throw LengthError("query+response exceeds model context length");
        auto& lp = ws.token_lp[i];
        lp.resize(y.size());
        for (std::size_t t = 0; t < y.size(); ++t) {
            lp[t] = ws.ev.logprob_at(ws.ev.len() - 1, y[t]);
            if (t + 1 < y.size()) ws.ev.push(y[t]);
        }
        double s = 0.0;
        for (double v : lp) s += v;
        if (!std::isfinite(s)) throw NumericError("non-finite response log-prob");
        ws.p[i] = s / static_cast<double>(y.size());
        ws.rewards[i] = rec.responses[i].reward;
        ws.ev.truncate(ctx_len);
    }
}

}  // namespace detail

// Loss of one record under Eq. (total) = sft + alpha*ranking - beta*penalty,
// where sft is the unnormalized NLL of the best response, penalty the
// per-token tau-clipped NLL of the worst, ranking the pairwise hinge over all
// responses.
inline LossBreakdown record_loss(LossWorkspace& ws, const ModelParams& params,
                                 const PreferenceRecord& rec, const LossConfig& cfg) {
    detail::record_forward(ws, params, rec);
    LossBreakdown out;
    auto [best, worst] = select_extremes(ws.rewards);
    out.best = best;
    out.worst = worst;
    for (double lp : ws.token_lp[static_cast<std::size_t>(best)]) out.sft -= lp;
    for (double lp : ws.token_lp[static_cast<std::size_t>(worst)]) {
        const double nll = -lp;
        if (nll >= cfg.tau) {
            out.penalty += cfg.tau;
            out.clipped = true;
        } else {
            out.penalty += nll;
        }
    }
    out.ranking = ranking_loss_from_logprobs(ws.p, ws.rewards);
    out.total = out.sft + cfg.alpha * out.ranking - cfg.beta * out.penalty;
    if (!std::isfinite(out.total)) throw NumericError("non-finite loss");
    return out;
}

inline LossBreakdown record_loss(const ModelParams& params, const PreferenceRecord& rec,
                                 const LossConfig& cfg) {
    LossWorkspace ws;
    return record_loss(ws, params, rec, cfg);
}

enum class GradKind { sft, ranking, penalty, total };

namespace detail {

// Per-token weights d(loss)/d(logprob of response token t). For the total:
//   best-response tokens:    -1                 (sft term)
//   every response's tokens: alpha * c_i / n_i  (ranking through p_i)
//   worst-response tokens:   +beta where the clip is inactive (nll < tau)
// Individual kinds carry their own unscaled derivative (total folds in
// alpha and -beta). `scale` multiplies everything (batch averaging).
inline void record_grad_weights(LossWorkspace& ws, const PreferenceRecord& rec,
                                const LossConfig& cfg, GradKind kind, int best, int worst,
                                const std::vector<double>& c, double scale,
                                std::vector<std::vector<double>>& out) {
    const std::size_t n = rec.responses.size();
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t len = rec.responses[i].tokens.size();
        double base = 0.0;
        if (kind == GradKind::ranking) base = c[i] / static_cast<double>(len);
        if (kind == GradKind::total) base = cfg.alpha * c[i] / static_cast<double>(len);
        out[i].assign(len, base);
        if (static_cast<int>(i) == best && (kind == GradKind::sft || kind == GradKind::total))
            for (auto& w : out[i]) w += -1.0;
        if (static_cast<int>(i) == worst && (kind == GradKind::penalty || kind == GradKind::total)) {
            const double per_tok = kind == GradKind::penalty ? -1.0 : cfg.beta;
            for (std::size_t t = 0; t < len; ++t)
                if (-ws.token_lp[i][t] < cfg.tau) out[i][t] += per_tok;
        }
        for (auto& w : out[i]) w *= scale;
    }
}

}  // namespace detail

// Computes the record loss and accumulates scale * d(kind)/d(theta) into grad.
inline LossBreakdown record_loss_grad(LossWorkspace& ws, const ModelParams& params,
                                      const PreferenceRecord& rec, const LossConfig& cfg,
                                      GradVector& grad, double scale = 1.0,
                                      GradKind kind = GradKind::total) {
    LossBreakdown out = record_loss(ws, params, rec, cfg);
    const std::vector<double> c = ranking_coeffs(ws.p, ws.rewards);
    std::vector<std::vector<double>> wtok;
    detail::record_grad_weights(ws, rec, cfg, kind, out.best, out.worst, c, scale, wtok);

    const TokenSeq ctx = make_context(rec.query);
    const int ctx_len = static_cast<int>(ctx.size());
    ws.ev.reset(params);
    ws.ev.push_all(ctx);
    for (std::size_t i = 0; i < rec.responses.size(); ++i) {
        bool any = false;
        for (double w : wtok[i])
            if (w != 0.0) { any = true; break; }
        if (!any) continue;
        const TokenSeq& y = rec.responses[i].tokens;
        // push the whole response (EOS included) so the weight for each token
        // lines up with the position that predicts it
        for (TokenId t : y) ws.ev.push(t);
        ws.weights.assign(static_cast<std::size_t>(ws.ev.len()), 0.0);
        for (std::size_t t = 0; t < y.size(); ++t)
            ws.weights[static_cast<std::size_t>(ctx_len) + t] = wtok[i][t];
        ws.bp.accumulate(ws.ev, ws.weights, grad);
        ws.ev.truncate(ctx_len);
    }
    return out;
}

}  // namespace neat
