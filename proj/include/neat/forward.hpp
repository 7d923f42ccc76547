#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "neat/model.hpp"

namespace neat {

namespace detail {

// out[i] = sum_j w[i*n + j] * x[j] + b[i], for i in [0, m)
inline void matvec(const double* __restrict w, const double* __restrict b,
                   const double* __restrict x, double* __restrict out, int m, int n) {
    for (int i = 0; i < m; ++i) {
        const double* __restrict row = w + static_cast<std::int64_t>(i) * n;
        double acc = b ? b[i] : 0.0;
        for (int j = 0; j < n; ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
}

inline void layernorm_fwd(const double* __restrict x, const double* __restrict g,
                          const double* __restrict b, double* __restrict out, int n,
                          double& mean_out, double& rstd_out) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += x[i];
    m /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = x[i] - m;
        var += d * d;
    }
    var /= n;
    double rstd = 1.0 / std::sqrt(var + 1e-5);
    for (int i = 0; i < n; ++i) out[i] = g[i] * ((x[i] - m) * rstd) + b[i];
    mean_out = m;
    rstd_out = rstd;
}

// tanh-form GELU; the backward pass differentiates this exact formula.
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline double gelu_tanh_arg(double x) { return kGeluC * (x + kGeluA * x * x * x); }

}  // namespace detail

// Incremental per-position evaluator. push() runs one token through the whole
// stack; truncate() backtracks, which makes the same object usable for full
// forwards, autoregressive sampling, and depth-first response enumeration.
// Every activation needed by the backward pass is cached.
class SeqEval {
public:
    void reset(const ModelParams& params) {
        p_ = &params;
        const ModelArch& a = params.arch();
        const int T = a.max_seq, d = a.dim, f = a.ffn_dim(), V = a.vocab, H = a.heads;
        if (blocks_.size() != static_cast<std::size_t>(a.blocks)) blocks_.resize(a.blocks);
        xs_.resize(static_cast<std::size_t>(a.blocks) + 1);
        for (auto& x : xs_) x.resize(static_cast<std::size_t>(T) * d);
        for (auto& b : blocks_) {
            b.ln1_mean.resize(T);
            b.ln1_rstd.resize(T);
            b.ln1_out.resize(static_cast<std::size_t>(T) * d);
            b.q.resize(static_cast<std::size_t>(T) * d);
            b.k.resize(static_cast<std::size_t>(T) * d);
            b.v.resize(static_cast<std::size_t>(T) * d);
            b.att.resize(static_cast<std::size_t>(H) * T * (T + 1) / 2);
            b.attcat.resize(static_cast<std::size_t>(T) * d);
            b.h.resize(static_cast<std::size_t>(T) * d);
            b.ln2_mean.resize(T);
            b.ln2_rstd.resize(T);
            b.ln2_out.resize(static_cast<std::size_t>(T) * d);
            b.fc1.resize(static_cast<std::size_t>(T) * f);
            b.tanh_u.resize(static_cast<std::size_t>(T) * f);
            b.gelu.resize(static_cast<std::size_t>(T) * f);
        }
        lnf_mean_.resize(T);
        lnf_rstd_.resize(T);
        lnf_out_.resize(static_cast<std::size_t>(T) * d);
        logits_.resize(static_cast<std::size_t>(T) * V);
        lse_.resize(T);
        tokens_.clear();
        tokens_.reserve(T);
        len_ = 0;
    }

    const ModelParams& params() const { return *p_; }
    int len() const { return len_; }
    const std::vector<TokenId>& tokens() const { return tokens_; }

    void truncate(int new_len) {
        len_ = new_len;
        tokens_.resize(static_cast<std::size_t>(new_len));
    }

    void push(TokenId t) {
        const ModelArch& a = p_->arch();
        const ParamLayout& L = p_->layout();
        const int d = a.dim, f = a.ffn_dim(), V = a.vocab, H = a.heads, hd = a.head_dim();
        const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
        const int pos = len_;
        if (pos >= a.max_seq) throw LengthError("sequence exceeds model context length");
        if (t < 0 || t >= V) throw StructureError("token id outside vocabulary");
        const double* w = p_->data();

        double* x0 = xs_[0].data() + static_cast<std::size_t>(pos) * d;
        const double* te = w + L.tok_emb + static_cast<std::int64_t>(t) * d;
        const double* pe = w + L.pos_emb + static_cast<std::int64_t>(pos) * d;
        for (int i = 0; i < d; ++i) x0[i] = te[i] + pe[i];

        for (int b = 0; b < a.blocks; ++b) {
            const auto& o = L.block[static_cast<std::size_t>(b)];
            BlockCache& c = blocks_[static_cast<std::size_t>(b)];
            const double* xin = xs_[static_cast<std::size_t>(b)].data() + static_cast<std::size_t>(pos) * d;

            double* n1 = c.ln1_out.data() + static_cast<std::size_t>(pos) * d;
            detail::layernorm_fwd(xin, w + o.ln1_g, w + o.ln1_b, n1, d, c.ln1_mean[pos], c.ln1_rstd[pos]);

            double* q = c.q.data() + static_cast<std::size_t>(pos) * d;
            double* k = c.k.data() + static_cast<std::size_t>(pos) * d;
            double* v = c.v.data() + static_cast<std::size_t>(pos) * d;
            detail::matvec(w + o.wq, w + o.bq, n1, q, d, d);
            detail::matvec(w + o.wk, w + o.bk, n1, k, d, d);
            detail::matvec(w + o.wv, w + o.bv, n1, v, d, d);

            double* cat = c.attcat.data() + static_cast<std::size_t>(pos) * d;
            double* att_row = c.att.data() + att_offset(pos, H);
            for (int h = 0; h < H; ++h) {
                const int ho = h * hd;
                double* alpha = att_row + static_cast<std::size_t>(h) * (pos + 1);
                double mx = -1e300;
                for (int u = 0; u <= pos; ++u) {
                    const double* ku = c.k.data() + static_cast<std::size_t>(u) * d + ho;
                    double s = 0.0;
                    for (int j = 0; j < hd; ++j) s += q[ho + j] * ku[j];
                    s *= inv_sqrt_hd;
                    alpha[u] = s;
                    if (s > mx) mx = s;
                }
                double z = 0.0;
                for (int u = 0; u <= pos; ++u) {
                    alpha[u] = std::exp(alpha[u] - mx);
                    z += alpha[u];
                }
                const double inv_z = 1.0 / z;
                for (int u = 0; u <= pos; ++u) alpha[u] *= inv_z;
                for (int j = 0; j < hd; ++j) {
                    double acc = 0.0;
                    for (int u = 0; u <= pos; ++u) acc += alpha[u] * c.v[static_cast<std::size_t>(u) * d + ho + j];
                    cat[ho + j] = acc;
                }
            }

            double* ht = c.h.data() + static_cast<std::size_t>(pos) * d;
            detail::matvec(w + o.wo, w + o.bo, cat, ht, d, d);
            for (int i = 0; i < d; ++i) ht[i] += xin[i];

            double* n2 = c.ln2_out.data() + static_cast<std::size_t>(pos) * d;
            detail::layernorm_fwd(ht, w + o.ln2_g, w + o.ln2_b, n2, d, c.ln2_mean[pos], c.ln2_rstd[pos]);

            double* u1 = c.fc1.data() + static_cast<std::size_t>(pos) * f;
            detail::matvec(w + o.fc1_w, w + o.fc1_b, n2, u1, f, d);
            double* tu = c.tanh_u.data() + static_cast<std::size_t>(pos) * f;
            double* gu = c.gelu.data() + static_cast<std::size_t>(pos) * f;
            for (int i = 0; i < f; ++i) {
                double th = std::tanh(detail::gelu_tanh_arg(u1[i]));
                tu[i] = th;
                gu[i] = 0.5 * u1[i] * (1.0 + th);
            }

            double* xout = xs_[static_cast<std::size_t>(b) + 1].data() + static_cast<std::size_t>(pos) * d;
            detail::matvec(w + o.fc2_w, w + o.fc2_b, gu, xout, d, f);
            for (int i = 0; i < d; ++i) xout[i] += ht[i];
        }

        const double* xf = xs_[static_cast<std::size_t>(a.blocks)].data() + static_cast<std::size_t>(pos) * d;
        double* fo = lnf_out_.data() + static_cast<std::size_t>(pos) * d;
        detail::layernorm_fwd(xf, w + L.lnf_g, w + L.lnf_b, fo, d, lnf_mean_[pos], lnf_rstd_[pos]);

        double* lg = logits_.data() + static_cast<std::size_t>(pos) * V;
        detail::matvec(w + L.head_w, w + L.head_b, fo, lg, V, d);
        double mx = lg[0];
        for (int i = 1; i < V; ++i) mx = std::max(mx, lg[i]);
        double z = 0.0;
        for (int i = 0; i < V; ++i) z += std::exp(lg[i] - mx);
        lse_[pos] = mx + std::log(z);

        tokens_.push_back(t);
        ++len_;
    }

    void push_all(const TokenSeq& seq) {
        for (TokenId t : seq) push(t);
    }

    const double* logits_at(int pos) const {
        return logits_.data() + static_cast<std::size_t>(pos) * p_->arch().vocab;
    }
    double lse_at(int pos) const { return lse_[static_cast<std::size_t>(pos)]; }

    // log softmax(logits at `pos`)[next]
    double logprob_at(int pos, TokenId next) const {
        return logits_[static_cast<std::size_t>(pos) * p_->arch().vocab + next] - lse_[static_cast<std::size_t>(pos)];
    }

    static std::size_t att_offset(int pos, int heads) {
        return static_cast<std::size_t>(heads) * pos * (pos + 1) / 2;
    }

    struct BlockCache {
        std::vector<double> ln1_mean, ln1_rstd, ln1_out;
        std::vector<double> q, k, v;
        std::vector<double> att;  // ragged: position t holds heads*(t+1) probabilities
        std::vector<double> attcat, h;
        std::vector<double> ln2_mean, ln2_rstd, ln2_out;
        std::vector<double> fc1, tanh_u, gelu;
    };

    // cached activations, exposed for the backward pass
    std::vector<std::vector<double>> xs_;  // xs_[b] = input of block b; xs_[blocks] = final
    std::vector<BlockCache> blocks_;
    std::vector<double> lnf_mean_, lnf_rstd_, lnf_out_;
    std::vector<double> logits_, lse_;

private:
    const ModelParams* p_ = nullptr;
    std::vector<TokenId> tokens_;
    int len_ = 0;
};

// ----------------------------- contexts -----------------------------

inline TokenSeq make_context(const TokenSeq& query) {
    TokenSeq ctx;
    ctx.reserve(query.size() + 2);
    ctx.push_back(kBos);
    ctx.insert(ctx.end(), query.begin(), query.end());
    ctx.push_back(kSep);
    return ctx;
}

inline TokenSeq make_pair_context(const TokenSeq& query, const TokenSeq& response) {
    TokenSeq ctx = make_context(query);
    ctx.insert(ctx.end(), response.begin(), response.end());
    return ctx;
}

// ----------------------------- core operations -----------------------------

// Unnormalized next-token scores after `context`; softmax of the result is the
// model's conditional distribution.
inline std::vector<double> logits(const ModelParams& params, const TokenSeq& context) {
    const ModelArch& a = params.arch();
    if (context.empty()) throw LengthError("context is empty");
    if (static_cast<std::int64_t>(context.size()) > a.max_seq)
        throw LengthError("context longer than model context length");
    if (context.front() != kBos) throw StructureError("context does not begin with BOS");
    SeqEval ev;
    ev.reset(params);
    ev.push_all(context);
    const double* row = ev.logits_at(ev.len() - 1);
    std::vector<double> out(row, row + a.vocab);
    for (double x : out) {
        if (!std::isfinite(x)) throw NumericError("non-finite logit");
    }
    return out;
}

// log rho(seq) summed over every token after BOS; always <= 0.
inline double sequence_log_prob(const ModelParams& params, const TokenSeq& seq) {
    const ModelArch& a = params.arch();
    if (seq.size() < 2) throw LengthError("sequence needs at least one token after BOS");
    if (static_cast<std::int64_t>(seq.size()) > a.max_seq)
        throw LengthError("sequence longer than model context length");
    if (seq.front() != kBos) throw StructureError("sequence does not begin with BOS");
    SeqEval ev;
    ev.reset(params);
    ev.push_all(seq);
    double lp = 0.0;
    for (std::size_t t = 1; t < seq.size(); ++t) {
        lp += ev.logprob_at(static_cast<int>(t) - 1, seq[t]);
    }
    if (!std::isfinite(lp)) throw NumericError("non-finite sequence log-prob");
    return lp;
}

// Length-normalized conditional log-probability of `response` given `query`:
// sum of per-token log-probs over the response (EOS included) divided by the
// response token count. Context is [BOS, query, SEP, response].
inline double cond_log_prob_norm(const ModelParams& params, const TokenSeq& query,
                                 const TokenSeq& response) {
    check_query_role(query);
    check_response_role(response);
    const ModelArch& a = params.arch();
    TokenSeq ctx = make_pair_context(query, response);
    if (static_cast<std::int64_t>(ctx.size()) > a.max_seq)
        throw LengthError("query+response exceeds model context length");
    SeqEval ev;
    ev.reset(params);
    ev.push_all(ctx);
    const int resp_start = static_cast<int>(query.size()) + 2;  // BOS + query + SEP
    double lp = 0.0;
    for (int t = resp_start; t < static_cast<int>(ctx.size()); ++t) {
        lp += ev.logprob_at(t - 1, ctx[static_cast<std::size_t>(t)]);
    }
    if (!std::isfinite(lp)) throw NumericError("non-finite conditional log-prob");
    return lp / static_cast<double>(response.size());
}

// exp of mean per-response-token negative log-likelihood, pooled over the corpus.
inline double perplexity(const ModelParams& params,
                         const std::vector<std::pair<TokenSeq, TokenSeq>>& corpus) {
    if (corpus.empty()) throw DomainError("perplexity of empty corpus");
    double total_lp = 0.0;
    std::int64_t total_tokens = 0;
    for (const auto& [query, response] : corpus) {
        check_response_role(response);
        total_lp += cond_log_prob_norm(params, query, response) * static_cast<double>(response.size());
        total_tokens += static_cast<std::int64_t>(response.size());
    }
    return std::exp(-total_lp / static_cast<double>(total_tokens));
}

}  // namespace neat
