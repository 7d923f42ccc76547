#pragma once

#include <cmath>
#include <vector>

#include "neat/forward.hpp"
#include "neat/rng.hpp"

namespace neat {

// Response decoding draws from the model distribution restricted to content
// tokens and EOS: BOS and SEP are structural and never valid inside a
// response, so their logit mass is masked out and the remainder renormalized.
// Temperature rescales logits before the softmax; 1.0 reproduces the model
// distribution exactly.
inline void response_distribution(const double* logits, int vocab, double temperature,
                                  std::vector<double>& probs) {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw DomainError("temperature must be positive and finite");
    probs.assign(static_cast<std::size_t>(vocab), 0.0);
    double mx = -1e300;
    for (int v = 0; v < vocab; ++v) {
        if (v == kBos || v == kSep) continue;
        if (logits[v] > mx) mx = logits[v];
    }
    double z = 0.0;
    for (int v = 0; v < vocab; ++v) {
        if (v == kBos || v == kSep) continue;
        double e = std::exp((logits[v] - mx) / temperature);
        probs[static_cast<std::size_t>(v)] = e;
        z += e;
    }
    if (!(z > 0.0) || !std::isfinite(z)) throw NumericError("degenerate response distribution");
    const double inv_z = 1.0 / z;
    for (int v = 0; v < vocab; ++v) probs[static_cast<std::size_t>(v)] *= inv_z;
}

inline void response_distribution(const double* logits, int vocab, std::vector<double>& probs) {
    response_distribution(logits, vocab, 1.0, probs);
}

inline void check_decode_context(const ModelArch& arch, const TokenSeq& context, int max_len) {
    if (context.size() < 2) throw LengthError("decode context too short");
    if (context.front() != kBos) throw StructureError("decode context does not begin with BOS");
    if (context.back() != kSep) throw StructureError("decode context does not end with SEP");
    for (TokenId t : context) check_token_range(t, arch.vocab);
    if (max_len < 1) throw DomainError("max_len must be positive");
    if (static_cast<std::int64_t>(context.size()) + max_len > arch.max_seq)
        throw LengthError("decode context leaves no room for a response");
}

// Draws up to max_len tokens after `context`. A drawn EOS ends the response
// naturally; if the cap is reached first, EOS is appended without a draw, so
// the returned size is max_len+1 exactly when the response was cut off.
inline TokenSeq sample_from_context(SeqEval& ev, const ModelParams& params,
                                    const TokenSeq& context, int max_len, Rng& rng,
                                    double temperature = 1.0) {
    check_decode_context(params.arch(), context, max_len);
    ev.reset(params);
    ev.push_all(context);
    TokenSeq out;
    out.reserve(static_cast<std::size_t>(max_len) + 1);
    std::vector<double> probs;
    for (int step = 0; step < max_len; ++step) {
        response_distribution(ev.logits_at(ev.len() - 1), params.arch().vocab, temperature, probs);
        const double u = rng.uniform01();
        double cum = 0.0;
        TokenId pick = -1;
        for (int v = 0; v < params.arch().vocab; ++v) {
            const double p = probs[static_cast<std::size_t>(v)];
            if (p == 0.0) continue;
            cum += p;
            pick = v;
            if (u < cum) break;
        }
        if (pick == kEos) {
            out.push_back(kEos);
            return out;
        }
        out.push_back(pick);
        ev.push(pick);
    }
    out.push_back(kEos);
    return out;
}

// Deterministic argmax decode under the same stopping rule; ties resolve to
// the lowest token id.
inline TokenSeq greedy_from_context(SeqEval& ev, const ModelParams& params,
                                    const TokenSeq& context, int max_len) {
    check_decode_context(params.arch(), context, max_len);
    ev.reset(params);
    ev.push_all(context);
    TokenSeq out;
    out.reserve(static_cast<std::size_t>(max_len) + 1);
    for (int step = 0; step < max_len; ++step) {
        const double* lg = ev.logits_at(ev.len() - 1);
        TokenId pick = -1;
        double best = -1e300;
        for (int v = 0; v < params.arch().vocab; ++v) {
            if (v == kBos || v == kSep) continue;
            if (lg[v] > best) {
                best = lg[v];
                pick = v;
            }
        }
        if (pick == kEos) {
            out.push_back(kEos);
            return out;
        }
        out.push_back(pick);
        ev.push(pick);
    }
    out.push_back(kEos);
    return out;
}

inline TokenSeq sample_response(const ModelParams& params, const TokenSeq& query, int max_len,
                                Rng& rng, double temperature = 1.0) {
    check_query_role(query);
    SeqEval ev;
    return sample_from_context(ev, params, make_context(query), max_len, rng, temperature);
}

inline TokenSeq greedy_response(const ModelParams& params, const TokenSeq& query, int max_len) {
    check_query_role(query);
    SeqEval ev;
    return greedy_from_context(ev, params, make_context(query), max_len);
}

}  // namespace neat
