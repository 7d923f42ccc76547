#pragma once

#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "neat/backward.hpp"
#include "neat/dataset.hpp"
#include "neat/forward.hpp"
#include "neat/optim.hpp"
#include "neat/prompt.hpp"
#include "neat/reward.hpp"
#include "neat/rng.hpp"

namespace neat {

// Fixed 32-token world: 0..2 structural, 3..6 the positive steering prefix,
// 7..10 the negative one, 11..27 neutral tokens (queries draw from these),
// 28..31 globally bad tokens.
inline constexpr TokenId kNeutralFirst = 11;
inline constexpr int kNeutralCount = 17;
inline constexpr TokenId kBadFirst = 28;
inline constexpr int kBadCount = 4;

// Fixed four-token steering prefixes, one per reserved vocab region. Their
// meaning is established by co-occurrence during pretraining: the positive
// prefix fronts good-leaning sequences, the negative prefix fronts bad ones.
inline TokenSeq positive_prefix() { return {3, 4, 5, 6}; }
inline TokenSeq negative_prefix() { return {7, 8, 9, 10}; }

inline TokenId neutral_token(int k) { return kNeutralFirst + ((k % kNeutralCount) + kNeutralCount) % kNeutralCount; }

inline TokenSeq family_query(int f) {
    return {neutral_token(f), neutral_token(f / 17), neutral_token(f * 5 + 3)};
}

// Held-out probe for the same family: same first two tokens, shifted third,
// always distinct from the training query.
inline TokenSeq family_test_query(int f) {
    return {neutral_token(f), neutral_token(f / 17), neutral_token(f * 5 + 9)};
}

// Four distinct neutral tokens per family: the query's tokens plus probed
// extras. Echoing the query is what the reward rewards.
inline std::vector<TokenId> family_good_set(int f) {
    std::set<TokenId> s;
    for (TokenId t : family_query(f)) s.insert(t);
    int probe = f * 7 + 5;
    while (s.size() < 4) s.insert(neutral_token(probe++));
    return {s.begin(), s.end()};
}

inline std::string family_name(int f) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "fam%02d", f);
    return buf;
}

inline RewardSpec build_reward_spec(int n_families) {
    if (n_families < 1 || n_families > 99) throw DomainError("family count out of range");
    RewardSpec spec;
    for (TokenId t = kBadFirst; t < kBadFirst + kBadCount; ++t) spec.bad_tokens.push_back(t);
    for (int f = 0; f < n_families; ++f) {
        spec.family_names.push_back(family_name(f));
        spec.good_sets.push_back(family_good_set(f));
        spec.query_family[family_query(f)] = f;
        spec.query_family[family_test_query(f)] = f;
    }
    spec.validate();
    return spec;
}

inline std::vector<PromptTemplate> build_prompts() {
    return {{PromptTemplate::Kind::positive, positive_prefix()},
            {PromptTemplate::Kind::negative, negative_prefix()}};
}

// ----------------------------- pretraining corpus -----------------------------

struct PretrainSeq {
    TokenSeq ctx;   // everything between BOS and SEP
    TokenSeq resp;  // content + trailing EOS
};

inline TokenSeq render_pretrain_seq(const PretrainSeq& s) {
    TokenSeq seq;
    seq.reserve(s.ctx.size() + s.resp.size() + 2);
    seq.push_back(kBos);
    seq.insert(seq.end(), s.ctx.begin(), s.ctx.end());
    seq.push_back(kSep);
    seq.insert(seq.end(), s.resp.begin(), s.resp.end());
    return seq;
}

namespace detail {

enum class PretrainMode { positive, negative, plain };

inline TokenSeq draw_pretrain_response(PretrainMode mode, const std::vector<TokenId>& good, Rng& rng) {
    const int n = 4 + static_cast<int>(rng.below(5));  // 4..8 content tokens
    TokenSeq resp;
    resp.reserve(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        TokenId t;
        switch (mode) {
            case PretrainMode::positive:
                t = u < 0.3 ? good[rng.below(good.size())] : neutral_token(static_cast<int>(rng.below(kNeutralCount)));
                break;
            case PretrainMode::negative:
                t = static_cast<TokenId>(kBadFirst + rng.below(kBadCount));
                break;
            default:
                if (u < 0.3) t = good[rng.below(good.size())];
                else if (u < 0.7) t = neutral_token(static_cast<int>(rng.below(kNeutralCount)));
                else t = static_cast<TokenId>(kBadFirst + rng.below(kBadCount));
        }
        resp.push_back(t);
    }
    resp.push_back(kEos);
    return resp;
}

}  // namespace detail

// Eighteen sequences per family: six steered by the positive prefix
// (good-leaning), six by the negative prefix (bad tokens only), six unsteered
// and mixed. The prefixes have to mean something to the model before steered
// sampling is useful, so the channels differ sharply; but good tokens are
// kept sparse even in the positive channel, leaving the aligned run a long
// climb from the pretrained starting point instead of handing it a nearly
// converged one.
inline std::vector<PretrainSeq> build_pretrain_corpus(int n_families, std::uint64_t seed) {
    std::vector<PretrainSeq> out;
    out.reserve(static_cast<std::size_t>(n_families) * 18);
    for (int f = 0; f < n_families; ++f) {
        Rng rng(splitmix64(seed ^ (0xc09f05ULL + static_cast<std::uint64_t>(f) * 0x9e3779b97f4a7c15ULL)));
        const TokenSeq q = family_query(f);
        const std::vector<TokenId> good = family_good_set(f);
        for (int rep = 0; rep < 6; ++rep) {
            PretrainSeq pos;
            pos.ctx = positive_prefix();
            pos.ctx.insert(pos.ctx.end(), q.begin(), q.end());
            pos.resp = detail::draw_pretrain_response(detail::PretrainMode::positive, good, rng);
            out.push_back(std::move(pos));

            PretrainSeq neg;
            neg.ctx = negative_prefix();
            neg.ctx.insert(neg.ctx.end(), q.begin(), q.end());
            neg.resp = detail::draw_pretrain_response(detail::PretrainMode::negative, good, rng);
            out.push_back(std::move(neg));

            PretrainSeq plain;
            plain.ctx = q;
            plain.resp = detail::draw_pretrain_response(detail::PretrainMode::plain, good, rng);
            out.push_back(std::move(plain));
        }
    }
    return out;
}

inline void save_pretrain_corpus(const std::vector<PretrainSeq>& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path);
    for (const auto& s : corpus)
        out << nlohmann::json{{"ctx", s.ctx}, {"resp", s.resp}, {"v", 1}}.dump() << "\n";
    if (!out) throw IoError("write failed: " + path);
}

inline std::vector<PretrainSeq> load_pretrain_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<PretrainSeq> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            if (j.at("v").get<int>() != 1) throw ParseError("unsupported pretrain record version");
            PretrainSeq s;
            s.ctx = j.at("ctx").get<TokenSeq>();
            s.resp = j.at("resp").get<TokenSeq>();
            check_response_role(s.resp);
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) throw ParseError("pretraining corpus is empty: " + path);
    return out;
}

// ----------------------------- preference data -----------------------------

// Four scored responses per family — one high, one mid, two low — spread
// across the reward range but capped well below what a dense good-token
// response earns, so the static data alone cannot reach the reward ceiling.
// In every third family the best stored response itself carries one bad
// token, the way the least-bad of a noisy candidate pool often does.
// Imitating stored data keeps re-injecting that token; only sampling better
// responses (to displace the stored best) or penalizing bad tokens directly
// gets rid of it.
inline Dataset build_preference_data(const RewardSpec& spec, int n_families, std::uint64_t seed,
                                     bool held_out) {
    std::vector<PreferenceRecord> recs;
    recs.reserve(static_cast<std::size_t>(n_families));
    for (int f = 0; f < n_families; ++f) {
        Rng rng(splitmix64(seed ^ (0xda7a5e7ULL + static_cast<std::uint64_t>(f) * 0x9e3779b97f4a7c15ULL)));
        PreferenceRecord rec;
        rec.query = held_out ? family_test_query(f) : family_query(f);
        rec.family = family_name(f);
        const std::vector<TokenId> good = family_good_set(f);

        auto add = [&](TokenSeq content) {
            rng.shuffle(content);
            content.push_back(kEos);
            ScoredResponse r;
            r.reward = score_response(spec, f, content);
            r.tokens = std::move(content);
            r.origin = kOriginDataset;
            rec.responses.push_back(std::move(r));
        };

        auto neutral = [&] { return neutral_token(static_cast<int>(rng.below(kNeutralCount))); };
        auto bad = [&] { return static_cast<TokenId>(kBadFirst + rng.below(kBadCount)); };

        if (f % 3 == 0) {
            add({good[0], good[1], good[2], good[3], bad()});
            add({good[rng.below(good.size())], neutral(), neutral()});
        } else {
            add({good[0], good[1], good[2], good[3], neutral()});
            add({good[rng.below(good.size())], good[rng.below(good.size())], neutral(), neutral()});
        }
        add({neutral(), neutral(), bad()});
        add({neutral(), bad(), bad()});
        recs.push_back(std::move(rec));
    }
    return Dataset(std::move(recs));
}

// ----------------------------- pretraining -----------------------------

struct PretrainConfig {
    int steps = 2000;
    int batch = 8;
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

// Cross-entropy over every predicted position, Adam, batch mean of per-token
// NLL. Returns the trained parameters started from a seeded Gaussian init.
inline ModelParams pretrain(const ModelArch& arch, const std::vector<PretrainSeq>& corpus,
                            const PretrainConfig& cfg) {
    if (cfg.steps < 1 || cfg.batch < 1) throw DomainError("pretrain steps/batch must be positive");
    ModelParams params(arch);
    params.init_gaussian(cfg.seed);
    Adam opt({cfg.lr});
    Rng rng(splitmix64(cfg.seed ^ 0x9e7a11ULL));
    SeqEval ev;
    BackwardPass bp;
    GradVector grad = make_grad(params);
    std::vector<double> weights;
    for (int step = 0; step < cfg.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int b = 0; b < cfg.batch; ++b) {
            const PretrainSeq& s = corpus[rng.below(corpus.size())];
            const TokenSeq seq = render_pretrain_seq(s);
            if (static_cast<std::int64_t>(seq.size()) > arch.max_seq)
                throw LengthError("pretraining sequence exceeds model context length");
            ev.reset(params);
            ev.push_all(seq);
            const double w = -1.0 / (static_cast<double>(cfg.batch) * static_cast<double>(seq.size() - 1));
            weights.assign(seq.size(), w);
            weights[0] = 0.0;
            bp.accumulate(ev, weights, grad);
        }
        opt.step(params, grad);
    }
    params.check_finite();
    return params;
}

}  // namespace neat
