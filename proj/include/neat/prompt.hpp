#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "neat/common.hpp"
#include "neat/rng.hpp"

namespace neat {

// Steering prefix injected between BOS and the query at sampling time only;
// the scored context never contains it.
struct PromptTemplate {
    enum class Kind { positive, negative };
    Kind kind = Kind::positive;
    TokenSeq prefix;

    void validate(int vocab) const {
        if (prefix.empty()) throw StructureError("prompt prefix is empty");
        for (TokenId t : prefix) {
            check_token_range(t, vocab);
            if (is_special(t)) throw StructureError("prompt prefix contains a structural token");
        }
    }
};

inline const char* prompt_kind_name(PromptTemplate::Kind k) {
    return k == PromptTemplate::Kind::positive ? "positive" : "negative";
}

inline PromptTemplate::Kind prompt_kind_from_name(const std::string& s) {
    if (s == "positive") return PromptTemplate::Kind::positive;
    if (s == "negative") return PromptTemplate::Kind::negative;
    throw ParseError("unknown prompt kind: " + s);
}

// Sampling context [BOS, prefix, query, SEP]; rewards are judged against the
// plain query, so the prefix only steers generation.
inline TokenSeq render_prompted_context(const PromptTemplate& tmpl, const TokenSeq& query) {
    check_query_role(query);
    TokenSeq ctx;
    ctx.reserve(tmpl.prefix.size() + query.size() + 2);
    ctx.push_back(kBos);
    ctx.insert(ctx.end(), tmpl.prefix.begin(), tmpl.prefix.end());
    ctx.insert(ctx.end(), query.begin(), query.end());
    ctx.push_back(kSep);
    return ctx;
}

// One stream per (run, step, query, prompt kind): reordering queries or
// templates cannot leak randomness across draws.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t step,
                                 std::uint64_t query_hash, PromptTemplate::Kind kind) {
    std::uint64_t x = splitmix64(run_seed ^ 0x9e3779b97f4a7c15ULL);
    x = splitmix64(x ^ step);
    x = splitmix64(x ^ query_hash);
    x = splitmix64(x ^ (kind == PromptTemplate::Kind::positive ? 0x706f73ULL : 0x6e6567ULL));
    return x;
}

// ----------------------------- serialization -----------------------------

inline nlohmann::json prompts_to_json(const std::vector<PromptTemplate>& prompts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : prompts)
        arr.push_back({{"kind", prompt_kind_name(p.kind)}, {"prefix", p.prefix}});
    return arr;
}

inline std::vector<PromptTemplate> prompts_from_json(const nlohmann::json& j, int vocab) {
    if (!j.is_array() || j.empty()) throw ParseError("prompt set must be a non-empty array");
    std::vector<PromptTemplate> out;
    try {
        for (const auto& e : j) {
            PromptTemplate t;
            t.kind = prompt_kind_from_name(e.at("kind").get<std::string>());
            t.prefix = e.at("prefix").get<TokenSeq>();
            out.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed prompt set: ") + e.what());
    }
    for (const auto& t : out) t.validate(vocab);
    return out;
}

inline void save_prompts(const std::vector<PromptTemplate>& prompts, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path);
    out << prompts_to_json(prompts).dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

inline std::vector<PromptTemplate> load_prompts(const std::string& path, int vocab) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return prompts_from_json(j, vocab);
}

}  // namespace neat
