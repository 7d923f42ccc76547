#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "neat/common.hpp"

namespace neat {

// Deterministic scoring rule. A response earns w_good per token from its
// family's good set, w_bad per globally bad token, pays w_len per token past
// target_len, and w_trunc once if it ran past max_len (size counts EOS).
struct RewardWeights {
    double good = 1.0;
    double bad = -2.0;
    double len = -0.05;
    double trunc = -1.0;
};

struct RewardSpec {
    RewardWeights weights;
    int target_len = 6;
    int max_len = 8;
    std::vector<TokenId> bad_tokens;                 // sorted, unique
    std::vector<std::string> family_names;           // index -> name
    std::vector<std::vector<TokenId>> good_sets;     // index -> sorted unique good tokens
    std::map<TokenSeq, int> query_family;            // query -> family index

    int family_index(const std::string& name) const {
        for (std::size_t i = 0; i < family_names.size(); ++i)
            if (family_names[i] == name) return static_cast<int>(i);
        throw LookupError("unknown reward family: " + name);
    }

    int family_of(const TokenSeq& query) const {
        auto it = query_family.find(query);
        if (it == query_family.end())
            throw LookupError("query has no reward family: " + tokens_to_string(query));
        return it->second;
    }

    bool is_bad(TokenId t) const {
        return std::binary_search(bad_tokens.begin(), bad_tokens.end(), t);
    }

    bool is_good(int family, TokenId t) const {
        const auto& gs = good_sets[static_cast<std::size_t>(family)];
        return std::binary_search(gs.begin(), gs.end(), t);
    }

    void validate() const {
        if (max_len < 1) throw DomainError("reward max_len must be positive");
        if (target_len < 0) throw DomainError("reward target_len must be non-negative");
        if (family_names.size() != good_sets.size())
            throw DomainError("family name / good set count mismatch");
        if (!std::is_sorted(bad_tokens.begin(), bad_tokens.end()) ||
            std::adjacent_find(bad_tokens.begin(), bad_tokens.end()) != bad_tokens.end())
            throw DomainError("bad_tokens must be sorted and unique");
        for (TokenId t : bad_tokens)
            if (t < kFirstContent) throw DomainError("bad token is a structural token");
        for (const auto& gs : good_sets) {
            if (!std::is_sorted(gs.begin(), gs.end()) ||
                std::adjacent_find(gs.begin(), gs.end()) != gs.end())
                throw DomainError("good set must be sorted and unique");
            for (TokenId t : gs) {
                if (t < kFirstContent) throw DomainError("good token is a structural token");
                if (std::binary_search(bad_tokens.begin(), bad_tokens.end(), t))
                    throw DomainError("token is both good and bad");
            }
        }
        for (const auto& [q, f] : query_family) {
            if (f < 0 || static_cast<std::size_t>(f) >= family_names.size())
                throw DomainError("query mapped to unknown family index");
            check_query_role(q);
        }
    }
};

inline double score_response(const RewardSpec& spec, int family, const TokenSeq& response) {
    check_response_role(response);
    if (family < 0 || static_cast<std::size_t>(family) >= spec.good_sets.size())
        throw LookupError("reward family index out of range");
    int ngood = 0, nbad = 0;
    for (std::size_t i = 0; i + 1 < response.size(); ++i) {  // content tokens only
        if (spec.is_good(family, response[i])) ++ngood;
        else if (spec.is_bad(response[i])) ++nbad;
    }
    const int size = static_cast<int>(response.size());
    const int over = std::max(0, size - spec.target_len);
    const bool truncated = size > spec.max_len;
    return spec.weights.good * ngood + spec.weights.bad * nbad + spec.weights.len * over +
           (truncated ? spec.weights.trunc : 0.0);
}

inline double score_response(const RewardSpec& spec, const TokenSeq& query, const TokenSeq& response) {
    return score_response(spec, spec.family_of(query), response);
}

// ----------------------------- serialization -----------------------------

inline nlohmann::json reward_spec_to_json(const RewardSpec& spec) {
    nlohmann::json j;
    j["v"] = 1;
    j["weights"] = {{"good", spec.weights.good},
                    {"bad", spec.weights.bad},
                    {"len", spec.weights.len},
                    {"trunc", spec.weights.trunc}};
    j["target_len"] = spec.target_len;
    j["max_len"] = spec.max_len;
    j["bad_tokens"] = spec.bad_tokens;
    nlohmann::json fams = nlohmann::json::object();
    for (std::size_t i = 0; i < spec.family_names.size(); ++i)
        fams[spec.family_names[i]] = spec.good_sets[i];
    j["families"] = fams;
    nlohmann::json qs = nlohmann::json::array();
    for (const auto& [q, f] : spec.query_family)
        qs.push_back({{"query", q}, {"family", spec.family_names[static_cast<std::size_t>(f)]}});
    j["queries"] = qs;
    return j;
}

inline RewardSpec reward_spec_from_json(const nlohmann::json& j) {
    RewardSpec spec;
    try {
        if (j.at("v").get<int>() != 1) throw ParseError("unsupported reward spec version");
        const auto& w = j.at("weights");
        spec.weights.good = w.at("good").get<double>();
        spec.weights.bad = w.at("bad").get<double>();
        spec.weights.len = w.at("len").get<double>();
        spec.weights.trunc = w.at("trunc").get<double>();
        spec.target_len = j.at("target_len").get<int>();
        spec.max_len = j.at("max_len").get<int>();
        spec.bad_tokens = j.at("bad_tokens").get<std::vector<TokenId>>();
        for (const auto& [name, gs] : j.at("families").items()) {
            spec.family_names.push_back(name);
            spec.good_sets.push_back(gs.get<std::vector<TokenId>>());
        }
        for (const auto& q : j.at("queries")) {
            spec.query_family[q.at("query").get<TokenSeq>()] =
                spec.family_index(q.at("family").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed reward spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

inline void save_reward_spec(const RewardSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path);
    out << reward_spec_to_json(spec).dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

inline RewardSpec load_reward_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return reward_spec_from_json(j);
}

}  // namespace neat
