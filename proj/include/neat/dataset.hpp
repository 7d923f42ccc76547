#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "neat/reward.hpp"

namespace neat {

inline constexpr const char* kOriginDataset = "dataset";
inline constexpr const char* kOriginPositive = "positive-prompt";
inline constexpr const char* kOriginNegative = "negative-prompt";

inline bool valid_origin(const std::string& o) {
    return o == kOriginDataset || o == kOriginPositive || o == kOriginNegative;
}

struct ScoredResponse {
    TokenSeq tokens;  // content tokens + trailing EOS
    double reward = 0.0;
    std::string origin = kOriginDataset;
};

struct PreferenceRecord {
    TokenSeq query;
    std::string family;
    std::vector<ScoredResponse> responses;
};

// Preference data plus the bookkeeping of online expansion. Records only ever
// grow; dedup (on by default) drops a candidate whose token sequence is
// already stored for that record and counts the drop instead.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<PreferenceRecord> records) : records_(std::move(records)) {
        for (const auto& r : records_) validate_record(r);
    }

    const std::vector<PreferenceRecord>& records() const { return records_; }
    PreferenceRecord& record(std::size_t i) { return records_.at(i); }
    const PreferenceRecord& record(std::size_t i) const { return records_.at(i); }
    std::size_t size() const { return records_.size(); }

    std::int64_t total_responses() const {
        std::int64_t n = 0;
        for (const auto& r : records_) n += static_cast<std::int64_t>(r.responses.size());
        return n;
    }

    std::int64_t added_count() const { return added_; }
    std::int64_t dropped_count() const { return dropped_; }

    // Appends `fresh` to record i unless dedup is on and an identical token
    // sequence is already stored. Returns true when stored.
    bool expand(std::size_t i, const ScoredResponse& fresh, bool dedup) {
        if (!valid_origin(fresh.origin)) throw DomainError("unknown response origin: " + fresh.origin);
        check_response_role(fresh.tokens);
        auto& rec = records_.at(i);
        if (dedup) {
            for (const auto& r : rec.responses) {
                if (r.tokens == fresh.tokens) {
                    ++dropped_;
                    return false;
                }
            }
        }
        rec.responses.push_back(fresh);
        ++added_;
        return true;
    }

    static void validate_record(const PreferenceRecord& rec) {
        check_query_role(rec.query);
        if (rec.family.empty()) throw StructureError("record has empty family name");
        if (rec.responses.empty()) throw StructureError("record has no responses");
        for (const auto& r : rec.responses) {
            check_response_role(r.tokens);
            if (!valid_origin(r.origin)) throw DomainError("unknown response origin: " + r.origin);
            if (!std::isfinite(r.reward)) throw NumericError("non-finite stored reward");
        }
    }

private:
    std::vector<PreferenceRecord> records_;
    std::int64_t added_ = 0;
    std::int64_t dropped_ = 0;
};

// The loss never sees more than cap stored responses per record: with more
// than cap stored, it keeps the cap/2 highest- and cap/2 lowest-reward ones
// (deterministic: ties broken by storage index).
inline std::vector<int> select_loss_pool(const PreferenceRecord& rec, int cap = 8) {
    const int n = static_cast<int>(rec.responses.size());
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    if (n <= cap) return idx;
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return rec.responses[static_cast<std::size_t>(a)].reward >
               rec.responses[static_cast<std::size_t>(b)].reward;
    });
    std::vector<int> keep;
    keep.reserve(static_cast<std::size_t>(cap));
    const int half = cap / 2;
    for (int i = 0; i < half; ++i) keep.push_back(idx[static_cast<std::size_t>(i)]);
    for (int i = n - (cap - half); i < n; ++i) keep.push_back(idx[static_cast<std::size_t>(i)]);
    std::sort(keep.begin(), keep.end());
    return keep;
}

// ----------------------------- JSONL -----------------------------

inline nlohmann::json record_to_json(const PreferenceRecord& rec) {
    nlohmann::json resps = nlohmann::json::array();
    for (const auto& r : rec.responses)
        resps.push_back({{"tokens", r.tokens}, {"reward", r.reward}, {"origin", r.origin}});
    return nlohmann::json{{"query", rec.query}, {"family", rec.family}, {"responses", resps}, {"v", 1}};
}

inline PreferenceRecord record_from_json(const nlohmann::json& j) {
    PreferenceRecord rec;
    try {
        if (j.at("v").get<int>() != 1) throw ParseError("unsupported record version");
        rec.query = j.at("query").get<TokenSeq>();
        rec.family = j.at("family").get<std::string>();
        for (const auto& r : j.at("responses")) {
            ScoredResponse sr;
            sr.tokens = r.at("tokens").get<TokenSeq>();
            sr.reward = r.at("reward").get<double>();
            sr.origin = r.at("origin").get<std::string>();
            rec.responses.push_back(std::move(sr));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed preference record: ") + e.what());
    }
    Dataset::validate_record(rec);
    return rec;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + tmp);
        for (const auto& rec : ds.records()) out << record_to_json(rec).dump() << "\n";
        if (!out) throw IoError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("rename failed: " + path);
}

// Loads records; with a spec, every stored reward is re-scored and a mismatch
// beyond 1e-9 rejects the file.
inline Dataset load_dataset(const std::string& path, const RewardSpec* spec = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<PreferenceRecord> recs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
        }
        PreferenceRecord rec = record_from_json(j);
        if (spec) {
            const int fam = spec->family_index(rec.family);
            for (const auto& r : rec.responses) {
                const double want = score_response(*spec, fam, r.tokens);
                if (std::abs(want - r.reward) > 1e-9)
                    throw IntegrityError(path + ":" + std::to_string(lineno) +
                                         ": stored reward disagrees with oracle for response " +
                                         tokens_to_string(r.tokens));
            }
        }
        recs.push_back(std::move(rec));
    }
    return Dataset(std::move(recs));
}

}  // namespace neat
