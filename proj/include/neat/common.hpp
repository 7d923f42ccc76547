#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace neat {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Reserved vocabulary slots. Everything from kFirstContent upward is a content token.
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kFirstContent = 3;

inline bool is_special(TokenId t) { return t == kBos || t == kEos || t == kSep; }

// ----------------------------- errors -----------------------------

struct LengthError : std::runtime_error {
    explicit LengthError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& m) : std::runtime_error(m) {}
};
struct StructureError : std::runtime_error {
    explicit StructureError(const std::string& m) : std::runtime_error(m) {}
};
struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& m) : std::runtime_error(m) {}
};
struct LookupError : std::runtime_error {
    explicit LookupError(const std::string& m) : std::runtime_error(m) {}
};
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& m) : std::runtime_error(m) {}
};
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

// ----------------------------- role checks -----------------------------

inline void check_token_range(TokenId t, TokenId vocab) {
    if (t < 0 || t >= vocab) {
        throw StructureError("token id " + std::to_string(t) + " outside vocabulary [0," +
                             std::to_string(vocab) + ")");
    }
}

inline void check_token_range(const TokenSeq& s, TokenId vocab, const char* what) {
    for (TokenId t : s) {
        if (t < 0 || t >= vocab) {
            throw StructureError(std::string(what) + ": token id " + std::to_string(t) +
                                 " outside vocabulary [0," + std::to_string(vocab) + ")");
        }
    }
}

// A query must not contain EOS or SEP.
inline void check_query_role(const TokenSeq& q) {
    for (TokenId t : q) {
        if (t == kEos) throw StructureError("query contains EOS");
        if (t == kSep) throw StructureError("query contains SEP");
    }
}

// A response carries exactly one EOS, in final position.
inline void check_response_role(const TokenSeq& y) {
    if (y.empty()) throw StructureError("response is empty");
    if (y.back() != kEos) throw StructureError("response does not end with EOS");
    for (std::size_t i = 0; i + 1 < y.size(); ++i) {
        if (y[i] == kEos) throw StructureError("response has interior EOS");
    }
}

inline std::string tokens_to_string(const TokenSeq& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

}  // namespace neat
