#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "neat/prompt.hpp"

using namespace neat;

TEST_CASE("prompted context frames prefix and query") {
    PromptTemplate pos;
    pos.kind = PromptTemplate::Kind::positive;
    pos.prefix = {3};
    REQUIRE(render_prompted_context(pos, {11, 12}) == TokenSeq{kBos, 3, 11, 12, kSep});
    REQUIRE_THROWS_AS(render_prompted_context(pos, {11, kSep}), StructureError);
}

TEST_CASE("template validation") {
    PromptTemplate t;
    t.prefix = {};
    REQUIRE_THROWS_AS(t.validate(32), StructureError);
    t.prefix = {kSep};
    REQUIRE_THROWS_AS(t.validate(32), StructureError);
    t.prefix = {40};
    REQUIRE_THROWS_AS(t.validate(32), StructureError);
    t.prefix = {3, 4};
    t.validate(32);  // fine
}

TEST_CASE("kind names round-trip") {
    REQUIRE(prompt_kind_from_name("positive") == PromptTemplate::Kind::positive);
    REQUIRE(prompt_kind_from_name("negative") == PromptTemplate::Kind::negative);
    REQUIRE(prompt_kind_name(PromptTemplate::Kind::negative) == std::string("negative"));
    REQUIRE_THROWS_AS(prompt_kind_from_name("neutral"), ParseError);
}

TEST_CASE("derived sampling seeds never collide across their inputs") {
    std::set<std::uint64_t> seen;
    int n = 0;
    for (std::uint64_t run : {0ULL, 1ULL}) {
        for (std::uint64_t step : {1ULL, 2ULL, 3ULL}) {
            for (std::uint64_t qh : {hash_tokens({11, 12}), hash_tokens({12, 11})}) {
                for (auto kind : {PromptTemplate::Kind::positive, PromptTemplate::Kind::negative}) {
                    seen.insert(derive_seed(run, step, qh, kind));
                    ++n;
                }
            }
        }
    }
    REQUIRE(static_cast<int>(seen.size()) == n);
    // and the derivation is a pure function
    REQUIRE(derive_seed(5, 9, 1234, PromptTemplate::Kind::positive) ==
            derive_seed(5, 9, 1234, PromptTemplate::Kind::positive));
}

TEST_CASE("prompt set JSON round-trip") {
    std::vector<PromptTemplate> ps(2);
    ps[0].kind = PromptTemplate::Kind::positive;
    ps[0].prefix = {3};
    ps[1].kind = PromptTemplate::Kind::negative;
    ps[1].prefix = {7};

    const auto back = prompts_from_json(prompts_to_json(ps), 32);
    REQUIRE(back.size() == 2);
    REQUIRE(back[0].kind == ps[0].kind);
    REQUIRE(back[0].prefix == ps[0].prefix);
    REQUIRE(back[1].kind == ps[1].kind);
    REQUIRE(back[1].prefix == ps[1].prefix);

    const std::string path =
        (std::filesystem::temp_directory_path() / "prompts_rt.json").string();
    save_prompts(ps, path);
    const auto loaded = load_prompts(path, 32);
    REQUIRE(loaded[1].prefix == ps[1].prefix);
    std::filesystem::remove(path);
}

TEST_CASE("malformed prompt sets are rejected") {
    REQUIRE_THROWS_AS(prompts_from_json(nlohmann::json::array(), 32), ParseError);
    REQUIRE_THROWS_AS(prompts_from_json(nlohmann::json{{"kind", "positive"}}, 32), ParseError);
    nlohmann::json bad = nlohmann::json::array();
    bad.push_back({{"kind", "positive"}, {"prefix", nlohmann::json::array({kSep})}});
    REQUIRE_THROWS_AS(prompts_from_json(bad, 32), StructureError);
    REQUIRE_THROWS_AS(load_prompts("/nonexistent/prompts.json", 32), IoError);
}
