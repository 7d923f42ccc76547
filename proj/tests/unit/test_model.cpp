#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "neat/model.hpp"
#include "support/fixtures.hpp"

using Catch::Approx;
using namespace neat;

namespace {
std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("reference layout has the canonical sizes and order") {
    const ModelArch a;
    const ParamLayout L(a);
    // embeddings first
    REQUIRE(L.tok_emb == 0);
    REQUIRE(L.pos_emb == 32 * 32);
    // block 0 starts right after the embeddings
    REQUIRE(L.block[0].ln1_g == 32 * 32 + 64 * 32);
    // hand count: embeddings 32*32 + 64*32, per block 2d + 4(d*d+d) + 2d +
    // (4d*d + 4d) + (4d*d + d), final 2d, head 32*32 + 32
    const std::int64_t d = 32;
    const std::int64_t per_block = 2 * d + 4 * (d * d + d) + 2 * d + (4 * d * d + 4 * d) + (4 * d * d + d);
    REQUIRE(L.total == 32 * d + 64 * d + 2 * per_block + 2 * d + 32 * d + 32);
    REQUIRE(L.total == 29600);
    // tensors tile the flat vector with no gaps
    REQUIRE(L.block[1].ln1_g - L.block[0].ln1_g == per_block);
    REQUIRE(L.head_b == L.head_w + 32 * d);
    REQUIRE(L.total == L.head_b + 32);
}

TEST_CASE("arch validation rejects bad shapes") {
    ModelArch a;
    a.heads = 3;  // 32 % 3 != 0
    REQUIRE_THROWS_AS(a.validate(), DomainError);
    a = ModelArch{};
    a.vocab = 2;
    REQUIRE_THROWS_AS(a.validate(), DomainError);
    a = ModelArch{};
    a.blocks = 0;
    REQUIRE_THROWS_AS(a.validate(), DomainError);
}

TEST_CASE("gaussian init is seeded and has the right scale") {
    ModelParams p(ModelArch{});
    p.init_gaussian(5);
    ModelParams q(ModelArch{});
    q.init_gaussian(5);
    REQUIRE(p == q);
    q.init_gaussian(6);
    REQUIRE(!(p == q));

    double sum = 0.0, sq = 0.0;
    for (std::int64_t i = 0; i < p.size(); ++i) {
        sum += p.data()[i];
        sq += p.data()[i] * p.data()[i];
    }
    const double mean = sum / static_cast<double>(p.size());
    const double var = sq / static_cast<double>(p.size()) - mean * mean;
    REQUIRE(mean == Approx(0.0).margin(1e-3));
    REQUIRE(std::sqrt(var) == Approx(0.02).margin(2e-3));
}

TEST_CASE("checkpoint round-trips bit for bit") {
    const std::string path = temp_path("ckpt_roundtrip.ckpt");
    ModelParams p = fixtures::tiny_params(3);
    save_checkpoint(p, path);
    const ModelParams q = load_checkpoint(path);
    REQUIRE(p == q);

    // the file itself is stable: saving the loaded copy gives identical bytes
    const std::string path2 = temp_path("ckpt_roundtrip2.ckpt");
    save_checkpoint(q, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint loading rejects damaged files") {
    const std::string path = temp_path("ckpt_damage.ckpt");
    ModelParams p = fixtures::tiny_params(4);
    save_checkpoint(p, path);

    SECTION("missing file") {
        REQUIRE_THROWS_AS(load_checkpoint(temp_path("no_such.ckpt")), IoError);
    }
    SECTION("mangled header") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XEATCKPT", 8);
        f.close();
        REQUIRE_THROWS_AS(load_checkpoint(path), ParseError);
    }
    SECTION("wrong version") {
        std::string all;
        {
            std::ifstream in(path, std::ios::binary);
            all.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        }
        const auto at = all.find("version=1");
        REQUIRE(at != std::string::npos);
        all[at + 8] = '9';
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << all;
        out.close();
        REQUIRE_THROWS_AS(load_checkpoint(path), ParseError);
    }
    SECTION("truncated payload") {
        std::error_code ec;
        std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9, ec);
        REQUIRE(!ec);
        REQUIRE_THROWS_AS(load_checkpoint(path), ParseError);
    }
    SECTION("trailing bytes") {
        std::ofstream f(path, std::ios::binary | std::ios::app);
        f << "x";
        f.close();
        REQUIRE_THROWS_AS(load_checkpoint(path), ParseError);
    }
    SECTION("non-finite parameter") {
        // NaN bits at the first parameter slot, just past the header line
        std::string all;
        {
            std::ifstream in(path, std::ios::binary);
            all.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        }
        const auto nl = all.find('\n');
        REQUIRE(nl != std::string::npos);
        const double bad = std::nan("");
        std::memcpy(all.data() + nl + 1, &bad, sizeof(bad));
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << all;
        out.close();
        REQUIRE_THROWS_AS(load_checkpoint(path), NumericError);
    }
    std::remove(path.c_str());
}

TEST_CASE("saving non-finite parameters is refused") {
    ModelParams p = fixtures::tiny_params(5);
    p.data()[10] = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(save_checkpoint(p, temp_path("ckpt_inf.ckpt")), NumericError);
}
