#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "neat/loss.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using Catch::Approx;
using namespace neat;

TEST_CASE("extreme selection picks lowest qualifying indices") {
    REQUIRE(select_extremes({2.0, 1.0, 0.0, -2.0}) == std::pair<int, int>{0, 3});
    REQUIRE(select_extremes({1.0, 3.0, 3.0, -1.0, -1.0}) == std::pair<int, int>{1, 3});
    // all equal: best stays first, worst moves to last so the roles differ
    REQUIRE(select_extremes({0.5, 0.5, 0.5}) == std::pair<int, int>{0, 2});
    REQUIRE_THROWS_AS(select_extremes({1.0}), DomainError);
    REQUIRE_THROWS_AS(select_extremes({}), DomainError);
}

TEST_CASE("ranking hinge on hand cases") {
    // correctly ordered: zero
    REQUIRE(ranking_loss_from_logprobs({-1.0, -2.0}, {2.0, 1.0}) == 0.0);
    // inverted: the gap
    REQUIRE(ranking_loss_from_logprobs({-2.0, -1.0}, {2.0, 1.0}) == Approx(1.0));
    // tie in rewards: no pair regardless of logprobs
    REQUIRE(ranking_loss_from_logprobs({-5.0, -1.0}, {1.0, 1.0}) == 0.0);
    // three responses, one violation: p0 < p2 with r0 > r2
    REQUIRE(ranking_loss_from_logprobs({-3.0, -2.0, -1.0}, {3.0, 2.0, 1.0}) ==
            Approx((-2.0 - -3.0) + (-1.0 - -3.0) + (-1.0 - -2.0)));
    REQUIRE_THROWS_AS(ranking_loss_from_logprobs({-1.0}, {1.0, 2.0}), DomainError);
}

TEST_CASE("ranking loss is zero exactly when weakly reward-ordered") {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 2 + static_cast<int>(rng.below(5));
        std::vector<double> p(static_cast<std::size_t>(k)), r(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            p[static_cast<std::size_t>(i)] = -3.0 * rng.uniform01();
            // coarse grid makes reward ties common
            r[static_cast<std::size_t>(i)] = static_cast<double>(rng.below(4));
        }
        bool ordered = true;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                if (r[static_cast<std::size_t>(i)] < r[static_cast<std::size_t>(j)] &&
                    p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(j)])
                    ordered = false;
        const double loss = ranking_loss_from_logprobs(p, r);
        if (ordered) REQUIRE(loss == 0.0);
        else REQUIRE(loss > 0.0);
    }
}

TEST_CASE("ranking coefficients are the hinge subgradient") {
    const std::vector<double> p = {-2.0, -1.0, -3.0};
    const std::vector<double> r = {3.0, 2.0, 1.0};
    // violated pairs: (1,0) since p1 > p0 with r1 < r0
    const std::vector<double> c = ranking_coeffs(p, r);
    REQUIRE(c == std::vector<double>{-1.0, 1.0, 0.0});
    // FD check against the scalar hinge loss
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::vector<double> up = p, dn = p;
        up[i] += 1e-6;
        dn[i] -= 1e-6;
        const double fd = (ranking_loss_from_logprobs(up, r) -
                           ranking_loss_from_logprobs(dn, r)) / 2e-6;
        REQUIRE(c[i] == Approx(fd).margin(1e-9));
    }
}

TEST_CASE("record loss closed forms at zero parameters") {
    ModelParams p(fixtures::tiny_arch());  // all zeros, V = 12
    const PreferenceRecord rec = fixtures::tiny_record();
    const LossConfig cfg;  // alpha 1, beta 0.1, tau 8
    const LossBreakdown lb = record_loss(p, rec, cfg);
    const double logv = std::log(12.0);
    REQUIRE(lb.best == 0);
    REQUIRE(lb.worst == 3);
    // best response has 3 tokens, each at -log V
    REQUIRE(lb.sft == Approx(3.0 * logv).epsilon(0).margin(1e-11));
    // every normalized log-prob equals -log V: weak order holds everywhere
    REQUIRE(lb.ranking == Approx(0.0).margin(1e-12));
    // per-token NLL = log 12 < tau = 8: no clipping
    REQUIRE(!lb.clipped);
    REQUIRE(lb.penalty == Approx(3.0 * logv).epsilon(0).margin(1e-11));
    REQUIRE(lb.total == Approx(lb.sft + cfg.alpha * lb.ranking - cfg.beta * lb.penalty)
                            .epsilon(0).margin(1e-12));
}

TEST_CASE("tau clipping engages token by token") {
    ModelParams p(fixtures::tiny_arch());
    const PreferenceRecord rec = fixtures::tiny_record();
    LossConfig cfg;
    cfg.tau = 0.5;  // log 12 = 2.48 >= tau: every worst token clips
    const LossBreakdown lb = record_loss(p, rec, cfg);
    REQUIRE(lb.clipped);
    REQUIRE(lb.penalty == Approx(3.0 * 0.5).epsilon(0).margin(1e-12));

    cfg.tau = 1e9;  // nothing clips
    const LossBreakdown lb2 = record_loss(p, rec, cfg);
    REQUIRE(!lb2.clipped);
    REQUIRE(lb2.penalty == Approx(3.0 * std::log(12.0)).epsilon(0).margin(1e-7));
}

TEST_CASE("each loss component's gradient matches finite differences") {
    const ModelParams params = fixtures::tiny_params(51);
    const PreferenceRecord rec = fixtures::tiny_record();
    LossConfig cfg;
    cfg.alpha = 0.7;
    cfg.beta = 0.4;
    cfg.tau = 3.0;  // with random params some worst tokens clip, some do not

    const ParamLayout& L = params.layout();
    const std::vector<std::int64_t> probes = {
        L.tok_emb + 3 * 8 + 1, L.pos_emb + 3 * 8 + 2, L.block[0].wq + 7,
        L.block[0].wo + 19,    L.block[1].fc1_w + 55, L.block[1].fc2_w + 7,
        L.lnf_g + 1,           L.head_w + 10 * 8 + 3, L.head_b + 5,
    };

    LossWorkspace ws;
    const struct {
        GradKind kind;
        double (*pick)(const LossBreakdown&);
    } kinds[] = {
        {GradKind::sft, [](const LossBreakdown& b) { return b.sft; }},
        {GradKind::ranking, [](const LossBreakdown& b) { return b.ranking; }},
        {GradKind::penalty, [](const LossBreakdown& b) { return b.penalty; }},
        {GradKind::total, [](const LossBreakdown& b) { return b.total; }},
    };
    for (const auto& k : kinds) {
        GradVector g = make_grad(params);
        record_loss_grad(ws, params, rec, cfg, g, 1.0, k.kind);
        auto f = [&](const ModelParams& q) { return k.pick(record_loss(q, rec, cfg)); };
        for (std::int64_t idx : probes) {
            const double fd = oracle::fd_derivative(f, params, idx, 1e-5);
            INFO("kind " << static_cast<int>(k.kind) << " param " << idx);
            REQUIRE(oracle::close_rel_abs(g[static_cast<std::size_t>(idx)], fd, 1e-6, 1e-8));
        }
    }
}

TEST_CASE("total gradient is the weighted combination of the parts") {
    const ModelParams params = fixtures::tiny_params(52);
    const PreferenceRecord rec = fixtures::tiny_record();
    LossConfig cfg;
    cfg.alpha = 0.5;
    cfg.beta = 0.25;
    cfg.tau = 3.0;

    LossWorkspace ws;
    GradVector g_sft = make_grad(params), g_rank = make_grad(params),
               g_pen = make_grad(params), g_tot = make_grad(params);
    record_loss_grad(ws, params, rec, cfg, g_sft, 1.0, GradKind::sft);
    record_loss_grad(ws, params, rec, cfg, g_rank, 1.0, GradKind::ranking);
    record_loss_grad(ws, params, rec, cfg, g_pen, 1.0, GradKind::penalty);
    record_loss_grad(ws, params, rec, cfg, g_tot, 1.0, GradKind::total);
    for (std::size_t i = 0; i < g_tot.size(); ++i) {
        const double want = g_sft[i] + cfg.alpha * g_rank[i] - cfg.beta * g_pen[i];
        REQUIRE(g_tot[i] == Approx(want).epsilon(1e-10).margin(1e-12));
    }
}

TEST_CASE("scale multiplies the accumulated gradient") {
    const ModelParams params = fixtures::tiny_params(53);
    const PreferenceRecord rec = fixtures::tiny_record();
    const LossConfig cfg;
    LossWorkspace ws;
    GradVector g1 = make_grad(params), ghalf = make_grad(params);
    record_loss_grad(ws, params, rec, cfg, g1, 1.0);
    record_loss_grad(ws, params, rec, cfg, ghalf, 0.5);
    for (std::size_t i = 0; i < g1.size(); ++i)
        REQUIRE(ghalf[i] == Approx(0.5 * g1[i]).epsilon(1e-12).margin(1e-15));
}

TEST_CASE("non-finite parameters abort the loss") {
    ModelParams p(fixtures::tiny_arch());
    p.fill(std::nan(""));
    REQUIRE_THROWS_AS(record_loss(p, fixtures::tiny_record(), LossConfig{}), NumericError);
}
