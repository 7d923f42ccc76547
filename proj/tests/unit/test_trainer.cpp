#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "neat/corpus.hpp"
#include "neat/trainer.hpp"

using namespace neat;

namespace {

namespace fs = std::filesystem;

struct World {
    RewardSpec spec = build_reward_spec(4);
    std::vector<PromptTemplate> prompts = build_prompts();
    Dataset data;
    ModelParams init;

    World() : data(build_preference_data(spec, 4, 21, false)), init(ModelArch{}) {
        init.init_gaussian(17);
    }
};

TrainConfig tiny_config(const std::string& mode) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.iterations = 3;
    cfg.batch = 2;
    cfg.seed = 13;
    cfg.exact_eval_every = 0;
    return cfg;
}

}  // namespace

TEST_CASE("expansion bookkeeping per mode") {
    World w;
    TrainConfig cfg = tiny_config(kModeNeat);
    cfg.dedup = false;
    TrainResult res = train(w.init, w.data, w.spec, w.prompts, cfg, {});
    // every step stores one response per record per template
    REQUIRE(res.added == 3 * 2 * 2);
    REQUIRE(res.dropped == 0);

    World w2;
    cfg.dedup = true;
    res = train(w2.init, w2.data, w2.spec, w2.prompts, cfg, {});
    REQUIRE(res.added + res.dropped == 3 * 2 * 2);

    World w3;
    res = train(w3.init, w3.data, w3.spec, w3.prompts, tiny_config(kModeSftOnly), {});
    REQUIRE(res.added == 0);
    REQUIRE(res.dropped == 0);
}

TEST_CASE("mode weighting") {
    TrainConfig cfg;
    cfg.loss.alpha = 0.7;
    cfg.loss.beta = 0.3;
    cfg.mode = kModeSftOnly;
    LossConfig eff = effective_loss_config(cfg);
    REQUIRE(eff.alpha == 0.0);
    REQUIRE(eff.beta == 0.0);
    REQUIRE_FALSE(mode_samples(cfg));
    cfg.mode = kModeRrhfLike;
    eff = effective_loss_config(cfg);
    REQUIRE(eff.alpha == 0.7);
    REQUIRE(eff.beta == 0.0);
    REQUIRE(mode_samples(cfg));
    cfg.mode = kModeNeat;
    eff = effective_loss_config(cfg);
    REQUIRE(eff.beta == 0.3);
    REQUIRE(mode_samples(cfg));
}

TEST_CASE("training is a pure function of its config") {
    World a, b;
    const TrainConfig cfg = tiny_config(kModeNeat);
    TrainResult ra = train(a.init, a.data, a.spec, a.prompts, cfg, {});
    TrainResult rb = train(b.init, b.data, b.spec, b.prompts, cfg, {});
    REQUIRE(ra.params.flat() == rb.params.flat());
    REQUIRE(ra.curve.size() == rb.curve.size());
    for (std::size_t i = 0; i < ra.curve.size(); ++i) {
        REQUIRE(ra.curve[i].mean_batch_reward == rb.curve[i].mean_batch_reward);
        REQUIRE(ra.curve[i].total == rb.curve[i].total);
    }

    World c;
    TrainConfig other = cfg;
    other.seed = 14;
    TrainResult rc = train(c.init, c.data, c.spec, c.prompts, other, {});
    REQUIRE(ra.params.flat() != rc.params.flat());
}

TEST_CASE("sft_only total carries no ranking or penalty weight") {
    World w;
    TrainResult res = train(w.init, w.data, w.spec, w.prompts, tiny_config(kModeSftOnly), {});
    REQUIRE(res.curve.size() == 3);
    for (const auto& row : res.curve) {
        REQUIRE(row.total == row.sft);
        REQUIRE(std::isfinite(row.mean_batch_reward));
    }
}

TEST_CASE("curve CSV round-trips the in-memory rows") {
    World w;
    TrainConfig cfg = tiny_config(kModeNeat);
    cfg.exact_eval_every = 2;
    cfg.exact_max_len = 2;
    cfg.exact_probe_records = 1;
    const std::string path = (fs::temp_directory_path() / "curve_rt.csv").string();
    TrainSinks sinks;
    sinks.curve_csv = path;
    TrainResult res = train(w.init, w.data, w.spec, w.prompts, cfg, sinks);

    const auto rows = parse_curve(path);
    REQUIRE(rows.size() == res.curve.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(rows[i].step == res.curve[i].step);
        REQUIRE(rows[i].mean_batch_reward == res.curve[i].mean_batch_reward);
        REQUIRE(rows[i].sft == res.curve[i].sft);
        REQUIRE(rows[i].ranking == res.curve[i].ranking);
        REQUIRE(rows[i].penalty == res.curve[i].penalty);
        REQUIRE(rows[i].total == res.curve[i].total);
        REQUIRE(rows[i].clipped_frac == res.curve[i].clipped_frac);
        REQUIRE(rows[i].exact.has_value() == res.curve[i].exact.has_value());
        if (rows[i].exact) REQUIRE(*rows[i].exact == *res.curve[i].exact);
    }
    // cadence: exact filled on steps 2 and the final step, never elsewhere
    REQUIRE_FALSE(rows[0].exact.has_value());
    REQUIRE(rows[1].exact.has_value());
    REQUIRE(rows[2].exact.has_value());
    fs::remove(path);
}

TEST_CASE("curve parser rejects damage") {
    const std::string path = (fs::temp_directory_path() / "curve_bad.csv").string();
    std::ofstream(path, std::ios::trunc) << "step,reward\n";
    REQUIRE_THROWS_AS(parse_curve(path), ParseError);
    std::ofstream(path, std::ios::trunc) << kCurveHeader << "\n1,2,3\n";
    REQUIRE_THROWS_AS(parse_curve(path), ParseError);
    std::ofstream(path, std::ios::trunc) << kCurveHeader << "\n1,x,0,0,0,0,0,\n";
    REQUIRE_THROWS_AS(parse_curve(path), ParseError);
    std::ofstream(path, std::ios::trunc) << "";
    REQUIRE_THROWS_AS(parse_curve(path), ParseError);
    fs::remove(path);
    REQUIRE_THROWS_AS(parse_curve(path), IoError);
}

TEST_CASE("config JSON round-trip") {
    TrainConfig c;
    c.mode = kModeRrhfLike;
    c.loss.alpha = 0.5;
    c.loss.beta = 0.25;
    c.loss.tau = 3.0;
    c.lambda = 0.8;
    c.lr = 5e-4;
    c.iterations = 42;
    c.batch = 6;
    c.seed = 99;
    c.optimizer = "sgd";
    c.dedup = false;
    c.pool_cap = 4;
    c.sample_max_len = 7;
    c.exact_eval_every = 10;
    c.exact_max_len = 3;
    c.exact_probe_records = 5;
    c.checkpoint_every = 20;

    const TrainConfig back = train_config_from_json(train_config_to_json(c));
    REQUIRE(back.mode == c.mode);
    REQUIRE(back.loss.alpha == c.loss.alpha);
    REQUIRE(back.loss.beta == c.loss.beta);
    REQUIRE(back.loss.tau == c.loss.tau);
    REQUIRE(back.lambda == c.lambda);
    REQUIRE(back.lr == c.lr);
    REQUIRE(back.iterations == c.iterations);
    REQUIRE(back.batch == c.batch);
    REQUIRE(back.seed == c.seed);
    REQUIRE(back.optimizer == c.optimizer);
    REQUIRE(back.dedup == c.dedup);
    REQUIRE(back.pool_cap == c.pool_cap);
    REQUIRE(back.sample_max_len == c.sample_max_len);
    REQUIRE(back.exact_eval_every == c.exact_eval_every);
    REQUIRE(back.exact_max_len == c.exact_max_len);
    REQUIRE(back.exact_probe_records == c.exact_probe_records);
    REQUIRE(back.checkpoint_every == c.checkpoint_every);

    REQUIRE_THROWS_AS(train_config_from_json({{"modes", "neat"}}), ParseError);
    REQUIRE_THROWS_AS(train_config_from_json({{"iterations", "many"}}), ParseError);

    // partial configs keep defaults
    const TrainConfig partial = train_config_from_json({{"beta", 0.9}});
    REQUIRE(partial.loss.beta == 0.9);
    REQUIRE(partial.loss.alpha == TrainConfig{}.loss.alpha);
    REQUIRE(partial.lambda == 1.0);
}

TEST_CASE("config validation") {
    TrainConfig c;
    c.mode = "alignment";
    REQUIRE_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.lambda = 0.0;
    REQUIRE_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.pool_cap = 3;
    REQUIRE_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.optimizer = "lion";
    REQUIRE_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.lr = -1.0;
    REQUIRE_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.validate();
}

TEST_CASE("checkpoint sinks") {
    World w;
    TrainConfig cfg = tiny_config(kModeNeat);
    cfg.checkpoint_every = 2;
    const std::string dir = (fs::temp_directory_path() / "train_ckpts").string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    TrainSinks sinks;
    sinks.checkpoint_dir = dir;
    TrainResult res = train(w.init, w.data, w.spec, w.prompts, cfg, sinks);

    REQUIRE(fs::exists(dir + "/model_step000002.ckpt"));
    REQUIRE_FALSE(fs::exists(dir + "/model_step000003.ckpt"));
    REQUIRE(fs::exists(dir + "/model_final.ckpt"));
    const ModelParams back = load_checkpoint(dir + "/model_final.ckpt");
    REQUIRE(back.flat() == res.params.flat());

    std::ifstream js(dir + "/model_final.json");
    nlohmann::json side;
    js >> side;
    REQUIRE(side.at("step").get<int>() == 3);
    REQUIRE(side.at("added").get<int>() == res.added);
    const TrainConfig stored = train_config_from_json(side.at("config"));
    REQUIRE(stored.seed == cfg.seed);
    fs::remove_all(dir);
}

TEST_CASE("degenerate training inputs") {
    World w;
    Dataset empty;
    REQUIRE_THROWS_AS(train(w.init, empty, w.spec, w.prompts, tiny_config(kModeNeat), {}),
                      DomainError);
    REQUIRE_THROWS_AS(train(w.init, w.data, w.spec, {}, tiny_config(kModeNeat), {}), DomainError);
    // sft_only never samples, so missing prompts are fine there
    TrainResult res = train(w.init, w.data, w.spec, {}, tiny_config(kModeSftOnly), {});
    REQUIRE(res.curve.size() == 3);
}
