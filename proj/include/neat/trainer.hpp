#pragma once

#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "neat/dataset.hpp"
#include "neat/evalkit.hpp"
#include "neat/loss.hpp"
#include "neat/optim.hpp"
#include "neat/prompt.hpp"
#include "neat/sample.hpp"
#include "neat/sampler.hpp"

namespace neat {

inline constexpr const char* kModeNeat = "neat";
inline constexpr const char* kModeSftOnly = "sft_only";
inline constexpr const char* kModeRrhfLike = "rrhf_like";

struct TrainConfig {
    std::string mode = kModeNeat;
    LossConfig loss;  // alpha, beta, tau
    double lambda = 1.0;  // sampling temperature
    double lr = 1e-3;
    int iterations = 200;
    int batch = 4;
    std::uint64_t seed = 0;
    std::string optimizer = "adam";  // adam | sgd
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool dedup = true;
    int pool_cap = 8;
    int sample_max_len = 8;
    int exact_eval_every = 100;  // 0 disables periodic exact evaluation
    int exact_max_len = 4;
    int exact_probe_records = 2;
    int checkpoint_every = 0;  // 0 = final checkpoint only

    void validate() const {
        if (mode != kModeNeat && mode != kModeSftOnly && mode != kModeRrhfLike)
            throw DomainError("unknown training mode: " + mode);
        if (optimizer != "adam" && optimizer != "sgd")
            throw DomainError("unknown optimizer: " + optimizer);
        if (iterations < 0) throw DomainError("iterations must be non-negative");
        if (batch < 1) throw DomainError("batch must be positive");
        if (lr <= 0.0) throw DomainError("lr must be positive");
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw DomainError("lambda must be positive and finite");
        if (loss.tau <= 0.0) throw DomainError("tau must be positive");
        if (pool_cap < 2 || pool_cap % 2 != 0) throw DomainError("pool_cap must be even and >= 2");
        if (sample_max_len < 1) throw DomainError("sample_max_len must be positive");
        if (exact_eval_every < 0 || exact_max_len < 1 || exact_probe_records < 1)
            throw DomainError("bad exact-eval settings");
        if (checkpoint_every < 0) throw DomainError("checkpoint_every must be non-negative");
    }
};

// Mode folds into the loss weights: sft_only trains on stored data alone,
// rrhf_like adds sampling and ranking but no penalty.
inline LossConfig effective_loss_config(const TrainConfig& cfg) {
    LossConfig lc = cfg.loss;
    if (cfg.mode == kModeSftOnly) {
        lc.alpha = 0.0;
        lc.beta = 0.0;
    } else if (cfg.mode == kModeRrhfLike) {
        lc.beta = 0.0;
    }
    return lc;
}

inline bool mode_samples(const TrainConfig& cfg) { return cfg.mode != kModeSftOnly; }

// ----------------------------- config JSON -----------------------------

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {
        {"mode", c.mode},
        {"alpha", c.loss.alpha},
        {"beta", c.loss.beta},
        {"tau", c.loss.tau},
        {"lambda", c.lambda},
        {"lr", c.lr},
        {"iterations", c.iterations},
        {"batch", c.batch},
        {"seed", c.seed},
        {"optimizer", c.optimizer},
        {"adam_beta1", c.adam_beta1},
        {"adam_beta2", c.adam_beta2},
        {"adam_eps", c.adam_eps},
        {"dedup", c.dedup},
        {"pool_cap", c.pool_cap},
        {"sample_max_len", c.sample_max_len},
        {"exact_eval_every", c.exact_eval_every},
        {"exact_max_len", c.exact_max_len},
        {"exact_probe_records", c.exact_probe_records},
        {"checkpoint_every", c.checkpoint_every},
    };
}

// Missing keys keep their defaults; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    static const char* known[] = {"mode", "alpha", "beta", "tau", "lambda", "lr", "iterations",
                                  "batch", "seed", "optimizer", "adam_beta1", "adam_beta2",
                                  "adam_eps", "dedup", "pool_cap", "sample_max_len",
                                  "exact_eval_every", "exact_max_len", "exact_probe_records",
                                  "checkpoint_every"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) { ok = true; break; }
        if (!ok) throw ParseError("unknown training config key: " + key);
    }
    TrainConfig c;
    try {
        c.mode = j.value("mode", c.mode);
        c.loss.alpha = j.value("alpha", c.loss.alpha);
        c.loss.beta = j.value("beta", c.loss.beta);
        c.loss.tau = j.value("tau", c.loss.tau);
        c.lambda = j.value("lambda", c.lambda);
        c.lr = j.value("lr", c.lr);
        c.iterations = j.value("iterations", c.iterations);
        c.batch = j.value("batch", c.batch);
        c.seed = j.value("seed", c.seed);
        c.optimizer = j.value("optimizer", c.optimizer);
        c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
        c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.dedup = j.value("dedup", c.dedup);
        c.pool_cap = j.value("pool_cap", c.pool_cap);
        c.sample_max_len = j.value("sample_max_len", c.sample_max_len);
        c.exact_eval_every = j.value("exact_eval_every", c.exact_eval_every);
        c.exact_max_len = j.value("exact_max_len", c.exact_max_len);
        c.exact_probe_records = j.value("exact_probe_records", c.exact_probe_records);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed training config: ") + e.what());
    }
    c.validate();
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return train_config_from_json(j);
}

// ----------------------------- curve CSV -----------------------------

inline constexpr const char* kCurveHeader =
    "step,mean_batch_reward,sft,ranking,penalty,total,clipped_frac,exact_expected_reward";

struct CurveRow {
    std::int64_t step = 0;
    double mean_batch_reward = 0.0;
    double sft = 0.0;
    double ranking = 0.0;
    double penalty = 0.0;
    double total = 0.0;
    double clipped_frac = 0.0;
    std::optional<double> exact;
};

inline std::string format_curve_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_curve_row(const CurveRow& r) {
    std::string out = std::to_string(r.step);
    for (double v : {r.mean_batch_reward, r.sft, r.ranking, r.penalty, r.total, r.clipped_frac}) {
        out += ',';
        out += format_curve_value(v);
    }
    out += ',';
    if (r.exact) out += format_curve_value(*r.exact);
    return out;
}

inline std::vector<CurveRow> parse_curve(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty curve file: " + path);
    if (line != kCurveHeader) throw ParseError("unexpected curve header in " + path);
    std::vector<CurveRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.push_back("");
        if (cells.size() != 8)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 8 columns");
        try {
            CurveRow r;
            r.step = std::stoll(cells[0]);
            r.mean_batch_reward = std::stod(cells[1]);
            r.sft = std::stod(cells[2]);
            r.ranking = std::stod(cells[3]);
            r.penalty = std::stod(cells[4]);
            r.total = std::stod(cells[5]);
            r.clipped_frac = std::stod(cells[6]);
            if (!cells[7].empty()) r.exact = std::stod(cells[7]);
            rows.push_back(r);
        } catch (const std::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

// ----------------------------- training loop -----------------------------

struct TrainSinks {
    std::string curve_csv;       // empty = no CSV
    std::string checkpoint_dir;  // empty = no checkpoints
};

struct TrainResult {
    ModelParams params;
    std::vector<CurveRow> curve;
    std::int64_t added = 0;
    std::int64_t dropped = 0;
    std::optional<double> final_exact;
};

namespace detail {

class EpochOrder {
public:
    EpochOrder(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) { refill(); }

    std::size_t next() {
        if (pos_ == order_.size()) refill();
        return order_[pos_++];
    }

private:
    void refill() {
        if (order_.empty()) {
            order_.resize(n_);
            std::iota(order_.begin(), order_.end(), std::size_t{0});
        }
        Rng rng(splitmix64(splitmix64(seed_ ^ 0xe70c450ULL) ^ static_cast<std::uint64_t>(epoch_)));
        rng.shuffle(order_);
        ++epoch_;
        pos_ = 0;
    }

    std::size_t n_;
    std::uint64_t seed_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::int64_t epoch_ = 0;
};

}  // namespace detail

// Online loop: each step draws a batch of records, samples one response per
// steering prompt per record, scores them against the plain query, folds the
// fresh responses into that record's loss pool, takes one optimizer step on
// the batch-mean gradient, then expands storage with the fresh responses.
inline TrainResult train(const ModelParams& init, Dataset& data, const RewardSpec& spec,
                         const std::vector<PromptTemplate>& prompts, const TrainConfig& cfg,
                         const TrainSinks& sinks = {}) {
    cfg.validate();
    if (data.size() == 0) throw DomainError("training dataset is empty");
    if (mode_samples(cfg) && prompts.empty()) throw DomainError("sampling modes need prompt templates");
    const LossConfig eff = effective_loss_config(cfg);
    const std::int64_t added0 = data.added_count();
    const std::int64_t dropped0 = data.dropped_count();

    TrainResult res{init, {}, 0, 0, {}};
    res.curve.reserve(static_cast<std::size_t>(cfg.iterations));
    Adam adam({cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    detail::EpochOrder order(data.size(), cfg.seed);
    LossWorkspace ws;
    GradVector grad = make_grad(res.params);

    std::vector<TokenSeq> probes;
    const int n_probes = std::min<int>(cfg.exact_probe_records, static_cast<int>(data.size()));
    for (int i = 0; i < n_probes; ++i) probes.push_back(data.record(static_cast<std::size_t>(i)).query);

    std::ofstream csv;
    if (!sinks.curve_csv.empty()) {
        csv.open(sinks.curve_csv, std::ios::trunc);
        if (!csv) throw IoError("cannot open for write: " + sinks.curve_csv);
        csv << kCurveHeader << "\n";
    }

    struct Fresh {
        std::size_t record;
        ScoredResponse response;
    };
    std::vector<Fresh> fresh;
    PreferenceRecord work;

    for (int step = 1; step <= cfg.iterations; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        fresh.clear();
        CurveRow row;
        row.step = step;
        double reward_sum = 0.0;
        int reward_n = 0;
        int clipped = 0;

        for (int b = 0; b < cfg.batch; ++b) {
            const std::size_t ri = order.next();
            const PreferenceRecord& stored = data.record(ri);
            const int fam = spec.family_index(stored.family);

            work.query = stored.query;
            work.family = stored.family;
            work.responses.clear();
            for (int idx : select_loss_pool(stored, cfg.pool_cap))
                work.responses.push_back(stored.responses[static_cast<std::size_t>(idx)]);

            if (mode_samples(cfg)) {
                for (const auto& tmpl : prompts) {
                    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step),
                                        hash_tokens(stored.query), tmpl.kind));
                    ScoredResponse sr = sample_prompted(ws.ev, res.params, tmpl, stored.query,
                                                        spec, fam, cfg.lambda,
                                                        cfg.sample_max_len, rng);
                    reward_sum += sr.reward;
                    ++reward_n;
                    work.responses.push_back(sr);
                    fresh.push_back({ri, std::move(sr)});
                }
            } else {
                reward_sum += best_stored_response(stored).reward;
                ++reward_n;
            }

            LossBreakdown lb;
            try {
                lb = record_loss_grad(ws, res.params, work, eff, grad, 1.0 / cfg.batch);
            } catch (const NumericError& e) {
                throw NumericError("step " + std::to_string(step) + ", query " +
                                   tokens_to_string(stored.query) + ": " + e.what());
            }
            row.sft += lb.sft / cfg.batch;
            row.ranking += lb.ranking / cfg.batch;
            row.penalty += lb.penalty / cfg.batch;
            row.total += lb.total / cfg.batch;
            if (lb.clipped) ++clipped;
        }

        if (cfg.optimizer == "adam") adam.step(res.params, grad);
        else sgd_step(res.params, grad, cfg.lr);

        for (auto& f : fresh) data.expand(f.record, f.response, cfg.dedup);

        row.mean_batch_reward = reward_sum / reward_n;
        row.clipped_frac = static_cast<double>(clipped) / cfg.batch;
        if (cfg.exact_eval_every > 0 &&
            (step % cfg.exact_eval_every == 0 || step == cfg.iterations)) {
            row.exact = exact_eval_mean(res.params, spec, probes, cfg.exact_max_len);
            res.final_exact = row.exact;
        }

        if (csv.is_open()) {
            csv << format_curve_row(row) << "\n";
            csv.flush();
            if (!csv) throw IoError("write failed: " + sinks.curve_csv);
        }
        res.curve.push_back(std::move(row));

        if (!sinks.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
            step % cfg.checkpoint_every == 0) {
            char name[40];
            std::snprintf(name, sizeof(name), "model_step%06d.ckpt", step);
            save_checkpoint(res.params, sinks.checkpoint_dir + "/" + name);
        }
    }

    res.params.check_finite();
    res.added = data.added_count() - added0;
    res.dropped = data.dropped_count() - dropped0;

    if (!sinks.checkpoint_dir.empty()) {
        save_checkpoint(res.params, sinks.checkpoint_dir + "/model_final.ckpt");
        nlohmann::json side = {{"step", cfg.iterations},
                               {"config", train_config_to_json(cfg)},
                               {"added", res.added},
                               {"dropped", res.dropped}};
        if (res.final_exact) side["exact_expected_reward"] = *res.final_exact;
        std::ofstream js(sinks.checkpoint_dir + "/model_final.json", std::ios::trunc);
        if (!js) throw IoError("cannot open for write: " + sinks.checkpoint_dir + "/model_final.json");
        js << side.dump(2) << "\n";
        if (!js) throw IoError("write failed: " + sinks.checkpoint_dir + "/model_final.json");
    }
    return res;
}

}  // namespace neat
