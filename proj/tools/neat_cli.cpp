// Command-line driver: corpus generation, pretraining, aligned training,
// evaluation, comparison, sampling, and curve summaries. Machine-readable
// output goes to stdout as JSON; diagnostics go to stderr.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "neat/neat.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

neat::TokenSeq parse_query_arg(const std::string& s) {
    neat::TokenSeq q;
    std::string cur;
    for (char ch : s + ",") {
        if (ch == ',') {
            if (!cur.empty()) {
                try {
                    q.push_back(std::stoi(cur));
                } catch (const std::exception&) {
                    throw neat::ParseError("bad token id in query: " + cur);
                }
                cur.clear();
            }
        } else if (!std::isspace(static_cast<unsigned char>(ch))) {
            cur += ch;
        }
    }
    neat::check_query_role(q);
    return q;
}

int cmd_gen_corpus(const std::string& out_dir, int families, std::uint64_t seed) {
    fs::create_directories(out_dir);
    const neat::RewardSpec spec = neat::build_reward_spec(families);
    neat::save_reward_spec(spec, out_dir + "/spec.json");
    neat::save_prompts(neat::build_prompts(), out_dir + "/prompts.json");
    neat::save_pretrain_corpus(neat::build_pretrain_corpus(families, seed), out_dir + "/pretrain.jsonl");
    neat::save_dataset(neat::build_preference_data(spec, families, seed, false), out_dir + "/train.jsonl");
    neat::save_dataset(neat::build_preference_data(spec, families, seed, true), out_dir + "/eval.jsonl");
    std::cout << json{{"out_dir", out_dir},
                      {"families", families},
                      {"files", {"spec.json", "prompts.json", "pretrain.jsonl", "train.jsonl", "eval.jsonl"}}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_pretrain(const std::string& corpus_path, const std::string& out_path, int steps, int batch,
                 double lr, std::uint64_t seed) {
    const auto corpus = neat::load_pretrain_corpus(corpus_path);
    std::cerr << "pretraining on " << corpus.size() << " sequences, " << steps << " steps\n";
    neat::PretrainConfig pc;
    pc.steps = steps;
    pc.batch = batch;
    pc.lr = lr;
    pc.seed = seed;
    const neat::ModelParams params = neat::pretrain(neat::ModelArch{}, corpus, pc);
    neat::save_checkpoint(params, out_path);
    std::cout << json{{"checkpoint", out_path}, {"steps", steps}, {"params", params.size()}}.dump()
              << "\n";
    return 0;
}

int cmd_train(const std::string& init_path, const std::string& data_path,
              const std::string& spec_path, const std::string& prompts_path,
              const neat::TrainConfig& cfg, const std::string& out_dir) {
    const neat::RewardSpec spec = neat::load_reward_spec(spec_path);
    neat::ModelParams params = neat::load_checkpoint(init_path);
    neat::Dataset data = neat::load_dataset(data_path, &spec);
    const auto prompts = neat::load_prompts(prompts_path, params.arch().vocab);
    fs::create_directories(out_dir);
    neat::TrainSinks sinks{out_dir + "/curve.csv", out_dir};
    std::cerr << "training mode=" << cfg.mode << " iterations=" << cfg.iterations
              << " batch=" << cfg.batch << " seed=" << cfg.seed << "\n";
    const neat::TrainResult res = neat::train(params, data, spec, prompts, cfg, sinks);
    neat::save_dataset(data, out_dir + "/expanded.jsonl");
    json out = {{"checkpoint", out_dir + "/model_final.ckpt"},
                {"curve", out_dir + "/curve.csv"},
                {"expanded", out_dir + "/expanded.jsonl"},
                {"added", res.added},
                {"dropped", res.dropped}};
    if (res.final_exact) out["exact_expected_reward"] = *res.final_exact;
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& spec_path, int max_len) {
    const neat::RewardSpec spec = neat::load_reward_spec(spec_path);
    const neat::ModelParams params = neat::load_checkpoint(model_path);
    const neat::Dataset data = neat::load_dataset(data_path, &spec);
    const neat::EvalReport rep = neat::evaluate(params, spec, data, max_len);
    std::cout << json{{"avg_reward", rep.avg_reward}, {"perplexity", rep.perplexity}, {"n", rep.n}}.dump()
              << "\n";
    return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, const std::string& data_path,
                const std::string& spec_path, double margin, int max_len) {
    const neat::RewardSpec spec = neat::load_reward_spec(spec_path);
    const neat::ModelParams a = neat::load_checkpoint(a_path);
    const neat::ModelParams b = neat::load_checkpoint(b_path);
    const neat::Dataset data = neat::load_dataset(data_path, &spec);
    const neat::CompareReport rep = neat::compare_models(a, b, spec, data, margin, max_len);
    std::cout << json{{"wins", rep.wins},
                      {"losses", rep.losses},
                      {"ties", rep.ties},
                      {"mean_a", rep.mean_a},
                      {"mean_b", rep.mean_b},
                      {"margin", margin}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_sample(const std::string& model_path, const std::string& spec_path,
               const std::string& query_arg, const std::string& prompt_kind,
               const std::string& prompts_path, int n, int max_len, std::uint64_t seed,
               double temperature) {
    const neat::ModelParams params = neat::load_checkpoint(model_path);
    const neat::TokenSeq query = parse_query_arg(query_arg);
    std::optional<neat::RewardSpec> spec;
    if (!spec_path.empty()) spec = neat::load_reward_spec(spec_path);

    neat::TokenSeq ctx;
    if (prompt_kind.empty()) {
        ctx = neat::make_context(query);
    } else {
        const auto kind = neat::prompt_kind_from_name(prompt_kind);
        if (prompts_path.empty()) throw neat::DomainError("--prompt requires --prompts");
        const auto prompts = neat::load_prompts(prompts_path, params.arch().vocab);
        const neat::PromptTemplate* hit = nullptr;
        for (const auto& t : prompts)
            if (t.kind == kind) { hit = &t; break; }
        if (!hit) throw neat::LookupError("prompt set has no template of kind " + prompt_kind);
        ctx = neat::render_prompted_context(*hit, query);
    }

    neat::SeqEval ev;
    neat::Rng rng(seed);
    json rows = json::array();
    for (int i = 0; i < n; ++i) {
        const neat::TokenSeq y =
            neat::sample_from_context(ev, params, ctx, max_len, rng, temperature);
        json row = {{"tokens", y}};
        if (spec) row["reward"] = neat::score_response(*spec, query, y);
        rows.push_back(std::move(row));
    }
    std::cout << json{{"query", query}, {"samples", rows}}.dump() << "\n";
    return 0;
}

int cmd_curve(const std::string& csv_path) {
    const auto rows = neat::parse_curve(csv_path);
    if (rows.empty()) throw neat::ParseError("curve has no rows: " + csv_path);
    std::vector<double> steps, exact;
    for (const auto& r : rows) {
        if (r.exact) {
            steps.push_back(static_cast<double>(r.step));
            exact.push_back(*r.exact);
        }
    }
    json out = {{"rows", rows.size()},
                {"first_step", rows.front().step},
                {"last_step", rows.back().step},
                {"last_total", rows.back().total},
                {"exact_points", exact.size()}};
    if (!exact.empty()) {
        out["first_exact"] = exact.front();
        out["last_exact"] = exact.back();
        if (exact.size() >= 2) out["exact_step_spearman"] = neat::spearman(steps, exact);
    }
    std::cout << out.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tiny aligned language model workbench"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-corpus", "write reward spec, prompts, and datasets");
    std::string gen_out = "corpus";
    int gen_families = 64;
    std::uint64_t gen_seed = 7;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--families", gen_families, "number of query families");
    gen->add_option("--seed", gen_seed, "corpus seed");

    auto* pre = app.add_subcommand("pretrain", "pretrain a model on a sequence corpus");
    std::string pre_corpus, pre_out = "model_pretrained.ckpt";
    int pre_steps = 4000, pre_batch = 8;
    double pre_lr = 1e-3;
    std::uint64_t pre_seed = 1;
    pre->add_option("--corpus", pre_corpus, "pretrain JSONL")->required();
    pre->add_option("--out", pre_out, "output checkpoint");
    pre->add_option("--steps", pre_steps, "optimizer steps");
    pre->add_option("--batch", pre_batch, "batch size");
    pre->add_option("--lr", pre_lr, "learning rate");
    pre->add_option("--seed", pre_seed, "init and batch seed");

    auto* tr = app.add_subcommand("train", "run the aligned training loop");
    std::string tr_init, tr_data, tr_spec, tr_prompts, tr_config, tr_out = "run";
    tr->add_option("--init", tr_init, "initial checkpoint")->required();
    tr->add_option("--data", tr_data, "preference JSONL")->required();
    tr->add_option("--spec", tr_spec, "reward spec JSON")->required();
    tr->add_option("--prompts", tr_prompts, "prompt set JSON")->required();
    tr->add_option("--config", tr_config, "training config JSON");
    tr->add_option("--out-dir", tr_out, "output directory");
    std::optional<std::string> f_mode, f_opt;
    std::optional<double> f_alpha, f_beta, f_tau, f_lambda, f_lr;
    std::optional<int> f_iters, f_batch, f_ckpt_every, f_exact_every;
    std::optional<std::uint64_t> f_seed;
    std::optional<bool> f_dedup;
    tr->add_option("--mode", f_mode, "neat | sft_only | rrhf_like");
    tr->add_option("--alpha", f_alpha, "ranking weight");
    tr->add_option("--beta", f_beta, "penalty weight");
    tr->add_option("--tau", f_tau, "penalty clip");
    tr->add_option("--lambda", f_lambda, "sampling temperature");
    tr->add_option("--lr", f_lr, "learning rate");
    tr->add_option("--iterations", f_iters, "training steps");
    tr->add_option("--batch", f_batch, "records per step");
    tr->add_option("--seed", f_seed, "run seed");
    tr->add_option("--optimizer", f_opt, "adam | sgd");
    tr->add_option("--dedup", f_dedup, "drop duplicate expansions");
    tr->add_option("--checkpoint-every", f_ckpt_every, "checkpoint cadence (0 = final only)");
    tr->add_option("--exact-eval-every", f_exact_every, "exact eval cadence (0 = off)");

    auto* ev = app.add_subcommand("eval", "greedy-decode reward and perplexity");
    std::string ev_model, ev_data, ev_spec;
    int ev_max_len = 8;
    ev->add_option("--model", ev_model, "checkpoint")->required();
    ev->add_option("--data", ev_data, "preference JSONL")->required();
    ev->add_option("--spec", ev_spec, "reward spec JSON")->required();
    ev->add_option("--max-len", ev_max_len, "decode cap");

    auto* cp = app.add_subcommand("compare", "win/loss/tie between two checkpoints");
    std::string cp_a, cp_b, cp_data, cp_spec;
    double cp_margin = 0.5;
    int cp_max_len = 8;
    cp->add_option("--a", cp_a, "checkpoint A")->required();
    cp->add_option("--b", cp_b, "checkpoint B")->required();
    cp->add_option("--data", cp_data, "preference JSONL")->required();
    cp->add_option("--spec", cp_spec, "reward spec JSON")->required();
    cp->add_option("--margin", cp_margin, "win margin");
    cp->add_option("--max-len", cp_max_len, "decode cap");

    auto* sm = app.add_subcommand("sample", "draw responses for a query");
    std::string sm_model, sm_spec, sm_query, sm_prompt, sm_prompts;
    int sm_n = 5, sm_max_len = 8;
    double sm_temp = 1.0;
    std::uint64_t sm_seed = 0;
    sm->add_option("--model", sm_model, "checkpoint")->required();
    sm->add_option("--query", sm_query, "comma-separated token ids")->required();
    sm->add_option("--spec", sm_spec, "reward spec JSON (adds rewards)");
    sm->add_option("--prompt", sm_prompt, "positive | negative steering");
    sm->add_option("--prompts", sm_prompts, "prompt set JSON");
    sm->add_option("--n", sm_n, "number of samples");
    sm->add_option("--max-len", sm_max_len, "decode cap");
    sm->add_option("--seed", sm_seed, "sampling seed");
    sm->add_option("--temperature", sm_temp, "softmax temperature");

    auto* cv = app.add_subcommand("curve", "summarize a training curve CSV");
    std::string cv_csv;
    cv->add_option("--csv", cv_csv, "curve CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_corpus(gen_out, gen_families, gen_seed);
        if (pre->parsed()) return cmd_pretrain(pre_corpus, pre_out, pre_steps, pre_batch, pre_lr, pre_seed);
        if (tr->parsed()) {
            neat::TrainConfig cfg;
            if (!tr_config.empty()) cfg = neat::load_train_config(tr_config);
            if (f_mode) cfg.mode = *f_mode;
            if (f_alpha) cfg.loss.alpha = *f_alpha;
            if (f_beta) cfg.loss.beta = *f_beta;
            if (f_tau) cfg.loss.tau = *f_tau;
            if (f_lambda) cfg.lambda = *f_lambda;
            if (f_lr) cfg.lr = *f_lr;
            if (f_iters) cfg.iterations = *f_iters;
            if (f_batch) cfg.batch = *f_batch;
            if (f_seed) cfg.seed = *f_seed;
            if (f_opt) cfg.optimizer = *f_opt;
            if (f_dedup) cfg.dedup = *f_dedup;
            if (f_ckpt_every) cfg.checkpoint_every = *f_ckpt_every;
            if (f_exact_every) cfg.exact_eval_every = *f_exact_every;
            cfg.validate();
            return cmd_train(tr_init, tr_data, tr_spec, tr_prompts, cfg, tr_out);
        }
        if (ev->parsed()) return cmd_eval(ev_model, ev_data, ev_spec, ev_max_len);
        if (cp->parsed()) return cmd_compare(cp_a, cp_b, cp_data, cp_spec, cp_margin, cp_max_len);
        if (sm->parsed())
            return cmd_sample(sm_model, sm_spec, sm_query, sm_prompt, sm_prompts, sm_n,
                              sm_max_len, sm_seed, sm_temp);
        if (cv->parsed()) return cmd_curve(cv_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
