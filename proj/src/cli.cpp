#include "lexmine/cli.hpp"

#include "lexmine/error.hpp"
#include "lexmine/pipeline.hpp"
#include "lexmine/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>

namespace lexmine {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Options {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> workers;
    bool overwrite = false;
    bool resume = false;
    std::string checkpoint;
    std::size_t iteration = 1;
    std::vector<std::string> samples;
    std::optional<std::size_t> steps;
    // eval
    std::string run;
    std::string qrels;
    std::size_t k = 10;
    std::string queries;
    std::string baseline;
    std::string recall_mode = "hit";
};

KeyValueConfig load_config(const Options& o) {
    auto cfg = o.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(o.config);
    for (const auto& a : o.overrides) cfg.set(a);
    if (o.seed) cfg.set("seed", std::to_string(*o.seed));
    if (o.workers) cfg.set("workers", std::to_string(*o.workers));
    return cfg;
}

std::uint64_t require_seed(const KeyValueConfig& cfg) {
    if (!cfg.has("seed")) throw ConfigError("seed", "required for this command (pass --seed)");
    const auto v = cfg.get_int("seed", 0);
    if (v < 0) throw ConfigError("seed", "must be non-negative");
    return static_cast<std::uint64_t>(v);
}

void prepare_out(const std::string& out, bool overwrite, bool resume = false) {
    if (out.empty()) throw ConfigError("out", "output directory required (pass --out)");
    if (fs::exists(out) && !fs::is_directory(out)) throw ConfigError("out", "'" + out + "' is not a directory");
    if (fs::exists(out) && !fs::is_empty(out) && !resume) {
        if (!overwrite) throw ConfigError("out", "'" + out + "' is not empty (pass --overwrite)");
        fs::remove_all(out);
    }
    fs::create_directories(out);
}

void write_manifest(const std::string& out, const std::string& command, const KeyValueConfig& cfg,
                    const std::string& config_hash, json extra = json::object()) {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["config_hash"] = config_hash;
    m["seed"] = cfg.has("seed") ? json(cfg.get_int("seed", 0)) : json(nullptr);
    json entries = json::object();
    for (const auto& [k, v] : cfg.entries())
        if (k != "workers") entries[k] = v;
    m["config"] = entries;
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_text_file((fs::path(out) / "manifest.json").string(), m.dump(2) + "\n");
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// ---------------------------------------------------------------------------

int cmd_synth(const Options& o, std::ostream& out) {
    auto cfg = load_config(o);
    const auto seed = require_seed(cfg);
    const auto spec = SynthSpec::from_config(cfg);
    prepare_out(o.out, o.overwrite);
    const auto bench = synth_benchmark(spec, seed);
    bench.write(o.out);
    auto canonical = spec.to_config();
    canonical.set("seed", std::to_string(seed));
    write_manifest(o.out, "synth", cfg, canonical.hash_hex());
    out << "wrote " << bench.corpus.size() << " passages to " << o.out << "\n";
    return exit_ok;
}

struct Loaded {
    KeyValueConfig raw;
    PipelineConfig cfg;
};

json data_paths(const PipelineConfig& cfg) {
    return {{"passages", cfg.data.passages},         {"train_queries", cfg.data.train_queries},
            {"train_qrels", cfg.data.train_qrels},   {"dev_queries", cfg.data.dev_queries},
            {"dev_qrels", cfg.data.dev_qrels},       {"unlabeled_queries", cfg.data.unlabeled_queries}};
}

Loaded load_pipeline_config(const Options& o, bool needs_seed) {
    Loaded l;
    l.raw = load_config(o);
    if (needs_seed) require_seed(l.raw);
    l.cfg = PipelineConfig::from_config(l.raw);
    return l;
}

PipelineState load_compatible_checkpoint(const Options& o, const Pipeline& p) {
    if (o.checkpoint.empty()) throw ConfigError("checkpoint", "required for this command (pass --checkpoint)");
    auto state = load_checkpoint(o.checkpoint);
    if (state.params.tokens != p.vocabulary())
        throw DataError(o.checkpoint, 0, "checkpoint vocabulary does not match the dataset");
    if (state.params.dim() != p.config().dim)
        throw ConfigError("dim", "checkpoint has dim " + std::to_string(state.params.dim()));
    if (p.config().variant == MiningVariant::double_dense && !state.second_encoder)
        throw ConfigError("mining_variant", "double_dense needs a checkpoint warmed up with that variant");
    state.config_hash = p.config().hash();
    return state;
}

int cmd_index(const Options& o, std::ostream& out) {
    auto [raw, cfg] = load_pipeline_config(o, false);
    prepare_out(o.out, o.overwrite);
    Pipeline p(cfg, Dataset::load(cfg.data));
    json stats = json::object();
    for (const auto& lang : p.data().corpus.languages()) {
        const auto& index = p.sparse_index(lang);
        stats[lang] = {{"passages", index.size()}, {"avgdl", index.avgdl()}, {"terms", index.vocabulary_size()}};
    }
    RunFile run;
    for (const auto& q : p.data().dev_queries)
        run[q.id] = search_sparse(p.sparse_index(q.lang), q, cfg.eval_k);
    const auto& dev = p.data();
    const auto mrr = mrr_at_k(run, dev.dev_qrels, cfg.eval_k, &dev.dev_queries);
    const auto recall = recall_at_k(run, dev.dev_qrels, cfg.eval_k, &dev.dev_queries);
    write_text_file(path_in(o.out, "index.json"), stats.dump(2) + "\n");
    write_text_file(path_in(o.out, "bm25_dev.trec"), format_run(run, "bm25"));
    write_manifest(o.out, "index", raw, cfg.hash(), {{"data", data_paths(cfg)}});
    out << format_metrics_table(mrr, recall);
    return exit_ok;
}

void write_state(const std::string& dir, const PipelineState& state, const IterationReport& report,
                 const RunFile* run, const std::string& tag) {
    save_checkpoint(path_in(dir, "checkpoint"), state);
    write_text_file(path_in(dir, "report.json"), report.to_json() + "\n");
    if (run) write_text_file(path_in(dir, "run.trec"), format_run(*run, tag));
}

int cmd_warmup(const Options& o, std::ostream& out) {
    auto [raw, cfg] = load_pipeline_config(o, true);
    prepare_out(o.out, o.overwrite);
    Pipeline p(cfg, Dataset::load(cfg.data));
    auto state = p.initial_state(cfg.seed);
    p.warmup(state);
    p.refresh(state);
    IterationReport report;
    const auto run = p.evaluate(state, report);
    write_state(o.out, state, report, &run, "warmup");
    write_manifest(o.out, "warmup", raw, cfg.hash(), {{"data", data_paths(cfg)}});
    out << "warm-up target MRR@" << cfg.eval_k << " " << report.target_mrr << "\n";
    return exit_ok;
}

int cmd_mine(const Options& o, std::ostream& out) {
    auto [raw, cfg] = load_pipeline_config(o, true);
    Pipeline p(cfg, Dataset::load(cfg.data));
    auto state = load_compatible_checkpoint(o, p);
    prepare_out(o.out, o.overwrite);
    p.refresh(state);
    IterationReport report;
    report.iteration = o.iteration;
    const auto samples = p.mine(state, o.iteration, &report);
    write_text_file(path_in(o.out, "mined.jsonl"), format_samples_jsonl(samples, "mined"));
    write_text_file(path_in(o.out, "report.json"), report.to_json() + "\n");
    write_manifest(o.out, "mine", raw, cfg.hash(), {{"data", data_paths(cfg)}, {"checkpoint", o.checkpoint}, {"iteration", o.iteration}});
    out << samples.size() << " mined samples from " << report.queries_with_positives << "/" << report.queries_mined
        << " queries\n";
    return exit_ok;
}

int cmd_generate(const Options& o, std::ostream& out) {
    auto [raw, cfg] = load_pipeline_config(o, true);
    Pipeline p(cfg, Dataset::load(cfg.data));
    auto state = load_compatible_checkpoint(o, p);
    prepare_out(o.out, o.overwrite);
    p.refresh(state);
    IterationReport report;
    report.iteration = o.iteration;
    std::vector<GeneratedPair> pairs;
    const auto samples = p.generate(state, o.iteration, &pairs, &report);
    write_text_file(path_in(o.out, "generated.jsonl"), format_samples_jsonl(samples, "generated"));
    write_text_file(path_in(o.out, "generated_log.jsonl"), format_generated_log(pairs));
    write_state(o.out, state, report, nullptr, "");
    write_manifest(o.out, "generate", raw, cfg.hash(), {{"data", data_paths(cfg)}, {"checkpoint", o.checkpoint}, {"iteration", o.iteration}});
    out << report.generated_accepted << " accepted, " << report.generated_rejected << " rejected\n";
    return exit_ok;
}

int cmd_train(const Options& o, std::ostream& out) {
    auto [raw, cfg] = load_pipeline_config(o, true);
    if (o.samples.empty()) throw ConfigError("samples", "at least one samples file required (pass --samples)");
    Pipeline p(cfg, Dataset::load(cfg.data));
    auto state = load_compatible_checkpoint(o, p);
    std::vector<TrainingSample> samples;
    for (const auto& path : o.samples)
        for (auto& r : parse_samples_jsonl(read_text_file(path), path)) {
            r.sample.validate();
            samples.push_back(std::move(r.sample));
        }
    prepare_out(o.out, o.overwrite);
    IterationReport report;
    report.iteration = o.iteration;
    report.trained_steps = o.steps.value_or(cfg.minibatches_per_iter);
    report.mean_loss = p.finetune(state, samples, report.trained_steps, derive_seed(cfg.seed, "train", o.iteration));
    p.refresh(state);
    const auto run = p.evaluate(state, report);
    state.completed_iterations = o.iteration;
    write_state(o.out, state, report, &run, "train");
    write_manifest(o.out, "train", raw, cfg.hash(),
                   {{"data", data_paths(cfg)}, {"checkpoint", o.checkpoint}, {"samples", o.samples}, {"iteration", o.iteration}});
    out << "trained " << report.trained_steps << " steps, mean loss " << report.mean_loss << ", target MRR@"
        << cfg.eval_k << " " << report.target_mrr << "\n";
    return exit_ok;
}

int cmd_eval(const Options& o, std::ostream& out) {
    if (o.run.empty()) throw ConfigError("run", "run file required (pass --run)");
    if (o.qrels.empty()) throw ConfigError("qrels", "qrels file required (pass --qrels)");
    if (o.k < 1) throw ConfigError("k", "must be >= 1");
    RecallMode mode = RecallMode::hit;
    if (o.recall_mode == "coverage") mode = RecallMode::coverage;
    else if (o.recall_mode != "hit") throw ConfigError("recall-mode", "expected 'hit' or 'coverage'");

    const auto run = load_run(o.run);
    const auto qrels = load_qrels(o.qrels);
    std::optional<QuerySet> queries;
    if (!o.queries.empty()) queries = load_queries(o.queries);
    const QuerySet* qs = queries ? &*queries : nullptr;
    const auto mrr = mrr_at_k(run, qrels, o.k, qs);
    const auto recall = recall_at_k(run, qrels, o.k, qs, mode);

    json j;
    j["k"] = o.k;
    j[mrr.name()] = mrr.mean;
    j[recall.name()] = recall.mean;
    j["judged_queries"] = mrr.per_query.size();
    j["unjudged_run_queries"] = mrr.unjudged_run_queries;
    j["recall_mode"] = o.recall_mode;
    if (qs) j["per_language"] = {{mrr.name(), mrr.per_language}, {recall.name(), recall.per_language}};
    if (!o.baseline.empty()) {
        const auto base = mrr_at_k(load_run(o.baseline), qrels, o.k, qs);
        const auto t = paired_t_test(mrr.per_query, base.per_query);
        j["t_test"] = {{"metric", mrr.name()},
                       {"baseline", base.mean},
                       {"t", t.t},
                       {"p_two_sided", t.p_two_sided},
                       {"n", t.n},
                       {"degenerate_variance", t.degenerate_variance}};
    }
    const auto text = j.dump(2) + "\n";
    out << text;
    if (!o.out.empty()) {
        prepare_out(o.out, o.overwrite);
        write_text_file(path_in(o.out, "eval.json"), text);
        write_text_file(path_in(o.out, "table.txt"), format_metrics_table(mrr, recall));
        KeyValueConfig args;
        args.set("run", o.run);
        args.set("qrels", o.qrels);
        args.set("k", std::to_string(o.k));
        args.set("recall_mode", o.recall_mode);
        if (qs) args.set("queries", o.queries);
        if (!o.baseline.empty()) args.set("baseline", o.baseline);
        write_manifest(o.out, "eval", args, args.hash_hex());
    }
    return exit_ok;
}

int cmd_pipeline(const Options& o, std::ostream& out, std::ostream& err) {
    auto [raw, cfg] = load_pipeline_config(o, true);
    prepare_out(o.out, o.overwrite, o.resume);
    write_manifest(o.out, "pipeline", raw, cfg.hash(), {{"data", data_paths(cfg)}});
    auto observer = [&](const IterationReport& r, const IterationArtifacts&) {
        err << "iteration " << r.iteration << ": mined " << r.mined_samples << ", generated " << r.generated_accepted
            << "/" << (r.generated_accepted + r.generated_rejected) << ", loss " << r.mean_loss << ", target MRR@"
            << r.eval_k << " " << r.target_mrr << " (" << r.wall_clock_seconds << " s)\n";
    };
    const auto result = run_pipeline(cfg, Dataset::load(cfg.data), o.out, o.resume, observer);
    for (const auto& r : result.reports)
        out << (r.iteration == 0 ? std::string("warmup") : "iter_" + std::to_string(r.iteration)) << "\tMRR@"
            << r.eval_k << " " << r.target_mrr << "\tRecall@" << r.eval_k << " " << r.target_recall << "\n";
    return exit_ok;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Lexicon-enhanced self-supervised training for multilingual dense retrieval", "lexmine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Options o;

    auto common = [&](CLI::App* sub, bool seeded) {
        sub->add_option("--config", o.config, "key=value config file");
        sub->add_option("--set", o.overrides, "override, key=value (repeatable)");
        sub->add_option("--out", o.out, "output directory")->required();
        sub->add_flag("--overwrite", o.overwrite, "replace a non-empty output directory");
        if (seeded) sub->add_option("--seed", o.seed, "random seed");
    };
    auto workers = [&](CLI::App* sub) { sub->add_option("--workers", o.workers, "parallel workers")->check(CLI::Range(1, 256)); };
    auto checkpoint = [&](CLI::App* sub) {
        sub->add_option("--checkpoint", o.checkpoint, "checkpoint to start from")->required();
        sub->add_option("--iteration", o.iteration, "iteration number (selects the random stream)");
    };

    auto* synth = app.add_subcommand("synth", "write a synthetic multilingual benchmark");
    common(synth, true);
    auto* index = app.add_subcommand("index", "build BM25 indexes and score the dev queries");
    common(index, false);
    auto* warm = app.add_subcommand("warmup", "train on labeled source-language data");
    common(warm, true);
    workers(warm);
    auto* mine = app.add_subcommand("mine", "mine training samples from unlabeled queries");
    common(mine, true);
    workers(mine);
    checkpoint(mine);
    auto* gen = app.add_subcommand("generate", "retrain the generator and produce filtered samples");
    common(gen, true);
    workers(gen);
    checkpoint(gen);
    auto* train = app.add_subcommand("train", "fine-tune the retriever on sample files");
    common(train, true);
    workers(train);
    checkpoint(train);
    train->add_option("--samples", o.samples, "samples JSONL (repeatable)")->required();
    train->add_option("--steps", o.steps, "minibatches (default: minibatches_per_iter)");
    auto* eval = app.add_subcommand("eval", "score a TREC run against qrels");
    eval->add_option("--run", o.run, "TREC run file")->required();
    eval->add_option("--qrels", o.qrels, "qrels file")->required();
    eval->add_option("--k", o.k, "cutoff");
    eval->add_option("--queries", o.queries, "queries JSONL, for per-language means");
    eval->add_option("--baseline", o.baseline, "second run for a paired t-test on per-query RR");
    eval->add_option("--recall-mode", o.recall_mode, "hit or coverage");
    eval->add_option("--out", o.out, "also write eval.json here");
    eval->add_flag("--overwrite", o.overwrite, "replace a non-empty output directory");
    auto* pipe = app.add_subcommand("pipeline", "warm-up followed by the iterative loop");
    common(pipe, true);
    workers(pipe);
    pipe->add_flag("--resume", o.resume, "continue from the newest checkpoint in --out");

    std::vector<std::string> argv_store{"lexmine"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    }

    try {
        if (*synth) return cmd_synth(o, out);
        if (*index) return cmd_index(o, out);
        if (*warm) return cmd_warmup(o, out);
        if (*mine) return cmd_mine(o, out);
        if (*gen) return cmd_generate(o, out);
        if (*train) return cmd_train(o, out);
        if (*eval) return cmd_eval(o, out);
        if (*pipe) return cmd_pipeline(o, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return exit_data;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_internal;
    }
    return exit_internal;
}

}  // namespace lexmine
