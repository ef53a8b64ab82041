#include "lexmine/pipeline.hpp"

#include "lexmine/error.hpp"
#include "lexmine/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

namespace lexmine {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

std::string to_string(MiningVariant v) {
    switch (v) {
        case MiningVariant::lexicon: return "lexicon";
        case MiningVariant::double_dense: return "double_dense";
        case MiningVariant::fuse_sum: return "fuse_sum";
        case MiningVariant::fuse_product: return "fuse_product";
        case MiningVariant::no_hard_negatives: return "no_hard_negatives";
        case MiningVariant::sparse_hard_negatives: return "sparse_hard_negatives";
    }
    return "lexicon";
}

MiningVariant parse_mining_variant(const std::string& name) {
    for (auto v : {MiningVariant::lexicon, MiningVariant::double_dense, MiningVariant::fuse_sum,
                   MiningVariant::fuse_product, MiningVariant::no_hard_negatives,
                   MiningVariant::sparse_hard_negatives})
        if (to_string(v) == name) return v;
    throw ConfigError("mining_variant", "unknown variant '" + name + "'");
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::size_t get_count(const KeyValueConfig& cfg, const std::string& key, std::size_t fallback) {
    auto v = cfg.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(key, "must be non-negative");
    return static_cast<std::size_t>(v);
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
    return out;
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& cfg) {
    PipelineConfig c;
    const char* env_dir = std::getenv("LEXMINE_DATA_DIR");
    const std::string data_dir = cfg.get_string("data_dir", env_dir ? env_dir : "");
    auto path = [&](const char* key, const char* fallback) {
        auto value = cfg.get_string(key, fallback);
        if (value.empty() || data_dir.empty() || fs::path(value).is_absolute()) return value;
        return (fs::path(data_dir) / value).string();
    };
    c.data.passages = path("passages", "passages.jsonl");
    c.data.train_queries = path("train_queries", "train_queries.jsonl");
    c.data.train_qrels = path("train_qrels", "train_qrels.tsv");
    c.data.dev_queries = path("dev_queries", "dev_queries.jsonl");
    c.data.dev_qrels = path("dev_qrels", "dev_qrels.tsv");
    c.data.unlabeled_queries = path("unlabeled_queries", "unlabeled_queries.jsonl");

    c.source_lang = cfg.get_string("source_lang", c.source_lang);
    c.target_langs = cfg.get_list("target_langs", {});
    c.tokenizer.lowercase = cfg.get_bool("lowercase", c.tokenizer.lowercase);
    c.tokenizer.cjk_char_split = cfg.get_bool("cjk_char_split", c.tokenizer.cjk_char_split);
    c.tokenizer.min_token_len = static_cast<int>(cfg.get_int("min_token_len", c.tokenizer.min_token_len));
    c.bm25.k1 = cfg.get_double("bm25_k1", c.bm25.k1);
    c.bm25.b = cfg.get_double("bm25_b", c.bm25.b);

    c.dim = static_cast<long>(cfg.get_int("dim", c.dim));
    c.shared_encoder = cfg.get_bool("shared_encoder", c.shared_encoder);
    c.adam.learning_rate = cfg.get_double("learning_rate", c.adam.learning_rate);
    c.adam.beta1 = cfg.get_double("beta1", c.adam.beta1);
    c.adam.beta2 = cfg.get_double("beta2", c.adam.beta2);
    c.adam.epsilon = cfg.get_double("epsilon", c.adam.epsilon);
    c.adam.weight_decay = cfg.get_double("weight_decay", c.adam.weight_decay);

    c.iterations = get_count(cfg, "iterations", c.iterations);
    c.minibatches_per_iter = get_count(cfg, "minibatches_per_iter", c.minibatches_per_iter);
    c.batch_size = get_count(cfg, "batch_size", c.batch_size);
    if (cfg.get_string("max_in_batch_negatives", "all") != "all")
        c.max_in_batch_negatives = get_count(cfg, "max_in_batch_negatives", 0);
    c.warmup_epochs = get_count(cfg, "warmup_epochs", c.warmup_epochs);

    c.mining.S = get_count(cfg, "mining_S", c.mining.S);
    c.mining.L = get_count(cfg, "mining_L", c.mining.L);
    c.mining.n_random_negatives = get_count(cfg, "n_random_negatives", c.mining.n_random_negatives);
    c.mining.max_hard_negatives = get_count(cfg, "max_hard_negatives", c.mining.max_hard_negatives);
    c.gen_mining_S = get_count(cfg, "gen_mining_S", c.gen_mining_S);
    c.variant = parse_mining_variant(cfg.get_string("mining_variant", to_string(c.variant)));

    c.use_mined_data = cfg.get_bool("use_mined_data", c.use_mined_data);
    c.use_generation = cfg.get_bool("use_generation", c.use_generation);
    c.n_generate = get_count(cfg, "n_generate", c.n_generate);
    c.skip_generation_first_iter = cfg.get_bool("skip_generation_first_iter", c.skip_generation_first_iter);

    c.eval_k = get_count(cfg, "eval_k", c.eval_k);
    c.stop_on_plateau = cfg.get_bool("stop_on_plateau", c.stop_on_plateau);
    c.plateau_epsilon = cfg.get_double("plateau_epsilon", c.plateau_epsilon);

    c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<std::int64_t>(c.seed)));
    c.workers = get_count(cfg, "workers", c.workers);
    cfg.reject_unknown();
    c.validate();
    return c;
}

KeyValueConfig PipelineConfig::to_config() const {
    KeyValueConfig k;
    k.set("passages", data.passages);
    k.set("train_queries", data.train_queries);
    k.set("train_qrels", data.train_qrels);
    k.set("dev_queries", data.dev_queries);
    k.set("dev_qrels", data.dev_qrels);
    k.set("unlabeled_queries", data.unlabeled_queries);
    k.set("source_lang", source_lang);
    k.set("target_langs", join(target_langs));
    k.set("lowercase", tokenizer.lowercase ? "true" : "false");
    k.set("cjk_char_split", tokenizer.cjk_char_split ? "true" : "false");
    k.set("min_token_len", std::to_string(tokenizer.min_token_len));
    k.set("bm25_k1", fmt_double(bm25.k1));
    k.set("bm25_b", fmt_double(bm25.b));
    k.set("dim", std::to_string(dim));
    k.set("shared_encoder", shared_encoder ? "true" : "false");
    k.set("learning_rate", fmt_double(adam.learning_rate));
    k.set("beta1", fmt_double(adam.beta1));
    k.set("beta2", fmt_double(adam.beta2));
    k.set("epsilon", fmt_double(adam.epsilon));
    k.set("weight_decay", fmt_double(adam.weight_decay));
    k.set("iterations", std::to_string(iterations));
    k.set("minibatches_per_iter", std::to_string(minibatches_per_iter));
    k.set("batch_size", std::to_string(batch_size));
    k.set("max_in_batch_negatives", max_in_batch_negatives == std::numeric_limits<std::size_t>::max()
                                        ? "all"
                                        : std::to_string(max_in_batch_negatives));
    k.set("warmup_epochs", std::to_string(warmup_epochs));
    k.set("mining_S", std::to_string(mining.S));
    k.set("mining_L", std::to_string(mining.L));
    k.set("n_random_negatives", std::to_string(mining.n_random_negatives));
    k.set("max_hard_negatives", std::to_string(mining.max_hard_negatives));
    k.set("gen_mining_S", std::to_string(gen_mining_S));
    k.set("mining_variant", to_string(variant));
    k.set("use_mined_data", use_mined_data ? "true" : "false");
    k.set("use_generation", use_generation ? "true" : "false");
    k.set("n_generate", std::to_string(n_generate));
    k.set("skip_generation_first_iter", skip_generation_first_iter ? "true" : "false");
    k.set("eval_k", std::to_string(eval_k));
    k.set("stop_on_plateau", stop_on_plateau ? "true" : "false");
    k.set("plateau_epsilon", fmt_double(plateau_epsilon));
    k.set("seed", std::to_string(seed));
    return k;
}

void PipelineConfig::validate() const {
    if (iterations < 1) throw ConfigError("iterations", "must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (dim < 1) throw ConfigError("dim", "must be >= 1");
    if (eval_k < 1) throw ConfigError("eval_k", "must be >= 1");
    if (gen_mining_S != 1) throw ConfigError("gen_mining_S", "is fixed at 1");
    if (!(adam.learning_rate >= 0.0)) throw ConfigError("learning_rate", "must be non-negative");
    if (source_lang.empty()) throw ConfigError("source_lang", "must be set");
    if (tokenizer.min_token_len < 1) throw ConfigError("min_token_len", "must be >= 1");
    mining.validate();
    bm25.validate();
}

// ---------------------------------------------------------------------------
// Data

Dataset Dataset::load(const DataPaths& paths) {
    Dataset d;
    d.corpus = load_passages(paths.passages);
    d.train_queries = load_queries(paths.train_queries);
    d.train_qrels = load_qrels(paths.train_qrels);
    d.unlabeled_queries = load_queries(paths.unlabeled_queries);
    d.dev_queries = load_queries(paths.dev_queries);
    d.dev_qrels = load_qrels(paths.dev_qrels);
    d.train_qrels.validate(d.train_queries, d.corpus);
    d.dev_qrels.validate(d.dev_queries, d.corpus);
    return d;
}

// ---------------------------------------------------------------------------
// Reports

std::string IterationReport::to_json() const {
    json j;
    j["iteration"] = iteration;
    j["queries_mined"] = queries_mined;
    j["queries_with_positives"] = queries_with_positives;
    j["mined_samples"] = mined_samples;
    j["generator_pairs"] = generator_pairs;
    j["generated_accepted"] = generated_accepted;
    j["generated_rejected"] = generated_rejected;
    j["trained_steps"] = trained_steps;
    j["mean_loss"] = mean_loss;
    j["eval_k"] = eval_k;
    j["mrr"] = mrr;
    j["recall"] = recall;
    j["target_mrr"] = target_mrr;
    j["target_recall"] = target_recall;
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j.dump(2);
}

IterationReport IterationReport::from_json(const std::string& text) {
    IterationReport r;
    try {
        auto j = nlohmann::json::parse(text);
        r.iteration = j.at("iteration");
        r.queries_mined = j.at("queries_mined");
        r.queries_with_positives = j.at("queries_with_positives");
        r.mined_samples = j.at("mined_samples");
        r.generator_pairs = j.at("generator_pairs");
        r.generated_accepted = j.at("generated_accepted");
        r.generated_rejected = j.at("generated_rejected");
        r.trained_steps = j.at("trained_steps");
        r.mean_loss = j.at("mean_loss");
        r.eval_k = j.at("eval_k");
        r.mrr = j.at("mrr").get<std::map<std::string, double>>();
        r.recall = j.at("recall").get<std::map<std::string, double>>();
        r.target_mrr = j.at("target_mrr");
        r.target_recall = j.at("target_recall");
        r.wall_clock_seconds = j.at("wall_clock_seconds");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed iteration report: ") + e.what());
    }
    return r;
}

bool IterationReport::same_results(const IterationReport& o) const {
    return iteration == o.iteration && queries_mined == o.queries_mined &&
           queries_with_positives == o.queries_with_positives && mined_samples == o.mined_samples &&
           generator_pairs == o.generator_pairs && generated_accepted == o.generated_accepted &&
           generated_rejected == o.generated_rejected && trained_steps == o.trained_steps &&
           mean_loss == o.mean_loss && eval_k == o.eval_k && mrr == o.mrr && recall == o.recall &&
           target_mrr == o.target_mrr && target_recall == o.target_recall;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, format version, JSON header length, JSON header, then
// little-endian float64 matrices in row-major order.

namespace {

constexpr char kMagic[8] = {'L', 'X', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

json encoder_header(const EncoderParams<double>& p) {
    json j;
    j["rows"] = p.rows();
    j["dim"] = p.dim();
    j["shared"] = p.shared;
    j["version"] = p.version;
    j["tokens"] = p.tokens;
    return j;
}

void write_matrix(std::ofstream& out, const EmbeddingTable<double>& m) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_matrix(std::ifstream& in, EmbeddingTable<double>& m, RowIndex rows, RowIndex cols, const std::string& path) {
    m.resize(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint '" + path + "'");
}

EncoderParams<double> read_encoder(std::ifstream& in, const nlohmann::json& h, const std::string& path) {
    EncoderParams<double> p;
    p.tokens = h.at("tokens").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < p.tokens.size(); ++i) p.vocab.emplace(p.tokens[i], static_cast<RowIndex>(i));
    p.shared = h.at("shared");
    p.version = h.at("version");
    const RowIndex rows = h.at("rows"), dim = h.at("dim");
    read_matrix(in, p.query_table, rows, dim, path);
    if (!p.shared) read_matrix(in, p.passage_table, rows, dim, path);
    return p;
}

json generator_json(const GeneratorModel& g) {
    json j;
    j["version"] = g.version;
    json counts = json::array();
    for (const auto& [key, c] : g.counts) counts.push_back({key.first, key.second, c.in_passage, c.in_query});
    j["counts"] = counts;
    json lengths = json::array();
    for (const auto& [len, n] : g.query_len_dist) lengths.push_back({len, n});
    j["query_len_dist"] = lengths;
    j["seen_pairs"] = g.seen_pairs;
    return j;
}

GeneratorModel generator_from_json(const nlohmann::json& j) {
    GeneratorModel g;
    g.version = j.at("version");
    for (const auto& row : j.at("counts")) {
        GeneratorModel::TermKey key{row.at(0).get<std::string>(), row.at(1).get<std::string>()};
        GeneratorModel::TermCounts c{row.at(2).get<std::uint64_t>(), row.at(3).get<std::uint64_t>()};
        g.counts[key] = c;
        g.term_salience[key] =
            (static_cast<double>(c.in_query) + 1.0) / (static_cast<double>(c.in_passage) + 2.0);
    }
    for (const auto& row : j.at("query_len_dist"))
        g.query_len_dist[row.at(0).get<std::size_t>()] = row.at(1).get<std::uint64_t>();
    g.seen_pairs = j.at("seen_pairs").get<std::set<std::string>>();
    return g;
}

}  // namespace

void save_checkpoint(const std::string& path, const PipelineState& state) {
    static_assert(sizeof(double) == 8);
    json h;
    h["config_hash"] = state.config_hash;
    h["completed_iterations"] = state.completed_iterations;
    h["scalar_bytes"] = sizeof(double);
    h["encoder"] = encoder_header(state.params);
    const auto& o = state.optimizer;
    h["optimizer"] = {{"step", o.step},
                      {"learning_rate", o.config.learning_rate},
                      {"beta1", o.config.beta1},
                      {"beta2", o.config.beta2},
                      {"epsilon", o.config.epsilon},
                      {"weight_decay", o.config.weight_decay}};
    h["generator"] = generator_json(state.generator);
    h["second_encoder"] = state.second_encoder ? encoder_header(*state.second_encoder) : json(nullptr);
    const std::string header = h.dump();

    auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&kFormatVersion), sizeof kFormatVersion);
    const std::uint64_t header_len = header.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    write_matrix(out, state.params.query_table);
    if (!state.params.shared) write_matrix(out, state.params.passage_table);
    write_matrix(out, o.m_query);
    write_matrix(out, o.v_query);
    if (!state.params.shared) {
        write_matrix(out, o.m_passage);
        write_matrix(out, o.v_passage);
    }
    if (state.second_encoder) {
        write_matrix(out, state.second_encoder->query_table);
        if (!state.second_encoder->shared) write_matrix(out, state.second_encoder->passage_table);
    }
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

PipelineState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw DataError("'" + path + "' is not a checkpoint");
    std::uint32_t format = 0;
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&format), sizeof format);
    in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
    if (!in || format != kFormatVersion)
        throw DataError("unsupported checkpoint format " + std::to_string(format) + " in '" + path + "'");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw DataError("truncated checkpoint '" + path + "'");

    PipelineState s;
    try {
        auto h = nlohmann::json::parse(header);
        if (h.at("scalar_bytes").get<int>() != 8) throw DataError("checkpoint scalar is not float64");
        s.config_hash = h.at("config_hash");
        s.completed_iterations = h.at("completed_iterations");
        s.params = read_encoder(in, h.at("encoder"), path);
        const auto& o = h.at("optimizer");
        s.optimizer.step = o.at("step");
        s.optimizer.config.learning_rate = o.at("learning_rate");
        s.optimizer.config.beta1 = o.at("beta1");
        s.optimizer.config.beta2 = o.at("beta2");
        s.optimizer.config.epsilon = o.at("epsilon");
        s.optimizer.config.weight_decay = o.at("weight_decay");
        const RowIndex rows = s.params.rows(), dim = s.params.dim();
        read_matrix(in, s.optimizer.m_query, rows, dim, path);
        read_matrix(in, s.optimizer.v_query, rows, dim, path);
        if (!s.params.shared) {
            read_matrix(in, s.optimizer.m_passage, rows, dim, path);
            read_matrix(in, s.optimizer.v_passage, rows, dim, path);
        }
        s.generator = generator_from_json(h.at("generator"));
        if (!h.at("second_encoder").is_null()) s.second_encoder = read_encoder(in, h.at("second_encoder"), path);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint header in '" + path + "': " + e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::Language {
    std::string lang;
    Corpus corpus;
    InvertedIndex sparse;
    DenseIndex<double> dense;
    DenseIndex<double> second_dense;
};

Pipeline::Pipeline(PipelineConfig cfg, Dataset data) : cfg_(std::move(cfg)), data_(std::move(data)) {
    cfg_.validate();
    if (data_.corpus.empty()) throw DataError("corpus is empty");
    const auto langs = data_.corpus.languages();
    if (std::find(langs.begin(), langs.end(), cfg_.source_lang) == langs.end())
        throw ConfigError("source_lang", "no passages in language '" + cfg_.source_lang + "'");
    targets_ = cfg_.target_langs;
    if (targets_.empty())
        for (const auto& l : langs)
            if (l != cfg_.source_lang) targets_.push_back(l);
    for (const auto& t : targets_)
        if (std::find(langs.begin(), langs.end(), t) == langs.end())
            throw ConfigError("target_langs", "no passages in language '" + t + "'");

    vocabulary_ = build_vocabulary(data_.corpus, {&data_.train_queries, &data_.unlabeled_queries, &data_.dev_queries},
                                   cfg_.tokenizer);
    EncoderParams<double> shape;
    shape.tokens = vocabulary_;
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) shape.vocab.emplace(vocabulary_[i], static_cast<RowIndex>(i));
    encoded_ = EncodedCorpus::build(shape, data_.corpus, cfg_.tokenizer);

    for (const auto& l : langs) {
        auto language = std::make_unique<Language>();
        language->lang = l;
        language->corpus = data_.corpus.filter_lang(l);
        language->sparse = InvertedIndex::build(language->corpus, cfg_.tokenizer, cfg_.bm25);
        languages_.emplace(l, std::move(language));
    }
}

Pipeline::~Pipeline() = default;
Pipeline::Pipeline(Pipeline&&) noexcept = default;
Pipeline& Pipeline::operator=(Pipeline&&) noexcept = default;

Pipeline::Language& Pipeline::language(const std::string& lang) {
    auto it = languages_.find(lang);
    if (it == languages_.end()) throw DataError("no passages in language '" + lang + "'");
    return *it->second;
}

const Pipeline::Language& Pipeline::language(const std::string& lang) const {
    auto it = languages_.find(lang);
    if (it == languages_.end()) throw DataError("no passages in language '" + lang + "'");
    return *it->second;
}

const InvertedIndex& Pipeline::sparse_index(const std::string& lang) const { return language(lang).sparse; }
const DenseIndex<double>& Pipeline::dense_index(const std::string& lang) const { return language(lang).dense; }
const Corpus& Pipeline::language_corpus(const std::string& lang) const { return language(lang).corpus; }

PipelineState Pipeline::initial_state(std::uint64_t seed) const {
    PipelineState s;
    s.params = EncoderParams<double>::init(vocabulary_, cfg_.dim, cfg_.shared_encoder, derive_seed(seed, "init"));
    s.optimizer = OptimizerState<double>::init(s.params, cfg_.adam);
    s.config_hash = cfg_.hash();
    return s;
}

std::vector<TrainingSample> Pipeline::source_samples(int parity) const {
    const auto& src = language(cfg_.source_lang);
    std::vector<TrainingSample> out;
    std::size_t index = 0;
    for (const auto& q : data_.train_queries) {
        const std::size_t i = index++;
        if (q.lang != cfg_.source_lang) continue;
        if (parity >= 0 && static_cast<int>(i % 2) != parity) continue;
        std::vector<std::string> relevant;
        for (const auto& [pid, grade] : data_.train_qrels.for_query(q.id))
            if (grade > 0 && src.corpus.contains(pid)) relevant.push_back(pid);
        if (relevant.empty()) continue;
        const std::set<std::string> relevant_set(relevant.begin(), relevant.end());

        const auto depth = std::max(cfg_.mining.L, cfg_.mining.max_hard_negatives + relevant.size());
        const auto ranked = search_sparse(src.sparse, q, depth);
        TrainingSample s;
        s.query = q;
        for (const auto& e : ranked) {
            if (relevant_set.count(e.id)) {
                if (s.positive.empty()) s.positive = e.id;
            } else if (s.hard_negatives.size() < cfg_.mining.max_hard_negatives) {
                s.hard_negatives.push_back(e.id);
            }
        }
        if (s.positive.empty()) s.positive = relevant.front();
        Rng rng(derive_seed(cfg_.seed, "source", fnv1a64(q.id)));
        auto exclude = relevant;
        exclude.insert(exclude.end(), s.hard_negatives.begin(), s.hard_negatives.end());
        s.random_negatives = draw_random_negatives(src.corpus, exclude, cfg_.mining.n_random_negatives, rng);
        out.push_back(std::move(s));
    }
    return out;
}

void Pipeline::warmup(PipelineState& state) const {
    const auto samples = source_samples();
    if (samples.empty()) throw DataError("no labeled source-language training data for warm-up");
    const std::size_t steps_per_epoch = (samples.size() + cfg_.batch_size - 1) / cfg_.batch_size;
    finetune(state, samples, cfg_.warmup_epochs * steps_per_epoch, derive_seed(cfg_.seed, "warmup"));

    if (cfg_.variant == MiningVariant::double_dense) {
        auto half = source_samples(1);
        if (half.empty()) half = samples;
        PipelineState second = initial_state(derive_seed(cfg_.seed, "second-encoder"));
        const std::size_t steps = cfg_.warmup_epochs * ((half.size() + cfg_.batch_size - 1) / cfg_.batch_size);
        finetune(second, half, steps, derive_seed(cfg_.seed, "second-warmup"));
        state.second_encoder = std::move(second.params);
    }

    std::vector<QueryPassagePair> pairs;
    for (const auto& s : samples) pairs.push_back({s.query, *data_.corpus.find(s.positive)});
    state.generator = train_generator(std::move(state.generator), pairs, cfg_.tokenizer);
}

void Pipeline::refresh(const PipelineState& state) {
    for (auto& [lang, l] : languages_) {
        l->dense = build_dense_index(state.params, l->corpus, encoded_, cfg_.workers);
        if (state.second_encoder)
            l->second_dense = build_dense_index(*state.second_encoder, l->corpus, encoded_, cfg_.workers);
    }
}

RankedList Pipeline::secondary_ranking(const PipelineState& state, const Language& lang,
                                       const std::vector<std::string>& tokens, std::size_t k) const {
    if (cfg_.variant == MiningVariant::double_dense) {
        if (!state.second_encoder) throw std::logic_error("double_dense variant without a second encoder");
        return search_dense(lang.second_dense, *state.second_encoder, tokens, k);
    }
    return search_sparse(lang.sparse, tokens, k);
}

namespace {

struct QueryMining {
    MinedSets sets;
    RankedList sparse;
};

}  // namespace

std::vector<TrainingSample> Pipeline::mine(const PipelineState& state, std::size_t iteration,
                                           IterationReport* report) const {
    std::vector<const Query*> queries;
    for (const auto& q : data_.unlabeled_queries)
        if (std::find(targets_.begin(), targets_.end(), q.lang) != targets_.end()) queries.push_back(&q);

    std::vector<std::vector<TrainingSample>> per_query(queries.size());
    const auto stream = derive_seed(cfg_.seed, "mine", iteration);
    const auto& mcfg = cfg_.mining;
    parallel_for(cfg_.workers, queries.size(), [&](std::size_t i) {
        const Query& q = *queries[i];
        const Language& lang = language(q.lang);
        const auto tokens = tokenize(q.text, cfg_.tokenizer);
        const auto dense = search_dense(lang.dense, state.params, tokens, mcfg.L);
        const auto other = secondary_ranking(state, lang, tokens, mcfg.L);
        MinedSets sets;
        switch (cfg_.variant) {
            case MiningVariant::fuse_sum:
                sets = mine_fused(hybrid_fuse(other, dense, FusionMode::sum, 2 * mcfg.L), mcfg);
                break;
            case MiningVariant::fuse_product:
                sets = mine_fused(hybrid_fuse(other, dense, FusionMode::product, 2 * mcfg.L), mcfg);
                break;
            default:
                sets = mine_pairs(other, dense, mcfg);
        }
        Rng rng(derive_seed(stream, fnv1a64(q.id)));
        auto& out = per_query[i];
        if (cfg_.variant == MiningVariant::no_hard_negatives) {
            for (const auto& p : sets.positives) out.push_back(TrainingSample{q, p.id, {}, {}});
        } else if (cfg_.variant == MiningVariant::sparse_hard_negatives) {
            const auto positives = sets.positive_ids();
            std::vector<std::string> hard;
            for (const auto& e : other) {
                if (hard.size() >= mcfg.max_hard_negatives) break;
                if (std::find(positives.begin(), positives.end(), e.id) == positives.end()) hard.push_back(e.id);
            }
            for (const auto& p : positives) out.push_back(TrainingSample{q, p, hard, {}});
        } else {
            out = assemble_mined_sample(q, sets, lang.corpus, rng, mcfg);
        }
    });

    std::vector<TrainingSample> samples;
    std::size_t with_positives = 0;
    for (auto& v : per_query) {
        if (!v.empty()) ++with_positives;
        for (auto& s : v) samples.push_back(std::move(s));
    }
    if (report) {
        report->queries_mined = queries.size();
        report->queries_with_positives = with_positives;
        report->mined_samples = samples.size();
    }
    return samples;
}

std::vector<TrainingSample> Pipeline::generate(PipelineState& state, std::size_t iteration,
                                               std::vector<GeneratedPair>* pairs_out,
                                               IterationReport* report) const {
    // Generator data uses its own threshold (S = 1).
    MiningConfig gen_cfg = cfg_.mining;
    gen_cfg.S = cfg_.gen_mining_S;
    std::vector<QueryPassagePair> training_pairs;
    for (const auto& q : data_.unlabeled_queries) {
        if (std::find(targets_.begin(), targets_.end(), q.lang) == targets_.end()) continue;
        const Language& lang = language(q.lang);
        const auto tokens = tokenize(q.text, cfg_.tokenizer);
        const auto dense = search_dense(lang.dense, state.params, tokens, gen_cfg.L);
        const auto other = secondary_ranking(state, lang, tokens, gen_cfg.L);
        for (const auto& p : mine_pairs(other, dense, gen_cfg).positives)
            training_pairs.push_back({q, *lang.corpus.find(p.id)});
    }
    if (report) report->generator_pairs = training_pairs.size();
    if (!training_pairs.empty())
        state.generator = train_generator(std::move(state.generator), training_pairs, cfg_.tokenizer);
    if (state.generator.version == 0) return {};

    struct Job {
        const Language* lang;
        const Passage* passage;
    };
    std::vector<Job> jobs;
    for (const auto& t : targets_) {
        const Language& lang = language(t);
        Rng select(derive_seed(cfg_.seed, "gen-select", derive_seed(iteration, fnv1a64(t))));
        for (auto i : sample_without_replacement(select, lang.corpus.size(), cfg_.n_generate))
            jobs.push_back({&lang, &lang.corpus[i]});
    }

    std::vector<GeneratedPair> pairs(jobs.size());
    std::vector<std::optional<TrainingSample>> samples(jobs.size());
    const auto stream = derive_seed(cfg_.seed, "generate", iteration);
    parallel_for(cfg_.workers, jobs.size(), [&](std::size_t i) {
        const auto& [lang, passage] = jobs[i];
        Rng rng(derive_seed(stream, fnv1a64(passage->id)));
        auto& pair = pairs[i];
        pair.passage_id = passage->id;
        try {
            pair.query = generate_query(state.generator, *passage, rng, cfg_.tokenizer,
                                        "gen" + std::to_string(iteration) + "-" + passage->id);
        } catch (const DataError&) {
            pair.reject_reason = "no tokens";
            return;
        }
        if (filter_generated(pair, lang->sparse, lang->dense, state.params, cfg_.tokenizer))
            samples[i] = assemble_generated_sample(pair, lang->sparse, lang->dense, state.params, lang->corpus, rng,
                                                   cfg_.mining, cfg_.tokenizer);
    });

    std::vector<TrainingSample> out;
    for (auto& s : samples)
        if (s) out.push_back(std::move(*s));
    if (report) {
        report->generated_accepted = out.size();
        report->generated_rejected = jobs.size() - out.size();
    }
    if (pairs_out) *pairs_out = std::move(pairs);
    return out;
}

double Pipeline::finetune(PipelineState& state, std::vector<TrainingSample> samples, std::size_t steps,
                          std::uint64_t seed) const {
    if (samples.empty() || steps == 0) return 0.0;
    Rng rng(seed);
    shuffle(samples, rng);
    const BatchOptions options{cfg_.max_in_batch_negatives};
    const std::size_t batch = std::min(cfg_.batch_size, samples.size());
    std::size_t cursor = 0;
    double total = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
        if (cursor + batch > samples.size()) {
            shuffle(samples, rng);
            cursor = 0;
        }
        std::span<const TrainingSample> view(samples.data() + cursor, batch);
        total += train_step(state.params, state.optimizer, view, encoded_, cfg_.tokenizer, options);
        cursor += batch;
    }
    return total / static_cast<double>(steps);
}

RunFile Pipeline::evaluate(const PipelineState& state, IterationReport& report) const {
    std::vector<const Query*> queries;
    for (const auto& q : data_.dev_queries)
        if (languages_.count(q.lang)) queries.push_back(&q);
    std::vector<RankedList> results(queries.size());
    parallel_for(cfg_.workers, queries.size(), [&](std::size_t i) {
        const Language& lang = language(queries[i]->lang);
        results[i] = search_dense(lang.dense, state.params, *queries[i], cfg_.tokenizer, cfg_.eval_k);
    });
    RunFile run;
    for (std::size_t i = 0; i < queries.size(); ++i) run[queries[i]->id] = std::move(results[i]);

    const auto mrr = mrr_at_k(run, data_.dev_qrels, cfg_.eval_k, &data_.dev_queries);
    const auto recall = recall_at_k(run, data_.dev_qrels, cfg_.eval_k, &data_.dev_queries);
    report.eval_k = cfg_.eval_k;
    report.mrr = mrr.per_language;
    report.recall = recall.per_language;
    double m = 0.0, r = 0.0;
    std::size_t n = 0;
    for (const auto& t : targets_) {
        if (!mrr.per_language.count(t)) continue;
        m += mrr.per_language.at(t);
        r += recall.per_language.at(t);
        ++n;
    }
    report.target_mrr = n ? m / static_cast<double>(n) : 0.0;
    report.target_recall = n ? r / static_cast<double>(n) : 0.0;
    return run;
}

IterationReport Pipeline::run_iteration(PipelineState& state, IterationArtifacts* artifacts) {
    const auto start = std::chrono::steady_clock::now();
    IterationReport report;
    report.iteration = state.completed_iterations + 1;
    const auto it = report.iteration;

    auto mined = mine(state, it, &report);
    if (cfg_.use_mined_data && mined.empty())
        throw DataError("iteration " + std::to_string(it) + ": no positives mined from " +
                        std::to_string(report.queries_mined) + " unlabeled queries with S=" +
                        std::to_string(cfg_.mining.S) + ", L=" + std::to_string(cfg_.mining.L) +
                        " (thresholds too strict?)");

    std::vector<TrainingSample> generated;
    std::vector<GeneratedPair> pairs;
    const bool generation = cfg_.use_generation && !(it == 1 && cfg_.skip_generation_first_iter);
    if (generation) generated = generate(state, it, &pairs, &report);

    std::vector<TrainingSample> train;
    if (cfg_.use_mined_data) train = mined;
    train.insert(train.end(), generated.begin(), generated.end());
    if (!train.empty()) {
        report.mean_loss = finetune(state, std::move(train), cfg_.minibatches_per_iter,
                                    derive_seed(cfg_.seed, "train", it));
        report.trained_steps = cfg_.minibatches_per_iter;
    }

    refresh(state);
    auto run = evaluate(state, report);
    state.completed_iterations = it;
    report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (artifacts) {
        artifacts->mined = std::move(mined);
        artifacts->generated = std::move(generated);
        artifacts->generated_pairs = std::move(pairs);
        artifacts->dev_run = std::move(run);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

std::string iter_dir(const std::string& out_dir, std::size_t i) {
    return (fs::path(out_dir) / ("iter_" + std::to_string(i))).string();
}

void write_reports(const std::string& out_dir, const std::vector<IterationReport>& reports) {
    std::string text = "[\n";
    for (std::size_t i = 0; i < reports.size(); ++i) text += reports[i].to_json() + (i + 1 < reports.size() ? ",\n" : "\n");
    text += "]\n";
    write_text_file((fs::path(out_dir) / "reports.json").string(), text);
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, Dataset data, const std::string& out_dir, bool resume,
                            const IterationObserver& observer) {
    Pipeline pipeline(cfg, std::move(data));
    PipelineResult result;
    const bool persist = !out_dir.empty();
    bool resumed = false;

    if (resume && persist) {
        std::string latest;
        std::size_t done = 0;
        for (std::size_t i = cfg.iterations; i >= 1; --i) {
            auto path = (fs::path(iter_dir(out_dir, i)) / "checkpoint").string();
            if (fs::exists(path)) {
                latest = path;
                done = i;
                break;
            }
        }
        const auto warm = (fs::path(out_dir) / "warmup" / "checkpoint").string();
        if (latest.empty() && fs::exists(warm)) latest = warm;
        if (!latest.empty()) {
            result.state = load_checkpoint(latest);
            if (result.state.config_hash != cfg.hash())
                throw ConfigError("resume", "checkpoint '" + latest + "' was written with config " +
                                                result.state.config_hash + ", current config is " + cfg.hash());
            result.reports.push_back(
                IterationReport::from_json(read_text_file((fs::path(out_dir) / "warmup" / "report.json").string())));
            for (std::size_t i = 1; i <= done; ++i)
                result.reports.push_back(IterationReport::from_json(
                    read_text_file((fs::path(iter_dir(out_dir, i)) / "report.json").string())));
            pipeline.refresh(result.state);
            resumed = true;
        }
    }

    if (!resumed) {
        const auto start = std::chrono::steady_clock::now();
        result.state = pipeline.initial_state(cfg.seed);
        pipeline.warmup(result.state);
        pipeline.refresh(result.state);
        IterationReport report;
        auto run = pipeline.evaluate(result.state, report);
        report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (persist) {
            const auto dir = fs::path(out_dir) / "warmup";
            save_checkpoint((dir / "checkpoint").string(), result.state);
            write_text_file((dir / "report.json").string(), report.to_json());
            write_text_file((dir / "run.trec").string(), format_run(run, "warmup"));
        }
        result.reports.push_back(report);
    }

    while (result.state.completed_iterations < cfg.iterations) {
        IterationArtifacts artifacts;
        auto report = pipeline.run_iteration(result.state, &artifacts);
        if (persist) {
            const auto dir = fs::path(iter_dir(out_dir, report.iteration));
            write_text_file((dir / "mined.jsonl").string(), format_samples_jsonl(artifacts.mined, "mined"));
            write_text_file((dir / "generated.jsonl").string(), format_samples_jsonl(artifacts.generated, "generated"));
            write_text_file((dir / "generated_log.jsonl").string(), format_generated_log(artifacts.generated_pairs));
            save_checkpoint((dir / "checkpoint").string(), result.state);
            write_text_file((dir / "report.json").string(), report.to_json());
            write_text_file((dir / "run.trec").string(),
                            format_run(artifacts.dev_run, "iter" + std::to_string(report.iteration)));
        }
        if (observer) observer(report, artifacts);
        const double previous = result.reports.back().target_mrr;
        result.reports.push_back(report);
        if (cfg.stop_on_plateau && report.target_mrr - previous < cfg.plateau_epsilon) break;
    }
    if (persist) write_reports(out_dir, result.reports);
    return result;
}

}  // namespace lexmine
