#pragma once

#include "lexmine/config.hpp"
#include "lexmine/corpus.hpp"
#include "lexmine/dense.hpp"
#include "lexmine/eval.hpp"
#include "lexmine/mining.hpp"
#include "lexmine/querygen.hpp"
#include "lexmine/sparse.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lexmine {

/// How each unlabeled query is turned into training samples.
enum class MiningVariant {
    lexicon,                ///< sparse/dense agreement (the default)
    double_dense,           ///< agreement between two dense retrievers
    fuse_sum,               ///< min-max fused scores, added
    fuse_product,           ///< min-max fused scores, multiplied
    no_hard_negatives,      ///< mined positives with in-batch negatives only
    sparse_hard_negatives,  ///< mined positives with BM25 top passages as negatives
};

std::string to_string(MiningVariant v);
MiningVariant parse_mining_variant(const std::string& name);

struct DataPaths {
    std::string passages;
    std::string train_queries;
    std::string train_qrels;
    std::string dev_queries;
    std::string dev_qrels;
    std::string unlabeled_queries;
};

/// Everything the pipeline reads.
struct Dataset {
    Corpus corpus;
    QuerySet train_queries;
    JudgmentSet train_qrels;
    QuerySet unlabeled_queries;
    QuerySet dev_queries;
    JudgmentSet dev_qrels;

    /// Loads and cross-validates all files.
    static Dataset load(const DataPaths& paths);
};

struct PipelineConfig {
    DataPaths data;
    std::string source_lang = "en";
    std::vector<std::string> target_langs;  ///< empty: every corpus language but the source

    TokenizerConfig tokenizer;
    BM25Params bm25;

    long dim = 64;
    bool shared_encoder = true;
    AdamConfig adam;

    std::size_t iterations = 3;
    std::size_t minibatches_per_iter = 500;
    std::size_t batch_size = 128;
    std::size_t max_in_batch_negatives = std::numeric_limits<std::size_t>::max();
    std::size_t warmup_epochs = 3;

    MiningConfig mining;
    std::size_t gen_mining_S = 1;
    MiningVariant variant = MiningVariant::lexicon;

    bool use_mined_data = true;
    bool use_generation = true;
    std::size_t n_generate = 5000;  ///< candidate passages per target language
    bool skip_generation_first_iter = true;

    std::size_t eval_k = 10;
    bool stop_on_plateau = false;
    double plateau_epsilon = 1e-3;

    std::uint64_t seed = 1;
    std::size_t workers = 1;

    /// Reads known keys (data paths may be relative to `data_dir`); rejects the rest.
    static PipelineConfig from_config(const KeyValueConfig& cfg);
    /// Canonical form; excludes `workers`, which never changes results.
    KeyValueConfig to_config() const;
    std::string hash() const { return to_config().hash_hex(); }
    void validate() const;
};

struct IterationReport {
    std::size_t iteration = 0;  ///< 0 is the warm-up evaluation
    std::size_t queries_mined = 0;
    std::size_t queries_with_positives = 0;
    std::size_t mined_samples = 0;
    std::size_t generator_pairs = 0;
    std::size_t generated_accepted = 0;
    std::size_t generated_rejected = 0;
    std::size_t trained_steps = 0;
    double mean_loss = 0.0;
    std::size_t eval_k = 10;
    std::map<std::string, double> mrr;     ///< per language
    std::map<std::string, double> recall;  ///< per language
    double target_mrr = 0.0;               ///< macro mean over target languages
    double target_recall = 0.0;
    double wall_clock_seconds = 0.0;

    std::string to_json() const;
    static IterationReport from_json(const std::string& text);
    /// Equal ignoring wall-clock time.
    bool same_results(const IterationReport& other) const;
};

struct PipelineState {
    EncoderParams<double> params;
    OptimizerState<double> optimizer;
    GeneratorModel generator;
    std::optional<EncoderParams<double>> second_encoder;  ///< double-dense variant only
    std::size_t completed_iterations = 0;
    std::string config_hash;
};

void save_checkpoint(const std::string& path, const PipelineState& state);
PipelineState load_checkpoint(const std::string& path);

/// In-memory products of one iteration.
struct IterationArtifacts {
    std::vector<TrainingSample> mined;
    std::vector<TrainingSample> generated;
    std::vector<GeneratedPair> generated_pairs;  ///< accepted and rejected
    RunFile dev_run;
};

/// Indexes and cached encodings over one dataset; owns no training state.
class Pipeline {
public:
    Pipeline(PipelineConfig cfg, Dataset data);
    ~Pipeline();
    Pipeline(Pipeline&&) noexcept;
    Pipeline& operator=(Pipeline&&) noexcept;

    const PipelineConfig& config() const { return cfg_; }
    const Dataset& data() const { return data_; }
    const std::vector<std::string>& target_langs() const { return targets_; }
    const InvertedIndex& sparse_index(const std::string& lang) const;
    const DenseIndex<double>& dense_index(const std::string& lang) const;
    const Corpus& language_corpus(const std::string& lang) const;
    const EncodedCorpus& encoded_corpus() const { return encoded_; }
    const std::vector<std::string>& vocabulary() const { return vocabulary_; }

    /// Fresh parameters and optimizer over the dataset vocabulary.
    PipelineState initial_state(std::uint64_t seed) const;

    /// Labeled source samples: the best BM25-ranked relevant passage as the
    /// positive, top non-relevant BM25 passages as hard negatives, plus random
    /// negatives. `parity` 0/1 keeps only even/odd queries; -1 keeps all.
    std::vector<TrainingSample> source_samples(int parity = -1) const;

    /// Trains the retriever on source samples and the generator on their pairs.
    void warmup(PipelineState& state) const;

    /// Re-encodes every language corpus with the current parameters.
    void refresh(const PipelineState& state);

    /// Mined samples for every unlabeled target query.
    std::vector<TrainingSample> mine(const PipelineState& state, std::size_t iteration,
                                     IterationReport* report = nullptr) const;

    /// Retrains the generator on S=1 mined pairs, then generates and filters.
    std::vector<TrainingSample> generate(PipelineState& state, std::size_t iteration,
                                         std::vector<GeneratedPair>* pairs = nullptr,
                                         IterationReport* report = nullptr) const;

    /// `steps` minibatches over a shuffled copy of `samples`. Returns the mean loss.
    double finetune(PipelineState& state, std::vector<TrainingSample> samples, std::size_t steps,
                    std::uint64_t seed) const;

    /// Dense retrieval over each query's own language; fills metrics.
    RunFile evaluate(const PipelineState& state, IterationReport& report) const;

    /// Mine, generate, fine-tune, refresh, evaluate.
    IterationReport run_iteration(PipelineState& state, IterationArtifacts* artifacts = nullptr);

private:
    struct Language;
    RankedList secondary_ranking(const PipelineState& state, const Language& lang,
                                 const std::vector<std::string>& tokens, std::size_t k) const;
    Language& language(const std::string& lang);
    const Language& language(const std::string& lang) const;

    PipelineConfig cfg_;
    Dataset data_;
    std::vector<std::string> targets_;
    EncodedCorpus encoded_;
    std::vector<std::string> vocabulary_;
    std::map<std::string, std::unique_ptr<Language>> languages_;
};

using IterationObserver = std::function<void(const IterationReport&, const IterationArtifacts&)>;

struct PipelineResult {
    std::vector<IterationReport> reports;  ///< warm-up evaluation first
    PipelineState state;
};

/// Warm-up then `cfg.iterations` iterations. With `out_dir` set, writes
/// warmup/ and iter_N/ artifacts plus reports.json; with `resume`, restarts
/// after the newest checkpoint in `out_dir` (its config hash must match).
PipelineResult run_pipeline(const PipelineConfig& cfg, Dataset data, const std::string& out_dir = "",
                            bool resume = false, const IterationObserver& observer = {});

}  // namespace lexmine
