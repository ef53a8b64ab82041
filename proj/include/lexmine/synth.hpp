#pragma once

#include "lexmine/config.hpp"
#include "lexmine/corpus.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lexmine {

/// Parameters of the synthetic multilingual benchmark.
///
/// Every language gets its own vocabulary. A slice of it forms a pool of topic
/// terms; each topic owns `topic_terms` of them, and every pool term is shared
/// by `term_sharing` topics so that single words are ambiguous. Passages mix
/// Zipf-weighted topic terms with Zipf-weighted background words.
struct SynthSpec {
    std::vector<std::string> languages{"en", "sw", "ja"};  ///< first one is the labeled source
    int topics_per_lang = 40;
    int passages_per_topic = 40;
    int vocab_size = 2000;
    int query_len = 4;
    double labeled_frac = 1.0;  ///< share of source training queries that carry qrels
    int queries_per_lang = 600;
    int eval_queries_per_lang = 500;
    int passage_len = 40;
    int topic_terms = 24;
    int term_sharing = 2;
    double topic_mix = 0.4;  ///< probability a passage token comes from its topic

    /// Reads the documented keys; unknown keys are rejected.
    static SynthSpec from_config(const KeyValueConfig& cfg);
    KeyValueConfig to_config() const;
    void validate() const;
};

/// Generative model of one language, kept for ground-truth checks.
struct SynthLanguageModel {
    std::string lang;
    std::vector<std::string> vocab;
    /// topic -> (word index -> probability) for the topic component.
    std::vector<std::map<std::size_t, double>> topic_dist;
    std::vector<double> background_dist;  ///< over vocab; zero on pool words
    double topic_mix = 0.0;
};

struct SynthBenchmark {
    std::string source_lang;
    std::vector<std::string> target_langs;

    Corpus corpus;
    QuerySet train_queries;       ///< labeled source queries
    JudgmentSet train_qrels;
    QuerySet unlabeled_queries;   ///< all languages; no judgments
    QuerySet dev_queries;         ///< evaluation queries, every language
    JudgmentSet dev_qrels;

    std::map<std::string, std::string> passage_topic;  ///< "lang:tN"
    std::map<std::string, std::string> query_topic;
    std::map<std::string, SynthLanguageModel> models;

    /// Most probable topic ("lang:tN") under the generative model for a bag of
    /// tokens in `lang`; empty if no token belongs to the language.
    std::string most_likely_topic(const std::string& lang,
                                  const std::vector<std::string>& tokens) const;

    /// Writes passages.jsonl, train_queries.jsonl, train_qrels.tsv,
    /// unlabeled_queries.jsonl, dev_queries.jsonl, dev_qrels.tsv,
    /// passage_topics.tsv and query_topics.tsv under `dir`.
    void write(const std::string& dir) const;
};

SynthBenchmark synth_benchmark(const SynthSpec& spec, std::uint64_t seed);

}  // namespace lexmine
