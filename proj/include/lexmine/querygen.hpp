#pragma once

#include "lexmine/corpus.hpp"
#include "lexmine/dense.hpp"
#include "lexmine/mining.hpp"
#include "lexmine/random.hpp"
#include "lexmine/sparse.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace lexmine {

/// Per-language term-salience query generator.
///
/// Salience of (lang, t) is the add-one smoothed estimate of
/// P(t in query | t in its positive passage) = (in_query + 1) / (in_passage + 2),
/// counted over the distinct (query, passage) pairs seen so far. Training is
/// cumulative: later calls add the pairs they have not seen before.
struct GeneratorModel {
    struct TermCounts {
        std::uint64_t in_passage = 0;
        std::uint64_t in_query = 0;
        bool operator==(const TermCounts&) const = default;
    };
    using TermKey = std::pair<std::string, std::string>;  // (lang, token)

    std::map<TermKey, TermCounts> counts;
    std::map<TermKey, double> term_salience;
    std::map<std::size_t, std::uint64_t> query_len_dist;  ///< length -> count
    std::set<std::string> seen_pairs;
    std::uint64_t version = 0;

    static constexpr double unseen_salience() { return 0.5; }

    double salience(const std::string& lang, const std::string& token) const;

    bool operator==(const GeneratorModel&) const = default;
};

struct QueryPassagePair {
    Query query;
    Passage passage;
};

/// Throws std::invalid_argument on an empty pair list.
GeneratorModel train_generator(GeneratorModel model, const std::vector<QueryPassagePair>& pairs,
                               const TokenizerConfig& tok = {});

/// Samples a length from the model (or uses `forced_len`), then that many
/// distinct passage tokens without replacement, each draw proportional to
/// salience. Throws std::logic_error for an untrained model and DataError for
/// a passage with no tokens.
Query generate_query(const GeneratorModel& model, const Passage& passage, Rng& rng, const TokenizerConfig& tok,
                     std::string query_id, std::optional<std::size_t> forced_len = std::nullopt);

struct GeneratedPair {
    Query query;
    std::string passage_id;
    bool accepted = false;
    std::string reject_reason;  ///< empty when accepted
};

/// Both retrievers must put the source passage first. Sets `accepted` and
/// `reject_reason` on the pair and returns the verdict.
bool filter_generated(GeneratedPair& pair, const InvertedIndex& sparse, const DenseIndex<double>& dense,
                      const EncoderParams<double>& params, const TokenizerConfig& tok);

/// Hard negatives take up to ceil(cap/2) non-positive dense results, then
/// sparse results fill the cap, then any remaining dense results; duplicates
/// are skipped. Random negatives come from `pool`. Throws std::logic_error for
/// a pair that was not accepted.
TrainingSample assemble_generated_sample(const GeneratedPair& pair, const InvertedIndex& sparse,
                                         const DenseIndex<double>& dense, const EncoderParams<double>& params,
                                         const Corpus& pool, Rng& rng, const MiningConfig& cfg,
                                         const TokenizerConfig& tok);

/// The hard-negative merge on its own, over two ranked lists.
std::vector<std::string> merge_hard_negatives(const RankedList& dense_top, const RankedList& sparse_top,
                                              const std::string& positive, std::size_t cap);

std::string format_generated_log(const std::vector<GeneratedPair>& pairs);

}  // namespace lexmine
