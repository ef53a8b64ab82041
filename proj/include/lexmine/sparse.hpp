#pragma once

#include "lexmine/corpus.hpp"
#include "lexmine/ranking.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lexmine {

struct BM25Params {
    double k1 = 0.9;
    double b = 0.4;

    void validate() const;
    bool operator==(const BM25Params&) const = default;
};

/// Term -> postings map over a corpus, with the statistics BM25 needs.
///
/// Documents are numbered in ascending passage-id order, so postings sorted by
/// document number are also sorted by passage id and ties in scoring resolve
/// to the smaller id for free.
class InvertedIndex {
public:
    struct Posting {
        std::uint32_t doc = 0;
        std::uint32_t tf = 0;
        bool operator==(const Posting&) const = default;
    };

    /// Throws DataError on an empty corpus.
    static InvertedIndex build(const Corpus& corpus, const TokenizerConfig& tok = {},
                               const BM25Params& params = {});

    std::size_t size() const { return ids_.size(); }
    double avgdl() const { return avgdl_; }
    const BM25Params& params() const { return params_; }
    const TokenizerConfig& tokenizer() const { return tok_; }

    const std::string& doc_id(std::size_t doc) const { return ids_[doc]; }
    std::uint32_t doc_len(std::size_t doc) const { return doc_len_[doc]; }
    std::optional<std::size_t> doc_number(const std::string& passage_id) const;

    std::span<const Posting> postings(const std::string& term) const;
    std::size_t df(const std::string& term) const { return postings(term).size(); }
    std::size_t vocabulary_size() const { return postings_.size(); }

    /// ln(1 + (N - df + 0.5) / (df + 0.5)); always positive.
    double idf(std::size_t df) const;

    /// Term-frequency saturation for one posting.
    double term_weight(std::uint32_t tf, std::uint32_t dl) const;

    bool operator==(const InvertedIndex& other) const;

private:
    std::vector<std::string> ids_;
    std::vector<std::uint32_t> doc_len_;
    std::unordered_map<std::string, std::size_t> doc_by_id_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    double avgdl_ = 0.0;
    BM25Params params_;
    TokenizerConfig tok_;
};

/// BM25 of one passage for the unique terms of `query_tokens`.
/// Throws DataError for an unknown passage id.
double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                  const std::string& passage_id);

/// Top-k passages with positive BM25 score, in (score desc, id asc) order.
RankedList search_sparse(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                         std::size_t k);
RankedList search_sparse(const InvertedIndex& index, const Query& query, std::size_t k);

}  // namespace lexmine
