#include "lexmine/sparse.hpp"

#include "lexmine/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace lexmine {

void BM25Params::validate() const {
    if (!(k1 >= 0.0)) throw ConfigError("bm25_k1", "must be non-negative");
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("bm25_b", "must lie in [0,1]");
}

InvertedIndex InvertedIndex::build(const Corpus& corpus, const TokenizerConfig& tok,
                                   const BM25Params& params) {
    if (corpus.empty()) throw DataError("cannot index an empty corpus");
    params.validate();
    InvertedIndex index;
    index.params_ = params;
    index.tok_ = tok;

    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return corpus[a].id < corpus[b].id; });

    std::uint64_t total_len = 0;
    for (std::size_t doc = 0; doc < order.size(); ++doc) {
        const auto& passage = corpus[order[doc]];
        index.ids_.push_back(passage.id);
        index.doc_by_id_.emplace(passage.id, doc);
        auto tokens = tokenize(passage.text, tok);
        index.doc_len_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_len += tokens.size();
        std::map<std::string, std::uint32_t> tf;
        for (auto& t : tokens) ++tf[t];
        for (auto& [term, count] : tf)
            index.postings_[term].push_back({static_cast<std::uint32_t>(doc), count});
    }
    index.avgdl_ = static_cast<double>(total_len) / static_cast<double>(order.size());
    return index;
}

std::optional<std::size_t> InvertedIndex::doc_number(const std::string& passage_id) const {
    auto it = doc_by_id_.find(passage_id);
    if (it == doc_by_id_.end()) return std::nullopt;
    return it->second;
}

std::span<const InvertedIndex::Posting> InvertedIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    if (it == postings_.end()) return {};
    return it->second;
}

double InvertedIndex::idf(std::size_t df) const {
    const double n = static_cast<double>(size());
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double InvertedIndex::term_weight(std::uint32_t tf, std::uint32_t dl) const {
    const double k1 = params_.k1;
    const double b = params_.b;
    const double norm = avgdl_ > 0.0 ? static_cast<double>(dl) / avgdl_ : 0.0;
    const double f = static_cast<double>(tf);
    return f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * norm));
}

bool InvertedIndex::operator==(const InvertedIndex& other) const {
    return ids_ == other.ids_ && doc_len_ == other.doc_len_ && postings_ == other.postings_ &&
           avgdl_ == other.avgdl_ && params_ == other.params_;
}

namespace {

std::vector<std::string> unique_terms(const std::vector<std::string>& tokens) {
    std::set<std::string> seen(tokens.begin(), tokens.end());
    return {seen.begin(), seen.end()};
}

}  // namespace

double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                  const std::string& passage_id) {
    auto doc = index.doc_number(passage_id);
    if (!doc) throw DataError("unknown passage id '" + passage_id + "'");
    double score = 0.0;
    for (const auto& term : unique_terms(query_tokens)) {
        auto postings = index.postings(term);
        auto it = std::lower_bound(postings.begin(), postings.end(), *doc,
                                   [](const auto& p, std::size_t d) { return p.doc < d; });
        if (it == postings.end() || it->doc != *doc) continue;
        score += index.idf(postings.size()) * index.term_weight(it->tf, index.doc_len(*doc));
    }
    return score;
}

RankedList search_sparse(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                         std::size_t k) {
    if (k == 0) return {};
    std::vector<double> accumulator(index.size(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& term : unique_terms(query_tokens)) {
        auto postings = index.postings(term);
        if (postings.empty()) continue;
        const double idf = index.idf(postings.size());
        for (const auto& p : postings) {
            if (accumulator[p.doc] == 0.0) touched.push_back(p.doc);
            accumulator[p.doc] += idf * index.term_weight(p.tf, index.doc_len(p.doc));
        }
    }
    std::vector<ScoredPassage> candidates;
    candidates.reserve(touched.size());
    for (auto doc : touched)
        if (accumulator[doc] > 0.0) candidates.push_back({index.doc_id(doc), accumulator[doc]});
    return top_k(std::move(candidates), k);
}

RankedList search_sparse(const InvertedIndex& index, const Query& query, std::size_t k) {
    return search_sparse(index, tokenize(query.text, index.tokenizer()), k);
}

}  // namespace lexmine
