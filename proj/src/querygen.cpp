#include "lexmine/querygen.hpp"

#include "lexmine/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace lexmine {

double GeneratorModel::salience(const std::string& lang, const std::string& token) const {
    auto it = term_salience.find({lang, token});
    return it == term_salience.end() ? unseen_salience() : it->second;
}

namespace {

std::vector<std::string> distinct_in_order(std::vector<std::string> tokens) {
    std::unordered_set<std::string> seen;
    std::vector<std::string> out;
    for (auto& t : tokens)
        if (seen.insert(t).second) out.push_back(std::move(t));
    return out;
}

}  // namespace

GeneratorModel train_generator(GeneratorModel model, const std::vector<QueryPassagePair>& pairs,
                               const TokenizerConfig& tok) {
    if (pairs.empty()) throw std::invalid_argument("train_generator: no training pairs");
    for (const auto& [query, passage] : pairs) {
        auto key = query.text;
        key += '\x1f';
        key += passage.id;
        if (!model.seen_pairs.insert(std::move(key)).second) continue;
        const auto q_tokens = tokenize(query.text, tok);
        const std::unordered_set<std::string> in_query(q_tokens.begin(), q_tokens.end());
        for (const auto& t : distinct_in_order(tokenize(passage.text, tok))) {
            auto& c = model.counts[{passage.lang, t}];
            ++c.in_passage;
            if (in_query.count(t)) ++c.in_query;
        }
        if (!q_tokens.empty()) ++model.query_len_dist[q_tokens.size()];
    }
    model.term_salience.clear();
    for (const auto& [key, c] : model.counts)
        model.term_salience[key] = (static_cast<double>(c.in_query) + 1.0) / (static_cast<double>(c.in_passage) + 2.0);
    ++model.version;
    return model;
}

Query generate_query(const GeneratorModel& model, const Passage& passage, Rng& rng, const TokenizerConfig& tok,
                     std::string query_id, std::optional<std::size_t> forced_len) {
    if (model.version == 0) throw std::logic_error("generate_query: generator is untrained");
    auto candidates = distinct_in_order(tokenize(passage.text, tok));
    if (candidates.empty()) throw DataError("passage '" + passage.id + "' has no tokens to generate from");

    std::size_t len = 1;
    if (forced_len) {
        len = *forced_len;
    } else if (!model.query_len_dist.empty()) {
        std::vector<std::size_t> lengths;
        std::vector<double> weights;
        for (const auto& [l, count] : model.query_len_dist) {
            lengths.push_back(l);
            weights.push_back(static_cast<double>(count));
        }
        len = lengths[sample_weighted(rng, weights)];
    }
    len = std::clamp<std::size_t>(len, 1, candidates.size());

    std::vector<double> weights;
    for (const auto& t : candidates) weights.push_back(std::max(0.0, model.salience(passage.lang, t)));
    std::vector<bool> taken(candidates.size(), false);
    std::vector<std::string> chosen;
    for (std::size_t i = 0; i < len; ++i) {
        double total = 0.0;
        for (double w : weights) total += w;
        std::size_t pick;
        if (total > 0.0) {
            pick = sample_weighted(rng, weights);
        } else {
            std::vector<std::size_t> open;
            for (std::size_t j = 0; j < candidates.size(); ++j)
                if (!taken[j]) open.push_back(j);
            pick = open[uniform_index(rng, open.size())];
        }
        chosen.push_back(candidates[pick]);
        taken[pick] = true;
        weights[pick] = 0.0;
    }
    std::string text;
    for (const auto& t : chosen) text += (text.empty() ? "" : " ") + t;
    return Query{std::move(query_id), std::move(text), passage.lang};
}

bool filter_generated(GeneratedPair& pair, const InvertedIndex& sparse, const DenseIndex<double>& dense,
                      const EncoderParams<double>& params, const TokenizerConfig& tok) {
    const auto tokens = tokenize(pair.query.text, tok);
    const auto sparse_top = search_sparse(sparse, tokens, 1);
    const auto dense_top = search_dense(dense, params, tokens, 1);
    pair.accepted = false;
    if (sparse_top.empty())
        pair.reject_reason = "sparse: no match";
    else if (sparse_top.front().id != pair.passage_id)
        pair.reject_reason = "sparse: top-1 is " + sparse_top.front().id;
    else if (dense_top.empty() || dense_top.front().id != pair.passage_id)
        pair.reject_reason = "dense: top-1 is " + (dense_top.empty() ? std::string("none") : dense_top.front().id);
    else
        pair.accepted = true;
    if (pair.accepted) pair.reject_reason.clear();
    return pair.accepted;
}

std::vector<std::string> merge_hard_negatives(const RankedList& dense_top, const RankedList& sparse_top,
                                              const std::string& positive, std::size_t cap) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen{positive};
    const std::size_t dense_quota = (cap + 1) / 2;
    std::size_t dense_pos = 0;
    auto take_dense = [&](std::size_t limit) {
        for (; dense_pos < dense_top.size() && out.size() < limit; ++dense_pos)
            if (seen.insert(dense_top[dense_pos].id).second) out.push_back(dense_top[dense_pos].id);
    };
    take_dense(dense_quota);
    for (const auto& e : sparse_top) {
        if (out.size() >= cap) break;
        if (seen.insert(e.id).second) out.push_back(e.id);
    }
    take_dense(cap);
    return out;
}

TrainingSample assemble_generated_sample(const GeneratedPair& pair, const InvertedIndex& sparse,
                                         const DenseIndex<double>& dense, const EncoderParams<double>& params,
                                         const Corpus& pool, Rng& rng, const MiningConfig& cfg,
                                         const TokenizerConfig& tok) {
    if (!pair.accepted) throw std::logic_error("assemble_generated_sample: pair was not accepted");
    const auto tokens = tokenize(pair.query.text, tok);
    const std::size_t depth = cfg.max_hard_negatives + 1;
    TrainingSample s;
    s.query = pair.query;
    s.positive = pair.passage_id;
    s.hard_negatives = merge_hard_negatives(search_dense(dense, params, tokens, depth),
                                            search_sparse(sparse, tokens, depth), pair.passage_id,
                                            cfg.max_hard_negatives);
    auto exclude = s.hard_negatives;
    exclude.push_back(s.positive);
    s.random_negatives = draw_random_negatives(pool, exclude, cfg.n_random_negatives, rng);
    return s;
}

std::string format_generated_log(const std::vector<GeneratedPair>& pairs) {
    std::string out;
    for (const auto& p : pairs) {
        nlohmann::ordered_json obj;
        obj["query_id"] = p.query.id;
        obj["query_text"] = p.query.text;
        obj["passage_id"] = p.passage_id;
        obj["accepted"] = p.accepted;
        if (!p.accepted) obj["reason"] = p.reject_reason;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

}  // namespace lexmine
