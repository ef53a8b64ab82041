#include "lexmine/mining.hpp"

#include "lexmine/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <unordered_set>

namespace lexmine {

void MiningConfig::validate() const {
    if (S < 1) throw ConfigError("mining_S", "must be >= 1");
    if (L < S) throw ConfigError("mining_L", "must be >= mining_S");
}

std::vector<std::string> MinedSets::positive_ids() const {
    std::vector<std::string> ids;
    for (const auto& p : positives) ids.push_back(p.id);
    return ids;
}

std::vector<std::string> MinedSets::negative_ids() const {
    std::vector<std::string> ids;
    for (const auto& p : negatives) ids.push_back(p.id);
    return ids;
}

namespace {

// id -> 1-based rank within the first n entries.
std::map<std::string, std::size_t> rank_map(const RankedList& list, std::size_t n) {
    std::map<std::string, std::size_t> ranks;
    for (std::size_t i = 0; i < list.size() && i < n; ++i) ranks.emplace(list[i].id, i + 1);
    return ranks;
}

void order_by_rank(std::vector<MinedPassage>& items) {
    std::sort(items.begin(), items.end(), [](const MinedPassage& a, const MinedPassage& b) {
        return a.best_rank != b.best_rank ? a.best_rank < b.best_rank : a.id < b.id;
    });
}

}  // namespace

MinedSets mine_pairs(const RankedList& sparse_top, const RankedList& dense_top, const MiningConfig& cfg) {
    cfg.validate();
    const auto top_s_sparse = rank_map(sparse_top, cfg.S);
    const auto top_s_dense = rank_map(dense_top, cfg.S);
    const auto top_l_sparse = rank_map(sparse_top, cfg.L);
    const auto top_l_dense = rank_map(dense_top, cfg.L);

    MinedSets out;
    for (const auto& [id, rank] : top_s_sparse) {
        if (auto d = top_s_dense.find(id); d != top_s_dense.end())
            out.positives.push_back({id, std::min(rank, d->second)});
        else if (!top_l_dense.count(id))
            out.negatives.push_back({id, rank});
    }
    for (const auto& [id, rank] : top_s_dense)
        if (!top_l_sparse.count(id)) out.negatives.push_back({id, rank});
    order_by_rank(out.positives);
    order_by_rank(out.negatives);
    return out;
}

MinedSets mine_fused(const RankedList& fused, const MiningConfig& cfg) {
    cfg.validate();
    MinedSets out;
    for (std::size_t i = 0; i < fused.size(); ++i) {
        if (i < cfg.S)
            out.positives.push_back({fused[i].id, i + 1});
        else if (i >= cfg.L)
            out.negatives.push_back({fused[i].id, i + 1});
    }
    return out;
}

std::vector<std::string> draw_random_negatives(const Corpus& pool, const std::vector<std::string>& exclude,
                                               std::size_t n, Rng& rng) {
    std::vector<std::string> out;
    if (n == 0 || pool.empty()) return out;
    std::unordered_set<std::string> banned(exclude.begin(), exclude.end());
    std::size_t excluded_in_pool = 0;
    for (const auto& id : banned)
        if (pool.contains(id)) ++excluded_in_pool;
    const std::size_t available = pool.size() - excluded_in_pool;
    if (available <= n) {
        std::vector<std::string> all;
        for (const auto& p : pool)
            if (!banned.count(p.id)) all.push_back(p.id);
        shuffle(all, rng);
        return all;
    }
    while (out.size() < n) {
        const auto& id = pool[static_cast<std::size_t>(uniform_index(rng, pool.size()))].id;
        if (banned.insert(id).second) out.push_back(id);
    }
    return out;
}

std::vector<TrainingSample> assemble_mined_sample(const Query& query, const MinedSets& sets, const Corpus& pool,
                                                  Rng& rng, const MiningConfig& cfg) {
    std::vector<TrainingSample> out;
    if (sets.positives.empty()) return out;
    std::vector<std::string> hard;
    for (std::size_t i = 0; i < sets.negatives.size() && hard.size() < cfg.max_hard_negatives; ++i)
        hard.push_back(sets.negatives[i].id);
    auto exclude = sets.positive_ids();
    for (const auto& n : sets.negatives) exclude.push_back(n.id);
    for (const auto& positive : sets.positives) {
        TrainingSample s;
        s.query = query;
        s.positive = positive.id;
        s.hard_negatives = hard;
        s.random_negatives = draw_random_negatives(pool, exclude, cfg.n_random_negatives, rng);
        out.push_back(std::move(s));
    }
    return out;
}

RankedList hybrid_fuse(const RankedList& sparse, const RankedList& dense, FusionMode mode, std::size_t k) {
    auto normalise = [](const RankedList& list) {
        std::map<std::string, double> out;
        if (list.empty()) return out;
        double lo = list.front().score, hi = list.front().score;
        for (const auto& e : list) {
            lo = std::min(lo, e.score);
            hi = std::max(hi, e.score);
        }
        for (const auto& e : list) out[e.id] = hi > lo ? (e.score - lo) / (hi - lo) : 1.0;
        return out;
    };
    const auto ns = normalise(sparse);
    const auto nd = normalise(dense);
    std::set<std::string> ids;
    for (const auto& [id, v] : ns) ids.insert(id);
    for (const auto& [id, v] : nd) ids.insert(id);
    std::vector<ScoredPassage> fused;
    for (const auto& id : ids) {
        auto s = ns.find(id);
        auto d = nd.find(id);
        const double a = s == ns.end() ? 0.0 : s->second;
        const double b = d == nd.end() ? 0.0 : d->second;
        fused.push_back({id, mode == FusionMode::sum ? a + b : a * b});
    }
    return top_k(std::move(fused), k);
}

std::string format_samples_jsonl(const std::vector<TrainingSample>& samples, const std::string& source) {
    std::string out;
    for (const auto& s : samples) {
        nlohmann::ordered_json obj;
        obj["query_id"] = s.query.id;
        obj["query_text"] = s.query.text;
        obj["positive"] = s.positive;
        obj["hard_negatives"] = s.hard_negatives;
        obj["random_negatives"] = s.random_negatives;
        obj["source"] = source;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::vector<DatasetRecord> parse_samples_jsonl(std::string_view text, const std::string& origin) {
    std::vector<DatasetRecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        DatasetRecord r;
        try {
            auto obj = nlohmann::json::parse(line);
            r.sample.query.id = obj.at("query_id").get<std::string>();
            r.sample.query.text = obj.at("query_text").get<std::string>();
            r.sample.positive = obj.at("positive").get<std::string>();
            r.sample.hard_negatives = obj.at("hard_negatives").get<std::vector<std::string>>();
            r.sample.random_negatives = obj.at("random_negatives").get<std::vector<std::string>>();
            r.source = obj.at("source").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(origin, line_no, std::string("malformed sample: ") + e.what());
        }
        try {
            r.sample.validate();
        } catch (const DataError& e) {
            throw DataError(origin, line_no, e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace lexmine
