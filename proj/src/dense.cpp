#include "lexmine/dense.hpp"

namespace lexmine {

std::vector<std::string> build_vocabulary(const Corpus& corpus,
                                          std::initializer_list<const QuerySet*> query_sets,
                                          const TokenizerConfig& tok) {
    std::set<std::string> vocab;
    for (const auto& p : corpus)
        for (auto& t : tokenize(p.text, tok)) vocab.insert(std::move(t));
    for (const auto* queries : query_sets) {
        if (!queries) continue;
        for (const auto& q : *queries)
            for (auto& t : tokenize(q.text, tok)) vocab.insert(std::move(t));
    }
    return {vocab.begin(), vocab.end()};
}

void TrainingSample::validate() const {
    if (positive.empty()) throw DataError("training sample for '" + query.id + "' has no positive");
    std::set<std::string> seen{positive};
    for (const auto* list : {&hard_negatives, &random_negatives})
        for (const auto& id : *list)
            if (!seen.insert(id).second)
                throw DataError("training sample for '" + query.id + "' repeats passage '" + id + "'");
}

std::vector<std::string> candidate_passages(const TrainingSample& sample,
                                            std::span<const std::string> in_batch_positives,
                                            std::size_t max_in_batch) {
    std::vector<std::string> out{sample.positive};
    std::unordered_set<std::string> seen{sample.positive};
    for (const auto* list : {&sample.hard_negatives, &sample.random_negatives})
        for (const auto& id : *list)
            if (seen.insert(id).second) out.push_back(id);
    std::size_t added = 0;
    for (const auto& id : in_batch_positives) {
        if (added >= max_in_batch) break;
        if (seen.insert(id).second) {
            out.push_back(id);
            ++added;
        }
    }
    return out;
}

std::vector<std::string> in_batch_positives(std::span<const TrainingSample> batch, std::size_t i) {
    std::vector<std::string> out;
    out.reserve(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j)
        if (j != i && batch[j].query.id != batch[i].query.id) out.push_back(batch[j].positive);
    return out;
}

}  // namespace lexmine
