#include "lexmine/ranking.hpp"

#include <algorithm>
#include <set>

namespace lexmine {

bool is_ranked(const RankedList& list) {
    for (std::size_t i = 1; i < list.size(); ++i)
        if (!ranks_before(list[i - 1], list[i])) return false;
    std::set<std::string> seen;
    for (const auto& e : list)
        if (!seen.insert(e.id).second) return false;
    return true;
}

RankedList top_k(std::vector<ScoredPassage> candidates, std::size_t k) {
    k = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), ranks_before);
    candidates.resize(k);
    return candidates;
}

std::vector<std::string> head_ids(const RankedList& list, std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < list.size() && i < n; ++i) ids.push_back(list[i].id);
    return ids;
}

}  // namespace lexmine
