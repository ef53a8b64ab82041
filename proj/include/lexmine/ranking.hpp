#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace lexmine {

struct ScoredPassage {
    std::string id;
    double score = 0.0;

    bool operator==(const ScoredPassage&) const = default;
};

/// Descending score, ties broken by ascending passage id.
using RankedList = std::vector<ScoredPassage>;

inline bool ranks_before(const ScoredPassage& a, const ScoredPassage& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

/// True if the list is strictly ordered under (score desc, id asc); this also
/// rules out duplicate ids.
bool is_ranked(const RankedList& list);

/// Sorts candidates into rank order and keeps the first k.
RankedList top_k(std::vector<ScoredPassage> candidates, std::size_t k);

/// The first min(n, size) ids.
std::vector<std::string> head_ids(const RankedList& list, std::size_t n);

}  // namespace lexmine
