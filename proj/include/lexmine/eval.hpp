#pragma once

#include "lexmine/corpus.hpp"
#include "lexmine/ranking.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace lexmine {

/// query id -> ranked results.
using RunFile = std::map<std::string, RankedList>;

std::string format_run(const RunFile& run, const std::string& tag);
RunFile parse_run(std::string_view text, const std::string& origin = "<string>");
RunFile load_run(const std::string& path);

struct MetricsReport {
    std::string metric;  ///< "mrr" or "recall"
    std::size_t k = 0;
    std::map<std::string, double> per_query;     ///< every judged query
    std::map<std::string, double> per_language;  ///< filled when languages are known
    std::map<std::string, std::size_t> queries_per_language;
    double mean = 0.0;
    std::size_t unjudged_run_queries = 0;  ///< in the run but absent from qrels; excluded

    std::string name() const { return metric + "@" + std::to_string(k); }
};

enum class RecallMode {
    hit,       ///< 1 if any relevant passage is in the top k
    coverage,  ///< fraction of relevant passages found in the top k
};

/// Reciprocal rank of the first passage with grade > 0 in the top k, averaged
/// over queries that have qrels. Pass `queries` to get per-language means.
MetricsReport mrr_at_k(const RunFile& run, const JudgmentSet& qrels, std::size_t k,
                       const QuerySet* queries = nullptr);

MetricsReport recall_at_k(const RunFile& run, const JudgmentSet& qrels, std::size_t k,
                          const QuerySet* queries = nullptr, RecallMode mode = RecallMode::hit);

struct TTestResult {
    double t = 0.0;
    double p_two_sided = 1.0;
    std::size_t n = 0;
    /// All differences equal but non-zero: t is infinite and p is reported as 0.
    bool degenerate_variance = false;
};

/// Student's paired t-test on a[i] - b[i] with n-1 degrees of freedom.
/// Throws std::invalid_argument on unequal lengths or n < 2.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Pairs per-query values by query id; the key sets must match.
TTestResult paired_t_test(const std::map<std::string, double>& a, const std::map<std::string, double>& b);

/// Aligned text table, one row per language plus an overall row.
std::string format_metrics_table(const MetricsReport& mrr, const MetricsReport& recall);

}  // namespace lexmine
