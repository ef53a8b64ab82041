#include "lexmine/eval.hpp"

#include "lexmine/error.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lexmine {

std::string format_run(const RunFile& run, const std::string& tag) {
    std::string out;
    char score[64];
    for (const auto& [qid, list] : run) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            std::snprintf(score, sizeof score, "%.17g", list[i].score);
            out += qid + " Q0 " + list[i].id + " " + std::to_string(i + 1) + " " + score + " " + tag + "\n";
        }
    }
    return out;
}

RunFile parse_run(std::string_view text, const std::string& origin) {
    std::map<std::string, std::vector<std::pair<long, ScoredPassage>>> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::vector<std::string> parts;
        for (std::string f; fields >> f;) parts.push_back(f);
        if (parts.empty()) continue;
        if (parts.size() != 6) throw DataError(origin, line_no, "expected 6 run fields");
        try {
            long rank = std::stol(parts[3]);
            double score = std::stod(parts[4]);
            rows[parts[0]].push_back({rank, ScoredPassage{parts[2], score}});
        } catch (const std::exception&) {
            throw DataError(origin, line_no, "bad rank or score");
        }
    }
    RunFile run;
    for (auto& [qid, entries] : rows) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& list = run[qid];
        for (auto& [rank, e] : entries) list.push_back(std::move(e));
    }
    return run;
}

RunFile load_run(const std::string& path) { return parse_run(read_text_file(path), path); }

namespace {

template <typename PerQuery>
MetricsReport evaluate(const RunFile& run, const JudgmentSet& qrels, std::size_t k, const QuerySet* queries,
                       std::string metric, PerQuery&& per_query) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    MetricsReport report;
    report.metric = std::move(metric);
    report.k = k;
    static const RankedList empty;
    for (const auto& qid : qrels.query_ids()) {
        auto it = run.find(qid);
        const auto& list = it == run.end() ? empty : it->second;
        report.per_query[qid] = per_query(list, qrels.for_query(qid));
    }
    for (const auto& [qid, list] : run)
        if (!qrels.has_query(qid)) ++report.unjudged_run_queries;

    double total = 0.0;
    for (const auto& [qid, v] : report.per_query) total += v;
    report.mean = report.per_query.empty() ? 0.0 : total / static_cast<double>(report.per_query.size());

    if (queries) {
        std::map<std::string, double> sums;
        for (const auto& [qid, v] : report.per_query) {
            const auto* q = queries->find(qid);
            const std::string lang = q ? q->lang : std::string("?");
            sums[lang] += v;
            ++report.queries_per_language[lang];
        }
        for (const auto& [lang, s] : sums)
            report.per_language[lang] = s / static_cast<double>(report.queries_per_language[lang]);
    }
    return report;
}

bool relevant(const std::map<std::string, int>& judged, const std::string& pid) {
    auto it = judged.find(pid);
    return it != judged.end() && it->second > 0;
}

}  // namespace

MetricsReport mrr_at_k(const RunFile& run, const JudgmentSet& qrels, std::size_t k, const QuerySet* queries) {
    return evaluate(run, qrels, k, queries, "mrr", [k](const RankedList& list, const auto& judged) {
        for (std::size_t i = 0; i < list.size() && i < k; ++i)
            if (relevant(judged, list[i].id)) return 1.0 / static_cast<double>(i + 1);
        return 0.0;
    });
}

MetricsReport recall_at_k(const RunFile& run, const JudgmentSet& qrels, std::size_t k, const QuerySet* queries,
                          RecallMode mode) {
    return evaluate(run, qrels, k, queries, "recall", [k, mode](const RankedList& list, const auto& judged) {
        std::size_t found = 0;
        for (std::size_t i = 0; i < list.size() && i < k; ++i)
            if (relevant(judged, list[i].id)) ++found;
        if (mode == RecallMode::hit) return found > 0 ? 1.0 : 0.0;
        std::size_t total = 0;
        for (const auto& [pid, grade] : judged)
            if (grade > 0) ++total;
        return total == 0 ? 0.0 : static_cast<double>(found) / static_cast<double>(total);
    });
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: unequal lengths");
    const std::size_t n = a.size();
    if (n < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");
    TTestResult r;
    r.n = n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) {
        if (mean == 0.0) return r;
        r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p_two_sided = 0.0;
        r.degenerate_variance = true;
        return r;
    }
    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    boost::math::students_t dist(static_cast<double>(n - 1));
    r.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
    return r;
}

TTestResult paired_t_test(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    std::vector<double> va, vb;
    for (const auto& [qid, v] : a) {
        auto it = b.find(qid);
        if (it == b.end()) throw std::invalid_argument("paired_t_test: query '" + qid + "' unpaired");
        va.push_back(v);
        vb.push_back(it->second);
    }
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: query sets differ");
    return paired_t_test(va, vb);
}

std::string format_metrics_table(const MetricsReport& mrr, const MetricsReport& recall) {
    std::ostringstream out;
    const auto mrr_name = "MRR@" + std::to_string(mrr.k);
    const auto rec_name = "Recall@" + std::to_string(recall.k);
    out << std::left << std::setw(10) << "Lang" << std::right << std::setw(10) << mrr_name
        << std::setw(12) << rec_name << std::setw(8) << "#Q" << '\n';
    out << std::fixed << std::setprecision(1);
    for (const auto& [lang, value] : mrr.per_language) {
        auto r = recall.per_language.find(lang);
        out << std::left << std::setw(10) << lang << std::right << std::setw(10) << 100.0 * value
            << std::setw(12) << (r == recall.per_language.end() ? 0.0 : 100.0 * r->second) << std::setw(8)
            << mrr.queries_per_language.at(lang) << '\n';
    }
    out << std::left << std::setw(10) << "all" << std::right << std::setw(10) << 100.0 * mrr.mean
        << std::setw(12) << 100.0 * recall.mean << std::setw(8) << mrr.per_query.size() << '\n';
    return out.str();
}

}  // namespace lexmine
