#include "lexmine/error.hpp"
#include "lexmine/sparse.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace lexmine;

namespace {

Corpus make_corpus(const std::vector<std::pair<std::string, std::string>>& docs) {
    Corpus c;
    for (const auto& [id, text] : docs) c.add(Passage{id, text, "en"});
    return c;
}

Corpus random_corpus(Rng& rng, std::size_t max_docs, std::size_t vocab) {
    Corpus c;
    const auto n = 1 + uniform_index(rng, max_docs);
    for (std::size_t d = 0; d < n; ++d) {
        std::string text;
        const auto len = 1 + uniform_index(rng, 15);
        for (std::size_t i = 0; i < len; ++i) text += "w" + std::to_string(uniform_index(rng, vocab)) + " ";
        c.add(Passage{"d" + std::to_string(1000 + uniform_index(rng, 9000)) + "-" + std::to_string(d), text, "en"});
    }
    return c;
}

std::vector<std::string> random_query(Rng& rng, std::size_t vocab) {
    std::vector<std::string> q;
    const auto len = 1 + uniform_index(rng, 4);
    for (std::size_t i = 0; i < len; ++i) q.push_back("w" + std::to_string(uniform_index(rng, vocab + 3)));
    return q;
}

void check_same_ranking(const RankedList& got, const RankedList& want) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].id == want[i].id);
        CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
    }
}

}  // namespace

TEST_CASE("build: one document") {
    auto idx = InvertedIndex::build(make_corpus({{"d", "a b a"}}));
    CHECK(idx.size() == 1);
    CHECK(idx.avgdl() == 3.0);
    CHECK(idx.doc_len(0) == 3);
    auto a = idx.postings("a");
    REQUIRE(a.size() == 1);
    CHECK(idx.doc_id(a[0].doc) == "d");
    CHECK(a[0].tf == 2);
    REQUIRE(idx.postings("b").size() == 1);
    CHECK(idx.postings("b")[0].tf == 1);
    CHECK(idx.postings("c").empty());
}

TEST_CASE("build: two documents") {
    auto idx = InvertedIndex::build(make_corpus({{"d1", "x"}, {"d2", "x y"}}));
    CHECK(idx.size() == 2);
    CHECK(idx.avgdl() == 1.5);
    CHECK(idx.df("x") == 2);
    CHECK(idx.df("y") == 1);
    CHECK(idx.vocabulary_size() == 2);
}

TEST_CASE("build: deterministic and rejects empty corpus") {
    auto c = make_corpus({{"b", "x y z"}, {"a", "y y"}, {"c", "z"}});
    CHECK(InvertedIndex::build(c) == InvertedIndex::build(c));
    CHECK_THROWS_AS(InvertedIndex::build(Corpus{}), DataError);
    BM25Params bad;
    bad.b = 1.5;
    CHECK_THROWS_AS(InvertedIndex::build(c, {}, bad), ConfigError);
    bad = {};
    bad.k1 = -0.1;
    CHECK_THROWS_AS(InvertedIndex::build(c, {}, bad), ConfigError);
}

TEST_CASE("property: index statistics") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const auto c = random_corpus(rng, 60, 20);
        const auto idx = InvertedIndex::build(c);
        double total = 0;
        for (std::size_t d = 0; d < idx.size(); ++d) total += idx.doc_len(d);
        CHECK(total / static_cast<double>(idx.size()) == doctest::Approx(idx.avgdl()).epsilon(1e-12));
        for (std::size_t v = 0; v < 23; ++v) {
            auto ps = idx.postings("w" + std::to_string(v));
            for (std::size_t i = 1; i < ps.size(); ++i) CHECK(idx.doc_id(ps[i - 1].doc) < idx.doc_id(ps[i].doc));
            for (const auto& p : ps) CHECK(p.doc < idx.size());
        }
    }
}

TEST_CASE("bm25_score: the ln 2 case") {
    // N=2, df(x)=1, dl=avgdl=1: idf = ln(1 + 1.5/1.5) = ln 2 and the tf factor is 1.
    auto idx = InvertedIndex::build(make_corpus({{"d1", "x"}, {"d2", "y"}}));
    CHECK(std::abs(bm25_score(idx, {"x"}, "d1") - 0.6931471805599453) < 1e-9);
    CHECK(std::abs(bm25_score(idx, {"x"}, "d1") - std::log(2.0)) < 1e-12);
}

TEST_CASE("bm25_score: conventions") {
    auto idx = InvertedIndex::build(make_corpus({{"d1", "x"}, {"d2", "y"}}));
    CHECK(bm25_score(idx, {"z"}, "d1") == 0.0);
    CHECK(bm25_score(idx, {"y"}, "d1") == 0.0);
    CHECK(bm25_score(idx, {"x", "x"}, "d1") == bm25_score(idx, {"x"}, "d1"));
    CHECK(bm25_score(idx, {}, "d1") == 0.0);
    CHECK_THROWS_AS(bm25_score(idx, {"x"}, "nope"), DataError);
}

TEST_CASE("bm25_score: hand-computed two-term case") {
    // d1 = "a a b" (dl 3), d2 = "b c" (dl 2); avgdl 2.5; N 2; df(a)=1, df(b)=2.
    auto idx = InvertedIndex::build(make_corpus({{"d1", "a a b"}, {"d2", "b c"}}));
    const double k1 = 0.9, b = 0.4, avgdl = 2.5;
    const double idf_a = std::log(1 + 1.5 / 1.5), idf_b = std::log(1 + 0.5 / 2.5);
    const double norm = 1 - b + b * 3 / avgdl;
    const double expected = idf_a * 2 * (k1 + 1) / (2 + k1 * norm) + idf_b * 1 * (k1 + 1) / (1 + k1 * norm);
    CHECK(bm25_score(idx, {"a", "b"}, "d1") == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("search_sparse: edge cases") {
    auto idx = InvertedIndex::build(make_corpus({{"b", "x"}, {"a", "x"}, {"c", "y"}}));
    CHECK(search_sparse(idx, std::vector<std::string>{"zzz"}, 5).empty());
    auto tie = search_sparse(idx, std::vector<std::string>{"x"}, 5);
    REQUIRE(tie.size() == 2);
    CHECK(tie[0].id == "a");
    CHECK(tie[1].id == "b");
    CHECK(tie[0].score == tie[1].score);
    CHECK(search_sparse(idx, std::vector<std::string>{"x"}, 1).size() == 1);
    CHECK(search_sparse(idx, Query{"q", "X", "en"}, 5) == tie);
}

TEST_CASE("property: search_sparse equals exhaustive scoring") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const auto c = random_corpus(rng, 200, 25);
        const auto idx = InvertedIndex::build(c);
        for (int q = 0; q < 10; ++q) {
            const auto query = random_query(rng, 25);
            const auto got = search_sparse(idx, query, c.size());
            check_same_ranking(got, oracle::bm25_rank(c, query, c.size()));
            CHECK(is_ranked(got));
            for (const auto& e : got) CHECK(bm25_score(idx, query, e.id) == e.score);
        }
    }
}

TEST_CASE("property: top-k is a prefix of top-k'") {
    Rng rng(29);
    for (int trial = 0; trial < 30; ++trial) {
        const auto c = random_corpus(rng, 80, 10);
        const auto idx = InvertedIndex::build(c);
        const auto query = random_query(rng, 10);
        const auto full = search_sparse(idx, query, c.size());
        for (std::size_t k = 1; k <= full.size(); ++k) {
            const auto part = search_sparse(idx, query, k);
            REQUIRE(part.size() == k);
            CHECK(std::equal(part.begin(), part.end(), full.begin()));
        }
    }
}

TEST_CASE("property: score is non-decreasing in tf at fixed length") {
    // Replace filler tokens with the query term one at a time; dl stays constant.
    for (int len = 2; len <= 12; ++len) {
        double previous = -1;
        for (int tf = 1; tf <= len; ++tf) {
            std::string doc;
            for (int i = 0; i < len; ++i) doc += (i < tf ? "t " : "f" + std::to_string(i) + " ");
            auto idx = InvertedIndex::build(make_corpus({{"d", doc}, {"e", "t g h"}, {"f", "k"}}));
            const double s = bm25_score(idx, {"t"}, "d");
            CHECK(s >= previous);
            previous = s;
        }
    }
}

TEST_CASE("custom parameters follow the formula") {
    BM25Params p;
    p.k1 = 1.2;
    p.b = 0.75;
    Rng rng(31);
    const auto c = random_corpus(rng, 40, 8);
    const auto idx = InvertedIndex::build(c, {}, p);
    const auto query = random_query(rng, 8);
    check_same_ranking(search_sparse(idx, query, c.size()), oracle::bm25_rank(c, query, c.size(), 1.2, 0.75));
}
