#include "lexmine/error.hpp"
#include "lexmine/mining.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <set>

using namespace lexmine;

namespace {

RankedList ranked(const std::vector<std::string>& ids) {
    RankedList out;
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], static_cast<double>(ids.size() - i)});
    return out;
}

MiningConfig config(std::size_t S, std::size_t L) {
    MiningConfig c;
    c.S = S;
    c.L = L;
    return c;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

Corpus numbered_corpus(std::size_t n) {
    Corpus c;
    for (std::size_t i = 0; i < n; ++i) c.add(Passage{"p" + std::to_string(i), "text", "en"});
    return c;
}

struct Fixture {
    RankedList sparse, dense;
    MiningConfig cfg;
};

Fixture random_fixture(Rng& rng) {
    Fixture f;
    const auto L = 1 + uniform_index(rng, 50);
    f.cfg = config(1 + uniform_index(rng, L), L);
    const auto universe = 1 + uniform_index(rng, 80);
    f.sparse = oracle::random_ranking(rng, universe, uniform_index(rng, L + 1));
    f.dense = oracle::random_ranking(rng, universe, uniform_index(rng, L + 1));
    return f;
}

}  // namespace

TEST_CASE("mine_pairs: agreement") {
    auto l = ranked({"p1", "p2", "p3", "p4"});
    auto m = mine_pairs(l, l, config(2, 4));
    CHECK(m.positive_ids() == std::vector<std::string>{"p1", "p2"});
    CHECK(m.negatives.empty());
}

TEST_CASE("mine_pairs: partial overlap") {
    auto m = mine_pairs(ranked({"p1", "p2", "p3", "p4"}), ranked({"p2", "p5", "p1", "p6"}), config(2, 4));
    CHECK(m.positive_ids() == std::vector<std::string>{"p2"});
    CHECK(m.negative_ids() == std::vector<std::string>{"p5"});
    CHECK(m.positives.front().best_rank == 1);
    CHECK(m.negatives.front().best_rank == 2);
}

TEST_CASE("mine_pairs: disjoint lists") {
    auto m = mine_pairs(ranked({"a", "b"}), ranked({"c", "d"}), config(1, 2));
    CHECK(m.positives.empty());
    CHECK(as_set(m.negative_ids()) == std::set<std::string>{"a", "c"});
}

TEST_CASE("mine_pairs: configuration errors") {
    auto l = ranked({"a"});
    CHECK_THROWS_AS(mine_pairs(l, l, config(3, 2)), ConfigError);
    CHECK_THROWS_AS(mine_pairs(l, l, config(0, 2)), ConfigError);
    CHECK_NOTHROW(mine_pairs(l, l, config(2, 2)));
    CHECK(mine_pairs({}, {}, config(1, 1)).positives.empty());
}

TEST_CASE("mine_pairs: negatives ordered by best rank then id") {
    auto m = mine_pairs(ranked({"z", "y", "a"}), ranked({"b", "c", "x"}), config(3, 3));
    CHECK(m.negative_ids() == std::vector<std::string>{"b", "z", "c", "y", "a", "x"});
}

TEST_CASE("property: mine_pairs equals the set-comprehension oracle") {
    Rng rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto f = random_fixture(rng);
        const auto got = mine_pairs(f.sparse, f.dense, f.cfg);
        const auto want = oracle::mine(f.sparse, f.dense, f.cfg.S);
        CHECK(as_set(got.positive_ids()) == want.positives);
        CHECK(as_set(got.negative_ids()) == want.negatives);
        CHECK(got.positives.size() == want.positives.size());
        CHECK(got.negatives.size() == want.negatives.size());
    }
}

TEST_CASE("property: positives and negatives are disjoint, positives in both top-S") {
    Rng rng(103);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto f = random_fixture(rng);
        const auto m = mine_pairs(f.sparse, f.dense, f.cfg);
        const auto pos = as_set(m.positive_ids());
        for (const auto& n : m.negative_ids()) CHECK_FALSE(pos.count(n));
        for (const auto& p : m.positives) CHECK(p.best_rank <= f.cfg.S);
    }
}

TEST_CASE("property: shrinking S never adds positives") {
    Rng rng(107);
    for (int trial = 0; trial < 500; ++trial) {
        const auto f = random_fixture(rng);
        const auto big = as_set(mine_pairs(f.sparse, f.dense, f.cfg).positive_ids());
        for (std::size_t s = 1; s < f.cfg.S; ++s) {
            for (const auto& id : mine_pairs(f.sparse, f.dense, config(s, f.cfg.L)).positive_ids())
                CHECK(big.count(id));
        }
    }
}

TEST_CASE("property: mine_pairs is symmetric in its inputs") {
    Rng rng(109);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto f = random_fixture(rng);
        const auto ab = mine_pairs(f.sparse, f.dense, f.cfg);
        const auto ba = mine_pairs(f.dense, f.sparse, f.cfg);
        CHECK(ab.positive_ids() == ba.positive_ids());
        CHECK(as_set(ab.negative_ids()) == as_set(ba.negative_ids()));
    }
}

TEST_CASE("assemble_mined_sample: one positive") {
    const auto pool = numbered_corpus(10);
    MinedSets sets{{{"p2", 1}}, {{"p5", 2}}};
    MiningConfig cfg = config(2, 4);
    cfg.n_random_negatives = 1;
    Rng rng(1);
    auto out = assemble_mined_sample(Query{"q", "x", "en"}, sets, pool, rng, cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0].positive == "p2");
    CHECK(out[0].hard_negatives == std::vector<std::string>{"p5"});
    REQUIRE(out[0].random_negatives.size() == 1);
    CHECK(out[0].random_negatives[0] != "p2");
    CHECK(out[0].random_negatives[0] != "p5");
    CHECK_NOTHROW(out[0].validate());
}

TEST_CASE("assemble_mined_sample: no positives gives no samples") {
    Rng rng(1);
    CHECK(assemble_mined_sample(Query{"q", "x", "en"}, MinedSets{{}, {{"p1", 1}}}, numbered_corpus(3), rng, {})
              .empty());
}

TEST_CASE("assemble_mined_sample: samples share the hard-negative list") {
    const auto pool = numbered_corpus(30);
    MinedSets sets{{{"p1", 1}, {"p2", 1}, {"p3", 2}}, {{"p9", 1}, {"p8", 2}, {"p7", 3}}};
    MiningConfig cfg = config(3, 6);
    cfg.max_hard_negatives = 2;
    cfg.n_random_negatives = 4;
    Rng rng(3);
    auto out = assemble_mined_sample(Query{"q", "x", "en"}, sets, pool, rng, cfg);
    REQUIRE(out.size() == 3);
    const std::set<std::string> mined{"p1", "p2", "p3", "p7", "p8", "p9"};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(out[i].positive == sets.positives[i].id);
        CHECK(out[i].hard_negatives == std::vector<std::string>{"p9", "p8"});
        CHECK(out[i].random_negatives.size() == 4);
        for (const auto& r : out[i].random_negatives) CHECK_FALSE(mined.count(r));
        CHECK(as_set(out[i].random_negatives).size() == 4);
    }
}

TEST_CASE("draw_random_negatives: small pools and exclusion") {
    const auto pool = numbered_corpus(5);
    Rng rng(9);
    auto all = draw_random_negatives(pool, {"p0", "p1"}, 10, rng);
    CHECK(as_set(all) == std::set<std::string>{"p2", "p3", "p4"});
    CHECK(draw_random_negatives(pool, {}, 0, rng).empty());
    CHECK(draw_random_negatives(Corpus{}, {}, 3, rng).empty());
    for (int i = 0; i < 200; ++i) {
        auto r = draw_random_negatives(pool, {"p3"}, 2, rng);
        CHECK(r.size() == 2);
        CHECK(r[0] != r[1]);
        CHECK(as_set(r).count("p3") == 0);
    }
    Rng a(4), b(4);
    CHECK(draw_random_negatives(numbered_corpus(100), {}, 5, a) == draw_random_negatives(numbered_corpus(100), {}, 5, b));
}

TEST_CASE("hybrid_fuse: identical rankings are preserved") {
    RankedList l{{"a", 3.0}, {"b", 2.5}, {"c", 0.1}};
    for (auto mode : {FusionMode::sum, FusionMode::product}) {
        auto fused = hybrid_fuse(l, l, mode, 10);
        REQUIRE(fused.size() == 3);
        CHECK(fused[0].id == "a");
        CHECK(fused[1].id == "b");
        CHECK(fused[2].id == "c");
    }
}

TEST_CASE("hybrid_fuse: sum tie broken by id") {
    auto fused = hybrid_fuse({{"a", 1.0}, {"b", 0.0}}, {{"b", 1.0}, {"a", 0.0}}, FusionMode::sum, 5);
    REQUIRE(fused.size() == 2);
    CHECK(fused[0].id == "a");
    CHECK(fused[1].id == "b");
    CHECK(fused[0].score == 1.0);
    CHECK(fused[1].score == 1.0);
}

TEST_CASE("hybrid_fuse: missing ids count as zero") {
    RankedList sparse{{"a", 5.0}, {"b", 1.0}};
    RankedList dense{{"b", 0.3}, {"c", 0.1}};
    auto prod = hybrid_fuse(sparse, dense, FusionMode::product, 5);
    REQUIRE(prod.size() == 3);
    for (const auto& e : prod) CHECK(e.score == 0.0);
    CHECK(prod[0].id == "a");
    auto sum = hybrid_fuse(sparse, dense, FusionMode::sum, 5);
    REQUIRE(sum.size() == 3);
    CHECK(sum[0].id == "a");
    CHECK(sum[0].score == 1.0);
    CHECK(sum[1].id == "b");
    CHECK(sum[1].score == 1.0);
    CHECK(sum[2].id == "c");
    CHECK(sum[2].score == 0.0);
}

TEST_CASE("hybrid_fuse: all-equal scores normalise to one") {
    auto fused = hybrid_fuse({{"a", 2.0}, {"b", 2.0}}, {{"a", 0.4}}, FusionMode::sum, 5);
    REQUIRE(fused.size() == 2);
    CHECK(fused[0].id == "a");
    CHECK(fused[0].score == 2.0);
    CHECK(fused[1].score == 1.0);
    CHECK(hybrid_fuse({}, {}, FusionMode::sum, 3).empty());
    CHECK(hybrid_fuse({{"a", 1}, {"b", 0.5}, {"c", 0.2}}, {}, FusionMode::sum, 2).size() == 2);
}

TEST_CASE("mine_fused: top S positive, below L negative") {
    auto m = mine_fused(ranked({"a", "b", "c", "d", "e"}), config(2, 3));
    CHECK(m.positive_ids() == std::vector<std::string>{"a", "b"});
    CHECK(m.negative_ids() == std::vector<std::string>{"d", "e"});
    CHECK(m.negatives.front().best_rank == 4);
    CHECK_THROWS_AS(mine_fused({}, config(2, 1)), ConfigError);
}

TEST_CASE("samples JSONL round trip") {
    std::vector<TrainingSample> samples{{Query{"q1", "héllo \"x\"", "en"}, "p1", {"p2", "p3"}, {"p4"}},
                                        {Query{"q2", "y", "sw"}, "p5", {}, {}}};
    const auto text = format_samples_jsonl(samples, "mined");
    CHECK(text.find("\"source\":\"mined\"") != std::string::npos);
    CHECK(text.rfind("{\"query_id\":\"q1\",\"query_text\"", 0) == 0);
    auto back = parse_samples_jsonl(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].source == "mined");
    // lang is not persisted
    CHECK(back[0].sample.query.id == "q1");
    CHECK(back[0].sample.query.text == samples[0].query.text);
    CHECK(back[0].sample.hard_negatives == samples[0].hard_negatives);
    CHECK(back[1].sample.positive == "p5");
    CHECK(format_samples_jsonl({}, "mined").empty());
}

TEST_CASE("samples JSONL errors carry the line number") {
    const std::string bad = "\n{\"query_id\":\"q\"}\n";
    try {
        parse_samples_jsonl(bad, "mined.jsonl");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("mined.jsonl:2") != std::string::npos);
    }
    const std::string dup =
        R"({"query_id":"q","query_text":"x","positive":"a","hard_negatives":["a"],"random_negatives":[],"source":"mined"})";
    CHECK_THROWS_AS(parse_samples_jsonl(dup), DataError);
}
