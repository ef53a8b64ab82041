#include "lexmine/dense.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace lexmine;
using lexmine::testing::random_dense_fixture;

namespace {

Corpus corpus_of(const std::vector<std::string>& texts) {
    Corpus c;
    for (std::size_t i = 0; i < texts.size(); ++i) c.add(Passage{"p" + std::to_string(i), texts[i], "en"});
    return c;
}

EncoderParams<double> params_for(const Corpus& c, RowIndex dim = 4, bool shared = true, std::uint64_t seed = 1) {
    return EncoderParams<double>::init(build_vocabulary(c, {}, {}), dim, shared, seed);
}

/// Dot products with plain loops over the token rows.
RankedList brute_force_dense(const EncoderParams<double>& params, const Corpus& corpus,
                             const std::vector<std::string>& query) {
    auto mean = [&](const std::vector<std::string>& toks, EncoderSide side) {
        std::vector<double> v(static_cast<std::size_t>(params.dim()), 0.0);
        std::size_t n = 0;
        for (const auto& t : toks) {
            auto it = params.vocab.find(t);
            if (it == params.vocab.end()) continue;
            ++n;
            for (RowIndex c = 0; c < params.dim(); ++c) v[c] += params.table(side)(it->second, c);
        }
        for (auto& x : v) x = n ? x / static_cast<double>(n) : 0.0;
        return v;
    };
    const auto q = mean(query, EncoderSide::query);
    RankedList out;
    for (const auto& p : corpus) {
        const auto v = mean(tokenize(p.text), EncoderSide::passage);
        double s = 0;
        for (std::size_t c = 0; c < v.size(); ++c) s += q[c] * v[c];
        out.push_back({p.id, s});
    }
    return oracle::sort_ranked(out);
}

}  // namespace

TEST_CASE("init: shape, range, determinism") {
    auto p = EncoderParams<double>::init({"b", "a", "b", "c"}, 16, true, 3);
    CHECK(p.tokens == std::vector<std::string>{"a", "b", "c"});
    CHECK(p.rows() == 3);
    CHECK(p.dim() == 16);
    CHECK(p.passage_table.size() == 0);
    CHECK(p.query_table.cwiseAbs().maxCoeff() <= 0.25);
    CHECK(p.same_weights(EncoderParams<double>::init({"a", "b", "c"}, 16, true, 3)));
    CHECK_FALSE(p.same_weights(EncoderParams<double>::init({"a", "b", "c"}, 16, true, 4)));
    auto u = EncoderParams<double>::init({"a"}, 2, false, 3);
    CHECK(u.passage_table.rows() == 1);
    CHECK(u.query_table != u.passage_table);
    CHECK_THROWS_AS(EncoderParams<double>::init({"a"}, 0, true, 3), ConfigError);
}

TEST_CASE("encode: definition") {
    auto p = EncoderParams<double>::init({"a", "b"}, 3, true, 5);
    CHECK(encode(p, {"a"}) == p.query_table.row(0).transpose());
    CHECK(encode(p, {}).isZero());
    CHECK(encode(p, {"zz", "yy"}).isZero());
    CHECK(encode(p, {"a", "b", "a"}).isApprox(encode(p, {"b", "a", "a"}), 0.0));
    const EmbeddingVector<double> expected = (2 * p.query_table.row(0) + p.query_table.row(1)).transpose() / 3.0;
    CHECK(encode(p, {"a", "b", "a", "oov"}).isApprox(expected, 1e-15));
}

TEST_CASE("encode works for float tables") {
    auto p = EncoderParams<float>::init({"a", "b"}, 3, true, 5);
    EmbeddingVector<float> v = encode(p, {"a", "b"});
    CHECK(v.size() == 3);
    CHECK(similarity(v, v) > 0.0f);
}

TEST_CASE("similarity: dot product") {
    Eigen::Vector2d q(1, 2), p(3, -1);
    CHECK(similarity(q, p) == 1.0);
    CHECK(similarity(Eigen::Vector2d::Zero(), p) == 0.0);
    CHECK_THROWS_AS(similarity(Eigen::VectorXd(q), Eigen::VectorXd::Ones(3)), std::invalid_argument);
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        Eigen::VectorXd a(5), b(5);
        for (int j = 0; j < 5; ++j) a(j) = uniform_real(rng, -1, 1), b(j) = uniform_real(rng, -1, 1);
        CHECK(similarity(a, b) == similarity(b, a));
    }
}

TEST_CASE("build_dense_index: rows follow corpus order") {
    auto c = corpus_of({"a b", "c", "a a d"});
    auto p = params_for(c);
    auto idx = build_dense_index(p, c, TokenizerConfig{});
    REQUIRE(idx.size() == 3);
    CHECK(idx.ids == std::vector<std::string>{"p0", "p1", "p2"});
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(idx.vectors.row(i).transpose().isApprox(encode(p, tokenize(c[i].text), EncoderSide::passage), 0.0));
    CHECK(idx.params_version == p.version);
    CHECK_THROWS_AS(build_dense_index(p, Corpus{}, TokenizerConfig{}), DataError);

    const auto encoded = EncodedCorpus::build(p, c, {});
    auto parallel = build_dense_index(p, c, encoded, 4);
    CHECK(parallel.vectors == idx.vectors);
}

TEST_CASE("search_dense: conventions") {
    auto c = corpus_of({"a b", "c", "a a d", "b"});
    auto p = params_for(c);
    auto idx = build_dense_index(p, c, TokenizerConfig{});

    auto zero = search_dense(idx, p, std::vector<std::string>{"unknown"}, 10);
    REQUIRE(zero.size() == 4);
    for (std::size_t i = 0; i < zero.size(); ++i) {
        CHECK(zero[i].score == 0.0);
        CHECK(zero[i].id == "p" + std::to_string(i));
    }
    auto top5 = search_dense(idx, p, std::vector<std::string>{"a"}, 5);
    auto top2 = search_dense(idx, p, std::vector<std::string>{"a"}, 2);
    CHECK(std::equal(top2.begin(), top2.end(), top5.begin()));
    CHECK(search_dense(idx, p, Query{"q", "A", "en"}, TokenizerConfig{}, 5) == top5);
    CHECK_THROWS_AS(search_dense_vector(idx, Eigen::VectorXd::Zero(7), 3), std::invalid_argument);
}

TEST_CASE("property: search_dense equals brute force on corpora up to 500 passages") {
    Rng rng(41);
    for (int trial = 0; trial < 12; ++trial) {
        const auto n = 1 + uniform_index(rng, 500);
        std::vector<std::string> texts;
        for (std::size_t i = 0; i < n; ++i) {
            std::string t;
            const auto len = 1 + uniform_index(rng, 8);
            for (std::size_t j = 0; j < len; ++j) t += "w" + std::to_string(uniform_index(rng, 40)) + " ";
            texts.push_back(t);
        }
        const auto c = corpus_of(texts);
        const auto p = params_for(c, 8, trial % 2 == 0, trial);
        const auto idx = build_dense_index(p, c, TokenizerConfig{});
        for (int q = 0; q < 5; ++q) {
            std::vector<std::string> query;
            for (int j = 0; j < 3; ++j) query.push_back("w" + std::to_string(uniform_index(rng, 45)));
            const auto got = search_dense(idx, p, query, n);
            const auto want = brute_force_dense(p, c, query);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].id == want[i].id);
                CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("stale index detection and refresh") {
    auto c = corpus_of({"a b", "c d", "a c"});
    auto p = params_for(c);
    auto opt = OptimizerState<double>::init(p, {});
    const auto encoded = EncodedCorpus::build(p, c, {});
    auto stale = build_dense_index(p, c, encoded);
    std::vector<TrainingSample> batch{{Query{"q", "a", "en"}, "p0", {"p1"}, {}}};
    train_step(p, opt, std::span<const TrainingSample>(batch), encoded, {});

    CHECK_THROWS_AS(search_dense(stale, p, std::vector<std::string>{"a"}, 2), std::logic_error);
    CHECK_NOTHROW(search_dense(stale, p, std::vector<std::string>{"a"}, 2, StalePolicy::allow));
    auto fresh = build_dense_index(p, c, encoded);
    CHECK_NOTHROW(search_dense(fresh, p, std::vector<std::string>{"a"}, 2));
    // p0 contains the trained token "a"
    CHECK_FALSE(fresh.vectors.row(0).isApprox(stale.vectors.row(0), 0.0));
}

// ---------------------------------------------------------------------------
// InfoNCE

TEST_CASE("infonce_from_scores: reference values") {
    // Reference values from a 40-digit mpmath evaluation.
    const std::vector<double> uniform{0.3, 0.3, 0.3, 0.3};
    CHECK(std::abs(infonce_from_scores<double>(uniform) - 1.3862943611198906) < 1e-12);
    const std::vector<double> s{2.0, 1.0, 0.5};
    const double loss = infonce_from_scores<double>(s);
    CHECK(std::abs(loss - 0.46436878410794484) < 1e-12);
    CHECK(std::abs(loss - 0.464370) < 5e-6);
    CHECK_THROWS_AS(infonce_from_scores<double>(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("property: loss is positive, monotone and shift-invariant") {
    Rng rng(43);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> s(2 + uniform_index(rng, 6));
        for (auto& x : s) x = uniform_real(rng, -5, 5);
        const double base = infonce_from_scores<double>(s);
        CHECK(base > 0.0);
        CHECK(std::isfinite(base));

        auto up = s;
        up[0] += 0.5;
        CHECK(infonce_from_scores<double>(up) < base);
        const auto j = 1 + uniform_index(rng, s.size() - 1);
        auto neg = s;
        neg[j] += 0.5;
        CHECK(infonce_from_scores<double>(neg) > base);

        for (double c : {-1000.0, -3.5, 7.25, 1000.0}) {
            auto shifted = s;
            for (auto& x : shifted) x += c;
            CHECK(infonce_from_scores<double>(shifted) == doctest::Approx(base).epsilon(1e-9));
        }
    }
    const std::vector<double> huge{1e4, 1e4 - 1, -1e4};
    CHECK(std::isfinite(infonce_from_scores<double>(huge)));
}

TEST_CASE("infonce_loss: value matches scores of the candidates") {
    auto f = random_dense_fixture(5);
    const auto encoded = EncodedCorpus::build(f.params, f.corpus, {});
    const auto lg = infonce_loss(f.params, f.sample, f.in_batch, encoded, {});
    const auto qv = encode(f.params, tokenize(f.sample.query.text));
    std::vector<double> scores;
    for (const auto& id : candidate_passages(f.sample, f.in_batch))
        scores.push_back(similarity(qv, encode(f.params, tokenize(f.corpus.find(id)->text), EncoderSide::passage)));
    CHECK(lg.loss == doctest::Approx(infonce_from_scores<double>(scores)).epsilon(1e-12));
    CHECK(lg.loss == infonce_loss(f.params, f.sample, f.in_batch, f.corpus, {}).loss);
}

TEST_CASE("gradient check: shared and untied tables") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        for (bool shared : {true, false}) {
            auto f = random_dense_fixture(seed, shared);
            const auto encoded = EncodedCorpus::build(f.params, f.corpus, {});
            const auto r = lexmine::testing::check_infonce_gradient(f.params, f.sample, f.in_batch, encoded, {});
            CHECK(r.max_rel_error < 1e-4);
            CHECK(r.entries > 0);
        }
    }
}

TEST_CASE("batched gradient equals the mean of per-sample gradients") {
    for (bool shared : {true, false}) {
        auto f = random_dense_fixture(77, shared);
        const auto encoded = EncodedCorpus::build(f.params, f.corpus, {});
        std::vector<TrainingSample> batch;
        Rng rng(5);
        for (std::size_t i = 0; i < 4; ++i) {
            auto ids = sample_without_replacement(rng, f.corpus.size(), 4);
            TrainingSample s{Query{"q" + std::to_string(i % 3), "t" + std::to_string(i) + " t" + std::to_string(2 * i), "en"},
                             f.corpus[ids[0]].id, {f.corpus[ids[1]].id, f.corpus[ids[2]].id}, {f.corpus[ids[3]].id}};
            batch.push_back(s);  // samples 0 and 3 share a query id
        }
        const auto grad = batch_gradient(f.params, std::span<const TrainingSample>(batch), encoded, {});
        EmbeddingTable<double> q = EmbeddingTable<double>::Zero(f.params.rows(), f.params.dim());
        EmbeddingTable<double> p = q;
        double loss = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto others = in_batch_positives(batch, i);
            const auto lg = infonce_loss(f.params, batch[i], others, encoded, {});
            loss += lg.loss / 4;
            for (const auto& [r, g] : lg.query_rows) q.row(r) += g.transpose() / 4;
            for (const auto& [r, g] : lg.passage_rows) p.row(r) += g.transpose() / 4;
        }
        CHECK(grad.mean_loss == doctest::Approx(loss).epsilon(1e-12));
        CHECK((grad.query_table - q).cwiseAbs().maxCoeff() < 1e-12);
        if (!shared) CHECK((grad.passage_table - p).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("candidates and in-batch positives") {
    TrainingSample s{Query{"q", "x", "en"}, "a", {"b", "c"}, {"d"}};
    const std::vector<std::string> in_batch{"a", "e", "b", "f", "g"};
    CHECK(candidate_passages(s, in_batch) == std::vector<std::string>{"a", "b", "c", "d", "e", "f", "g"});
    CHECK(candidate_passages(s, in_batch, 1) == std::vector<std::string>{"a", "b", "c", "d", "e"});

    std::vector<TrainingSample> batch{s, {Query{"q", "x", "en"}, "z", {}, {}}, {Query{"r", "y", "en"}, "w", {}, {}}};
    CHECK(in_batch_positives(batch, 0) == std::vector<std::string>{"w"});
    CHECK(in_batch_positives(batch, 2) == std::vector<std::string>{"a", "z"});
}

TEST_CASE("TrainingSample::validate") {
    CHECK_NOTHROW((TrainingSample{Query{"q", "x", "en"}, "a", {"b"}, {"c"}}.validate()));
    CHECK_THROWS_AS((TrainingSample{Query{"q", "x", "en"}, "a", {"a"}, {}}.validate()), DataError);
    CHECK_THROWS_AS((TrainingSample{Query{"q", "x", "en"}, "a", {"b"}, {"b"}}.validate()), DataError);
    CHECK_THROWS_AS((TrainingSample{Query{"q", "x", "en"}, "", {}, {}}.validate()), DataError);
}

// ---------------------------------------------------------------------------
// Optimisation

TEST_CASE("train_step: zero learning rate leaves weights unchanged") {
    auto f = random_dense_fixture(9);
    AdamConfig cfg;
    cfg.learning_rate = 0.0;
    auto p = f.params;
    auto opt = OptimizerState<double>::init(p, cfg);
    std::vector<TrainingSample> batch{f.sample};
    train_step(p, opt, std::span<const TrainingSample>(batch), f.corpus, {});
    CHECK(p.same_weights(f.params));
    CHECK(p.version == f.params.version + 1);
    CHECK(opt.step == 1);
}

TEST_CASE("train_step: first Adam step moves each entry by lr * g / (|g| + eps)") {
    auto f = random_dense_fixture(13, false);
    const auto encoded = EncodedCorpus::build(f.params, f.corpus, {});
    std::vector<TrainingSample> batch{f.sample};
    const auto grad = batch_gradient(f.params, std::span<const TrainingSample>(batch), encoded, {});
    AdamConfig cfg;
    cfg.learning_rate = 0.05;
    auto p = f.params;
    auto opt = OptimizerState<double>::init(p, cfg);
    train_step(p, opt, std::span<const TrainingSample>(batch), encoded, {});
    auto expect = [&](const EmbeddingTable<double>& before, const EmbeddingTable<double>& after,
                      const EmbeddingTable<double>& g) {
        for (RowIndex r = 0; r < g.rows(); ++r)
            for (RowIndex c = 0; c < g.cols(); ++c) {
                const double step = 0.05 * g(r, c) / (std::abs(g(r, c)) + 1e-8);
                CHECK(after(r, c) == doctest::Approx(before(r, c) - step).epsilon(1e-12));
            }
    };
    expect(f.params.query_table, p.query_table, grad.query_table);
    expect(f.params.passage_table, p.passage_table, grad.passage_table);
}

TEST_CASE("train_step: decoupled weight decay shrinks untouched rows") {
    auto f = random_dense_fixture(15);
    AdamConfig cfg;
    cfg.weight_decay = 0.1;
    cfg.learning_rate = 0.01;
    auto p = f.params;
    auto opt = OptimizerState<double>::init(p, cfg);
    const auto encoded = EncodedCorpus::build(p, f.corpus, {});
    std::vector<TrainingSample> batch{f.sample};
    const auto grad = batch_gradient(p, std::span<const TrainingSample>(batch), encoded, {});
    train_step(p, opt, std::span<const TrainingSample>(batch), encoded, {});
    for (RowIndex r = 0; r < p.rows(); ++r)
        if (grad.query_table.row(r).isZero(0.0))
            CHECK(p.query_table.row(r).isApprox(f.params.query_table.row(r) * (1 - 0.01 * 0.1), 1e-14));
}

TEST_CASE("train_step: repeated batch drives the loss down") {
    auto f = random_dense_fixture(21, true, 8);
    const auto encoded = EncodedCorpus::build(f.params, f.corpus, {});
    std::vector<TrainingSample> batch{f.sample};
    for (std::uint64_t s = 1; s <= 3; ++s) {
        auto extra = random_dense_fixture(21, true, 8).sample;
        extra.query.id += "-" + std::to_string(s);
        extra.query.text = "t" + std::to_string(s) + " t" + std::to_string(s + 4);
        batch.push_back(extra);
    }
    auto p = f.params;
    auto opt = OptimizerState<double>::init(p, {});
    std::vector<double> losses;
    for (int i = 0; i < 50; ++i) losses.push_back(train_step(p, opt, std::span<const TrainingSample>(batch), encoded, {}));
    for (std::size_t i = 41; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1]);
    CHECK(losses.back() < losses.front());
}

TEST_CASE("train_step: identical inputs give bit-identical parameters") {
    auto f = random_dense_fixture(25, false);
    std::vector<TrainingSample> batch{f.sample};
    auto run = [&] {
        auto p = f.params;
        auto opt = OptimizerState<double>::init(p, {});
        for (int i = 0; i < 5; ++i) train_step(p, opt, std::span<const TrainingSample>(batch), f.corpus, {});
        return p;
    };
    const auto a = run(), b = run();
    CHECK(a.same_weights(b));
    CHECK_FALSE(a.same_weights(f.params));
}

TEST_CASE("build_vocabulary: sorted union of passages and queries") {
    auto c = corpus_of({"b a", "c"});
    QuerySet q;
    q.add(Query{"q", "d A", "en"});
    CHECK(build_vocabulary(c, {&q, nullptr}, {}) == std::vector<std::string>{"a", "b", "c", "d"});
}
