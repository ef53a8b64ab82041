#pragma once

#include "lexmine/dense.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lexmine::testing {

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t entries = 0;  ///< entries with a non-negligible gradient
};

/// Central differences of infonce_loss over every entry of every table,
/// compared with the analytic row gradients. The relative error of an entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheck check_infonce_gradient(EncoderParams<double> params, const TrainingSample& sample,
                                        const std::vector<std::string>& in_batch, const EncodedCorpus& encoded,
                                        const TokenizerConfig& tok, double h = 1e-5, double floor = 1e-6) {
    const auto analytic = infonce_loss(params, sample, in_batch, encoded, tok);
    GradCheck out;
    auto check_table = [&](EmbeddingTable<double>& table, const RowGradient<double>& grad) {
        for (RowIndex r = 0; r < table.rows(); ++r) {
            for (RowIndex c = 0; c < table.cols(); ++c) {
                const double saved = table(r, c);
                table(r, c) = saved + h;
                const double up = infonce_loss(params, sample, in_batch, encoded, tok).loss;
                table(r, c) = saved - h;
                const double down = infonce_loss(params, sample, in_batch, encoded, tok).loss;
                table(r, c) = saved;
                const double numeric = (up - down) / (2 * h);
                auto it = grad.find(r);
                const double a = it == grad.end() ? 0.0 : it->second(c);
                const double scale = std::max({std::abs(a), std::abs(numeric), floor});
                out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / scale);
                if (scale > floor) ++out.entries;
            }
        }
    };
    check_table(params.query_table, analytic.query_rows);
    if (!params.shared) check_table(params.passage_table, analytic.passage_rows);
    return out;
}

struct DenseFixture {
    Corpus corpus;
    EncoderParams<double> params;
    TrainingSample sample;
    std::vector<std::string> in_batch;
};

/// Small random vocabulary, corpus, parameters and one sample with hard,
/// random and in-batch negatives. Embeddings are scaled up so the softmax is
/// far from uniform.
inline DenseFixture random_dense_fixture(std::uint64_t seed, bool shared = true, RowIndex dim = 6) {
    Rng rng(seed);
    DenseFixture f;
    const std::size_t vocab = 12 + uniform_index(rng, 10);
    auto word = [&] { return "t" + std::to_string(uniform_index(rng, vocab)); };
    const std::size_t n_passages = 8 + uniform_index(rng, 6);
    for (std::size_t i = 0; i < n_passages; ++i) {
        std::string text;
        const auto len = 1 + uniform_index(rng, 6);
        for (std::size_t j = 0; j < len; ++j) text += word() + " ";
        f.corpus.add(Passage{"p" + std::to_string(i), text, "en"});
    }
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < vocab; ++i) tokens.push_back("t" + std::to_string(i));
    f.params = EncoderParams<double>::init(tokens, dim, shared, derive_seed(seed, "params"));
    f.params.query_table *= 3.0;
    if (!shared) f.params.passage_table *= 3.0;

    auto order = sample_without_replacement(rng, n_passages, n_passages);
    std::size_t next = 0;
    auto take = [&](std::size_t n) {
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n && next < order.size(); ++i) ids.push_back(f.corpus[order[next++]].id);
        return ids;
    };
    std::string qtext;
    const auto qlen = 1 + uniform_index(rng, 4);
    for (std::size_t j = 0; j < qlen; ++j) qtext += word() + " ";
    qtext += "oov";
    f.sample.query = Query{"q" + std::to_string(seed), qtext, "en"};
    f.sample.positive = take(1).front();
    f.sample.hard_negatives = take(uniform_index(rng, 4));
    f.sample.random_negatives = take(uniform_index(rng, 3));
    f.in_batch = take(uniform_index(rng, 4));
    return f;
}

}  // namespace lexmine::testing
