#pragma once

// Dual-encoder dense retriever: a mean-pooled token-embedding table, dot-product
// similarity, InfoNCE training with analytic gradients, and an exact top-k index.
// Everything numeric is templated on the scalar type; the pipeline uses double.

#include "lexmine/corpus.hpp"
#include "lexmine/error.hpp"
#include "lexmine/parallel.hpp"
#include "lexmine/random.hpp"
#include "lexmine/ranking.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace lexmine {

using RowIndex = Eigen::Index;

template <typename Scalar>
using EmbeddingTable = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using EmbeddingVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class EncoderSide { query, passage };

/// Token embedding table(s) for E_Q and E_P.
///
/// With `shared` set, one table serves both encoders and `passage_table` stays
/// empty. `version` is bumped by every optimizer update and is what a
/// DenseIndex records to detect staleness.
template <typename Scalar>
struct EncoderParams {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, RowIndex> vocab;
    EmbeddingTable<Scalar> query_table;
    EmbeddingTable<Scalar> passage_table;
    bool shared = true;
    std::uint64_t version = 0;

    RowIndex dim() const { return query_table.cols(); }
    RowIndex rows() const { return query_table.rows(); }

    EmbeddingTable<Scalar>& table(EncoderSide side) {
        return shared || side == EncoderSide::query ? query_table : passage_table;
    }
    const EmbeddingTable<Scalar>& table(EncoderSide side) const {
        return shared || side == EncoderSide::query ? query_table : passage_table;
    }

    std::optional<RowIndex> row(const std::string& token) const {
        auto it = vocab.find(token);
        if (it == vocab.end()) return std::nullopt;
        return it->second;
    }

    /// Rows of the in-vocabulary tokens, duplicates kept, OOV dropped.
    std::vector<RowIndex> rows_of(const std::vector<std::string>& toks) const {
        std::vector<RowIndex> out;
        out.reserve(toks.size());
        for (const auto& t : toks)
            if (auto r = row(t)) out.push_back(*r);
        return out;
    }

    /// Uniform init in [-1/sqrt(d), 1/sqrt(d)]. Tokens are deduplicated and sorted.
    static EncoderParams init(std::vector<std::string> vocabulary, RowIndex dim, bool shared,
                              std::uint64_t seed) {
        if (dim < 1) throw ConfigError("dim", "must be >= 1");
        std::sort(vocabulary.begin(), vocabulary.end());
        vocabulary.erase(std::unique(vocabulary.begin(), vocabulary.end()), vocabulary.end());
        EncoderParams p;
        p.shared = shared;
        p.tokens = std::move(vocabulary);
        for (std::size_t i = 0; i < p.tokens.size(); ++i)
            p.vocab.emplace(p.tokens[i], static_cast<RowIndex>(i));
        const auto n = static_cast<RowIndex>(p.tokens.size());
        const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
        Rng rng(seed);
        auto fill = [&](EmbeddingTable<Scalar>& m) {
            m.resize(n, dim);
            for (RowIndex r = 0; r < n; ++r)
                for (RowIndex c = 0; c < dim; ++c)
                    m(r, c) = static_cast<Scalar>(uniform_real(rng, -bound, bound));
        };
        fill(p.query_table);
        if (!shared) fill(p.passage_table);
        return p;
    }

    bool same_weights(const EncoderParams& other) const {
        return tokens == other.tokens && shared == other.shared &&
               query_table == other.query_table &&
               passage_table.rows() == other.passage_table.rows() &&
               (passage_table.size() == 0 || passage_table == other.passage_table);
    }
};

/// Sorted unique tokens over passages and any number of query sets.
std::vector<std::string> build_vocabulary(const Corpus& corpus,
                                          std::initializer_list<const QuerySet*> query_sets,
                                          const TokenizerConfig& tok);

/// Mean of the given rows; zero vector when `rows` is empty.
template <typename Scalar>
EmbeddingVector<Scalar> mean_rows(const EmbeddingTable<Scalar>& table, std::span<const RowIndex> rows) {
    EmbeddingVector<Scalar> v = EmbeddingVector<Scalar>::Zero(table.cols());
    if (rows.empty()) return v;
    for (auto r : rows) v += table.row(r).transpose();
    v /= static_cast<Scalar>(rows.size());
    return v;
}

template <typename Scalar>
EmbeddingVector<Scalar> encode(const EncoderParams<Scalar>& params, const std::vector<std::string>& tokens,
                               EncoderSide side = EncoderSide::query) {
    auto rows = params.rows_of(tokens);
    return mean_rows<Scalar>(params.table(side), rows);
}

/// Dot product. Throws std::invalid_argument on a dimension mismatch.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar similarity(const Eigen::MatrixBase<DerivedA>& qv, const Eigen::MatrixBase<DerivedB>& pv) {
    if (qv.size() != pv.size())
        throw std::invalid_argument("similarity: dimension mismatch (" + std::to_string(qv.size()) +
                                    " vs " + std::to_string(pv.size()) + ")");
    return qv.dot(pv);
}

/// Passage id -> embedding rows, computed once per vocabulary.
struct EncodedCorpus {
    std::unordered_map<std::string, std::vector<RowIndex>> rows;

    template <typename Scalar>
    static EncodedCorpus build(const EncoderParams<Scalar>& params, const Corpus& corpus,
                               const TokenizerConfig& tok) {
        EncodedCorpus out;
        out.rows.reserve(corpus.size());
        for (const auto& p : corpus) out.rows.emplace(p.id, params.rows_of(tokenize(p.text, tok)));
        return out;
    }

    const std::vector<RowIndex>& at(const std::string& passage_id) const {
        auto it = rows.find(passage_id);
        if (it == rows.end()) throw DataError("unknown passage id '" + passage_id + "'");
        return it->second;
    }
};

template <typename Scalar>
struct DenseIndex {
    std::vector<std::string> ids;
    EmbeddingTable<Scalar> vectors;
    std::uint64_t params_version = 0;

    std::size_t size() const { return ids.size(); }
};

template <typename Scalar>
DenseIndex<Scalar> build_dense_index(const EncoderParams<Scalar>& params, const Corpus& corpus,
                                     const EncodedCorpus& encoded, std::size_t workers = 1) {
    if (corpus.empty()) throw DataError("cannot build a dense index over an empty corpus");
    DenseIndex<Scalar> index;
    index.params_version = params.version;
    index.ids.reserve(corpus.size());
    for (const auto& p : corpus) index.ids.push_back(p.id);
    index.vectors.resize(static_cast<RowIndex>(corpus.size()), params.dim());
    const auto& table = params.table(EncoderSide::passage);
    parallel_for(workers, corpus.size(), [&](std::size_t i) {
        index.vectors.row(static_cast<RowIndex>(i)) =
            mean_rows<Scalar>(table, encoded.at(index.ids[i])).transpose();
    });
    return index;
}

template <typename Scalar>
DenseIndex<Scalar> build_dense_index(const EncoderParams<Scalar>& params, const Corpus& corpus,
                                     const TokenizerConfig& tok) {
    return build_dense_index(params, corpus, EncodedCorpus::build(params, corpus, tok));
}

enum class StalePolicy { reject, allow };

/// Exact top-k by dot product with (score desc, id asc) ordering. Zero scores are kept.
template <typename Scalar, typename Derived>
RankedList search_dense_vector(const DenseIndex<Scalar>& index, const Eigen::MatrixBase<Derived>& qv,
                               std::size_t k) {
    if (qv.size() != index.vectors.cols())
        throw std::invalid_argument("search_dense: query dimension does not match index");
    EmbeddingVector<Scalar> scores = index.vectors * qv;
    std::vector<RowIndex> order(index.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<RowIndex>(i);
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](RowIndex a, RowIndex b) {
                          if (scores(a) != scores(b)) return scores(a) > scores(b);
                          return index.ids[a] < index.ids[b];
                      });
    RankedList out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        out.push_back({index.ids[order[i]], static_cast<double>(scores(order[i]))});
    return out;
}

/// Throws std::logic_error when the index predates the current parameters,
/// unless the caller passes StalePolicy::allow.
template <typename Scalar>
RankedList search_dense(const DenseIndex<Scalar>& index, const EncoderParams<Scalar>& params,
                        const std::vector<std::string>& query_tokens, std::size_t k,
                        StalePolicy policy = StalePolicy::reject) {
    if (policy == StalePolicy::reject && index.params_version != params.version)
        throw std::logic_error("dense index is stale (built for version " +
                               std::to_string(index.params_version) + ", params at " +
                               std::to_string(params.version) + ")");
    return search_dense_vector(index, encode(params, query_tokens, EncoderSide::query), k);
}

template <typename Scalar>
RankedList search_dense(const DenseIndex<Scalar>& index, const EncoderParams<Scalar>& params,
                        const Query& query, const TokenizerConfig& tok, std::size_t k,
                        StalePolicy policy = StalePolicy::reject) {
    return search_dense(index, params, tokenize(query.text, tok), k, policy);
}

/// {q, p+, p-_0..p-_n}; in-batch negatives are added at training time.
struct TrainingSample {
    Query query;
    std::string positive;
    std::vector<std::string> hard_negatives;
    std::vector<std::string> random_negatives;

    /// Throws DataError if the positive reappears as a negative or negatives repeat.
    void validate() const;
    bool operator==(const TrainingSample&) const = default;
};

// ---------------------------------------------------------------------------
// InfoNCE

/// -log softmax(scores)[0], computed with a max shift. scores[0] is the positive.
template <typename Scalar>
Scalar infonce_from_scores(std::span<const Scalar> scores) {
    if (scores.empty()) throw std::invalid_argument("infonce: no scores");
    const Scalar max = *std::max_element(scores.begin(), scores.end());
    Scalar sum = 0;
    for (auto s : scores) sum += std::exp(s - max);
    return -(scores[0] - max - std::log(sum));
}

/// Sparse per-row gradient; rows absent from the map have zero gradient.
template <typename Scalar>
using RowGradient = std::map<RowIndex, EmbeddingVector<Scalar>>;

template <typename Scalar>
struct LossGradient {
    Scalar loss = 0;
    RowGradient<Scalar> query_rows;    ///< all rows when the table is shared
    RowGradient<Scalar> passage_rows;  ///< untied passage table only
};

/// Candidate passages for one sample: positive first, then hard, random and
/// in-batch negatives with duplicates (and the positive) removed.
std::vector<std::string> candidate_passages(const TrainingSample& sample,
                                            std::span<const std::string> in_batch_positives,
                                            std::size_t max_in_batch = std::numeric_limits<std::size_t>::max());

namespace detail {

template <typename Scalar>
void add_row_gradient(RowGradient<Scalar>& grad, std::span<const RowIndex> rows,
                      const EmbeddingVector<Scalar>& vec_grad) {
    if (rows.empty()) return;
    const Scalar scale = Scalar(1) / static_cast<Scalar>(rows.size());
    for (auto r : rows) {
        auto [it, fresh] = grad.try_emplace(r, EmbeddingVector<Scalar>::Zero(vec_grad.size()));
        it->second += scale * vec_grad;
    }
}

}  // namespace detail

/// Loss and exact gradient of one sample.
template <typename Scalar>
LossGradient<Scalar> infonce_loss(const EncoderParams<Scalar>& params, const TrainingSample& sample,
                                  std::span<const std::string> in_batch_positives,
                                  const EncodedCorpus& encoded, const TokenizerConfig& tok) {
    const auto candidates = candidate_passages(sample, in_batch_positives);
    const auto q_rows = params.rows_of(tokenize(sample.query.text, tok));
    const auto& q_table = params.table(EncoderSide::query);
    const auto& p_table = params.table(EncoderSide::passage);
    const EmbeddingVector<Scalar> qv = mean_rows<Scalar>(q_table, q_rows);

    std::vector<EmbeddingVector<Scalar>> pvs;
    std::vector<Scalar> scores;
    for (const auto& id : candidates) {
        pvs.push_back(mean_rows<Scalar>(p_table, encoded.at(id)));
        scores.push_back(qv.dot(pvs.back()));
    }
    LossGradient<Scalar> out;
    out.loss = infonce_from_scores<Scalar>(scores);

    const Scalar max = *std::max_element(scores.begin(), scores.end());
    Scalar sum = 0;
    for (auto s : scores) sum += std::exp(s - max);

    EmbeddingVector<Scalar> dq = EmbeddingVector<Scalar>::Zero(params.dim());
    auto& passage_grad = params.shared ? out.query_rows : out.passage_rows;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const Scalar g = std::exp(scores[c] - max) / sum - (c == 0 ? Scalar(1) : Scalar(0));
        dq += g * pvs[c];
        detail::add_row_gradient<Scalar>(passage_grad, encoded.at(candidates[c]), g * qv);
    }
    detail::add_row_gradient<Scalar>(out.query_rows, q_rows, dq);
    return out;
}

template <typename Scalar>
LossGradient<Scalar> infonce_loss(const EncoderParams<Scalar>& params, const TrainingSample& sample,
                                  std::span<const std::string> in_batch_positives, const Corpus& corpus,
                                  const TokenizerConfig& tok) {
    return infonce_loss(params, sample, in_batch_positives, EncodedCorpus::build(params, corpus, tok), tok);
}

// ---------------------------------------------------------------------------
// Optimisation

struct AdamConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  ///< decoupled (AdamW)
};

template <typename Scalar>
struct OptimizerState {
    AdamConfig config;
    std::uint64_t step = 0;
    EmbeddingTable<Scalar> m_query, v_query, m_passage, v_passage;

    static OptimizerState init(const EncoderParams<Scalar>& params, const AdamConfig& config) {
        OptimizerState s;
        s.config = config;
        s.m_query = EmbeddingTable<Scalar>::Zero(params.rows(), params.dim());
        s.v_query = s.m_query;
        if (!params.shared) {
            s.m_passage = s.m_query;
            s.v_passage = s.m_query;
        }
        return s;
    }
};

/// Dense gradient of the mean batch loss.
template <typename Scalar>
struct BatchGradient {
    Scalar mean_loss = 0;
    EmbeddingTable<Scalar> query_table;
    EmbeddingTable<Scalar> passage_table;  ///< empty when shared
};

struct BatchOptions {
    std::size_t max_in_batch_negatives = std::numeric_limits<std::size_t>::max();
};

/// Positives of the other samples, in batch order. Samples sharing the
/// query id of sample i are skipped: their positives are also relevant to it.
std::vector<std::string> in_batch_positives(std::span<const TrainingSample> batch, std::size_t i);

/// Mean InfoNCE over the batch and its exact gradient. Each passage in the
/// batch is encoded once and shared across samples.
template <typename Scalar>
BatchGradient<Scalar> batch_gradient(const EncoderParams<Scalar>& params,
                                     std::span<const TrainingSample> batch,
                                     const EncodedCorpus& encoded, const TokenizerConfig& tok,
                                     const BatchOptions& options = {}) {
    if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    const auto& q_table = params.table(EncoderSide::query);
    const auto& p_table = params.table(EncoderSide::passage);
    const RowIndex d = params.dim();

    std::unordered_map<std::string, RowIndex> slot;
    std::vector<const std::vector<RowIndex>*> slot_rows;
    std::vector<std::vector<RowIndex>> candidate_slots(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto others = in_batch_positives(batch, i);
        for (const auto& id : candidate_passages(batch[i], others, options.max_in_batch_negatives)) {
            auto [it, fresh] = slot.try_emplace(id, static_cast<RowIndex>(slot_rows.size()));
            if (fresh) slot_rows.push_back(&encoded.at(id));
            candidate_slots[i].push_back(it->second);
        }
    }
    const auto n_slots = static_cast<RowIndex>(slot_rows.size());
    EmbeddingTable<Scalar> pvecs(n_slots, d);
    for (RowIndex s = 0; s < n_slots; ++s) pvecs.row(s) = mean_rows<Scalar>(p_table, *slot_rows[s]).transpose();
    EmbeddingTable<Scalar> pgrad = EmbeddingTable<Scalar>::Zero(n_slots, d);

    BatchGradient<Scalar> out;
    out.query_table = EmbeddingTable<Scalar>::Zero(params.rows(), d);
    if (!params.shared) out.passage_table = EmbeddingTable<Scalar>::Zero(params.rows(), d);
    auto& passage_target = params.shared ? out.query_table : out.passage_table;

    const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch.size());
    std::vector<Scalar> scores;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto q_rows = params.rows_of(tokenize(batch[i].query.text, tok));
        const EmbeddingVector<Scalar> qv = mean_rows<Scalar>(q_table, q_rows);
        const auto& cands = candidate_slots[i];
        scores.resize(cands.size());
        for (std::size_t c = 0; c < cands.size(); ++c) scores[c] = pvecs.row(cands[c]).dot(qv);
        out.mean_loss += infonce_from_scores<Scalar>(scores) * inv_batch;

        const Scalar max = *std::max_element(scores.begin(), scores.end());
        Scalar sum = 0;
        for (auto s : scores) sum += std::exp(s - max);
        EmbeddingVector<Scalar> dq = EmbeddingVector<Scalar>::Zero(d);
        for (std::size_t c = 0; c < cands.size(); ++c) {
            const Scalar g = (std::exp(scores[c] - max) / sum - (c == 0 ? Scalar(1) : Scalar(0))) * inv_batch;
            dq += g * pvecs.row(cands[c]).transpose();
            pgrad.row(cands[c]) += g * qv.transpose();
        }
        if (!q_rows.empty()) {
            const Scalar scale = Scalar(1) / static_cast<Scalar>(q_rows.size());
            for (auto r : q_rows) out.query_table.row(r) += scale * dq.transpose();
        }
    }
    for (RowIndex s = 0; s < n_slots; ++s) {
        const auto& rows = *slot_rows[s];
        if (rows.empty()) continue;
        const Scalar scale = Scalar(1) / static_cast<Scalar>(rows.size());
        for (auto r : rows) passage_target.row(r) += scale * pgrad.row(s);
    }
    return out;
}

namespace detail {

template <typename Scalar>
void adam_update(EmbeddingTable<Scalar>& theta, EmbeddingTable<Scalar>& m, EmbeddingTable<Scalar>& v,
                 const EmbeddingTable<Scalar>& g, const AdamConfig& cfg, std::uint64_t step) {
    const auto b1 = static_cast<Scalar>(cfg.beta1);
    const auto b2 = static_cast<Scalar>(cfg.beta2);
    const auto lr = static_cast<Scalar>(cfg.learning_rate);
    const auto eps = static_cast<Scalar>(cfg.epsilon);
    const auto wd = static_cast<Scalar>(cfg.weight_decay);
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(step));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(step));
    m.array() = b1 * m.array() + (Scalar(1) - b1) * g.array();
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    theta.array() -= lr * ((m.array() / c1) / ((v.array() / c2).sqrt() + eps) + wd * theta.array());
}

}  // namespace detail

/// One optimizer update from a precomputed gradient; bumps params.version.
template <typename Scalar>
void apply_gradient(EncoderParams<Scalar>& params, OptimizerState<Scalar>& opt, const BatchGradient<Scalar>& grad) {
    ++opt.step;
    detail::adam_update(params.query_table, opt.m_query, opt.v_query, grad.query_table, opt.config, opt.step);
    if (!params.shared)
        detail::adam_update(params.passage_table, opt.m_passage, opt.v_passage, grad.passage_table,
                            opt.config, opt.step);
    ++params.version;
}

/// Accumulates the batch gradient (in-batch negatives from the other samples'
/// positives) and applies one Adam step. Returns the mean loss before the update.
template <typename Scalar>
Scalar train_step(EncoderParams<Scalar>& params, OptimizerState<Scalar>& opt,
                  std::span<const TrainingSample> batch, const EncodedCorpus& encoded,
                  const TokenizerConfig& tok, const BatchOptions& options = {}) {
    auto grad = batch_gradient(params, batch, encoded, tok, options);
    apply_gradient(params, opt, grad);
    return grad.mean_loss;
}

template <typename Scalar>
Scalar train_step(EncoderParams<Scalar>& params, OptimizerState<Scalar>& opt,
                  std::span<const TrainingSample> batch, const Corpus& corpus, const TokenizerConfig& tok) {
    return train_step(params, opt, batch, EncodedCorpus::build(params, corpus, tok), tok);
}

}  // namespace lexmine
