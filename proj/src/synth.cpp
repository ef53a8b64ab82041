#include "lexmine/synth.hpp"

#include "lexmine/error.hpp"
#include "lexmine/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <set>

namespace lexmine {

SynthSpec SynthSpec::from_config(const KeyValueConfig& cfg) {
    SynthSpec s;
    s.languages = cfg.get_list("languages", s.languages);
    s.topics_per_lang = static_cast<int>(cfg.get_int("topics_per_lang", s.topics_per_lang));
    s.passages_per_topic = static_cast<int>(cfg.get_int("passages_per_topic", s.passages_per_topic));
    s.vocab_size = static_cast<int>(cfg.get_int("vocab_size", s.vocab_size));
    s.query_len = static_cast<int>(cfg.get_int("query_len", s.query_len));
    s.labeled_frac = cfg.get_double("labeled_frac", s.labeled_frac);
    s.queries_per_lang = static_cast<int>(cfg.get_int("queries_per_lang", s.queries_per_lang));
    s.eval_queries_per_lang =
        static_cast<int>(cfg.get_int("eval_queries_per_lang", s.eval_queries_per_lang));
    s.passage_len = static_cast<int>(cfg.get_int("passage_len", s.passage_len));
    s.topic_terms = static_cast<int>(cfg.get_int("topic_terms", s.topic_terms));
    s.term_sharing = static_cast<int>(cfg.get_int("term_sharing", s.term_sharing));
    s.topic_mix = cfg.get_double("topic_mix", s.topic_mix);
    cfg.reject_unknown();
    s.validate();
    return s;
}

KeyValueConfig SynthSpec::to_config() const {
    KeyValueConfig cfg;
    std::string langs;
    for (const auto& l : languages) langs += (langs.empty() ? "" : ",") + l;
    cfg.set("languages", langs);
    cfg.set("topics_per_lang", std::to_string(topics_per_lang));
    cfg.set("passages_per_topic", std::to_string(passages_per_topic));
    cfg.set("vocab_size", std::to_string(vocab_size));
    cfg.set("query_len", std::to_string(query_len));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", labeled_frac);
    cfg.set("labeled_frac", buf);
    cfg.set("queries_per_lang", std::to_string(queries_per_lang));
    cfg.set("eval_queries_per_lang", std::to_string(eval_queries_per_lang));
    cfg.set("passage_len", std::to_string(passage_len));
    cfg.set("topic_terms", std::to_string(topic_terms));
    cfg.set("term_sharing", std::to_string(term_sharing));
    std::snprintf(buf, sizeof buf, "%.17g", topic_mix);
    cfg.set("topic_mix", buf);
    return cfg;
}

void SynthSpec::validate() const {
    if (languages.empty()) throw ConfigError("languages", "at least one language is required");
    if (topics_per_lang < 1) throw ConfigError("topics_per_lang", "must be >= 1");
    if (passages_per_topic < 2) throw ConfigError("passages_per_topic", "must be >= 2");
    if (query_len < 1) throw ConfigError("query_len", "must be >= 1");
    if (labeled_frac < 0.0 || labeled_frac > 1.0) throw ConfigError("labeled_frac", "must be in [0,1]");
    if (queries_per_lang < 0) throw ConfigError("queries_per_lang", "must be >= 0");
    if (eval_queries_per_lang < 0) throw ConfigError("eval_queries_per_lang", "must be >= 0");
    if (passage_len < 2) throw ConfigError("passage_len", "must be >= 2");
    if (topic_terms < 1) throw ConfigError("topic_terms", "must be >= 1");
    if (term_sharing < 1 || term_sharing > topic_terms)
        throw ConfigError("term_sharing", "must be in [1, topic_terms]");
    if (topic_mix <= 0.0 || topic_mix > 1.0) throw ConfigError("topic_mix", "must be in (0,1]");
    const long pool = static_cast<long>(topics_per_lang) * topic_terms / term_sharing;
    if (pool < topic_terms || pool >= vocab_size)
        throw ConfigError("vocab_size", "must exceed the topic term pool (" + std::to_string(pool) + ")");
}

namespace {

bool is_cjk_lang(const std::string& lang) { return lang == "ja" || lang == "zh" || lang == "ko"; }

std::string encode_utf8(char32_t cp) {
    std::string out;
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    return out;
}

std::vector<std::string> make_vocab(const std::string& lang, int size) {
    std::vector<std::string> vocab;
    vocab.reserve(size);
    if (is_cjk_lang(lang)) {
        const char32_t base = lang == "ja" ? 0x4E00 : lang == "zh" ? 0x7000 : 0xAC00;
        const char32_t limit = lang == "ko" ? 0xD7A3 : 0x9FFF;
        if (base + static_cast<char32_t>(size) > limit)
            throw ConfigError("vocab_size", "too large for script of language '" + lang + "'");
        for (int i = 0; i < size; ++i) vocab.push_back(encode_utf8(base + static_cast<char32_t>(i)));
        return vocab;
    }
    std::string prefix;
    for (char c : lang) prefix.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (int i = 0; i < size; ++i) {
        std::string suffix;
        int v = i;
        do {
            suffix.push_back(static_cast<char>('a' + v % 26));
            v /= 26;
        } while (v > 0 || suffix.size() < 2);
        vocab.push_back(prefix + suffix);
    }
    return vocab;
}

class CumulativeSampler {
public:
    explicit CumulativeSampler(const std::vector<double>& weights) : cumulative_(weights.size()) {
        std::partial_sum(weights.begin(), weights.end(), cumulative_.begin());
    }
    std::size_t operator()(Rng& rng) const {
        double target = uniform01(rng) * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
        return std::min<std::size_t>(it - cumulative_.begin(), cumulative_.size() - 1);
    }

private:
    std::vector<double> cumulative_;
};

std::string join_tokens(const std::vector<std::string>& words, const std::string& lang) {
    std::string out;
    const char* sep = is_cjk_lang(lang) ? "" : " ";
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += sep;
        out += words[i];
    }
    return out;
}

std::string pad(std::size_t n, int width) {
    std::string s = std::to_string(n);
    if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
    return s;
}

struct GeneratedLanguage {
    SynthLanguageModel model;
    std::vector<Passage> passages;
    std::vector<std::size_t> passage_topic;
    std::vector<std::set<std::size_t>> passage_words;
};

struct GeneratedQuery {
    Query query;
    std::size_t topic = 0;
    std::vector<std::size_t> relevant;  // indices into passages
};

GeneratedQuery make_query(const SynthSpec& spec, const GeneratedLanguage& g,
                          const std::vector<CumulativeSampler>& topic_samplers,
                          const std::vector<std::vector<std::size_t>>& topic_words, Rng& rng,
                          std::string id) {
    const auto& lang = g.model.lang;
    std::size_t anchor;
    std::vector<std::size_t> anchor_topic_words;
    while (true) {
        anchor = uniform_index(rng, g.passages.size());
        const auto& terms = g.model.topic_dist[g.passage_topic[anchor]];
        anchor_topic_words.clear();
        for (auto w : g.passage_words[anchor])
            if (terms.count(w)) anchor_topic_words.push_back(w);
        if (!anchor_topic_words.empty()) break;
    }
    const std::size_t topic = g.passage_topic[anchor];
    std::vector<std::size_t> words{anchor_topic_words[uniform_index(rng, anchor_topic_words.size())]};
    const auto want = std::min<std::size_t>(spec.query_len, topic_words[topic].size());
    int attempts = 0;
    while (words.size() < want && attempts++ < 1000) {
        auto w = topic_words[topic][topic_samplers[topic](rng)];
        if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
    GeneratedQuery q;
    q.topic = topic;
    std::vector<std::string> text;
    for (auto w : words) text.push_back(g.model.vocab[w]);
    q.query = Query{std::move(id), join_tokens(text, lang), lang};
    for (std::size_t p = 0; p < g.passages.size(); ++p) {
        if (g.passage_topic[p] != topic) continue;
        for (auto w : words)
            if (g.passage_words[p].count(w)) {
                q.relevant.push_back(p);
                break;
            }
    }
    return q;
}

}  // namespace

SynthBenchmark synth_benchmark(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    SynthBenchmark out;
    out.source_lang = spec.languages.front();
    for (std::size_t i = 1; i < spec.languages.size(); ++i) out.target_langs.push_back(spec.languages[i]);

    std::map<std::string, std::string> owner;
    for (const auto& lang : spec.languages) {
        for (auto& w : make_vocab(lang, spec.vocab_size)) {
            auto [it, fresh] = owner.emplace(w, lang);
            if (!fresh)
                throw ConfigError("languages", "vocabularies of '" + it->second + "' and '" + lang +
                                                   "' overlap on term '" + w + "'");
        }
    }

    const std::size_t pool_size =
        static_cast<std::size_t>(spec.topics_per_lang) * spec.topic_terms / spec.term_sharing;
    const std::size_t step = std::max(1, spec.topic_terms / spec.term_sharing);

    for (std::size_t li = 0; li < spec.languages.size(); ++li) {
        const auto& lang = spec.languages[li];
        Rng rng(derive_seed(seed, lang));
        GeneratedLanguage g;
        g.model.lang = lang;
        g.model.vocab = make_vocab(lang, spec.vocab_size);
        g.model.topic_mix = spec.topic_mix;

        std::vector<std::size_t> order(g.model.vocab.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, rng);
        std::vector<std::size_t> pool(order.begin(), order.begin() + pool_size);
        std::vector<std::size_t> background(order.begin() + pool_size, order.end());

        std::vector<std::vector<std::size_t>> topic_words(spec.topics_per_lang);
        std::vector<CumulativeSampler> topic_samplers;
        g.model.topic_dist.resize(spec.topics_per_lang);
        for (int t = 0; t < spec.topics_per_lang; ++t) {
            for (int j = 0; j < spec.topic_terms; ++j)
                topic_words[t].push_back(pool[(t * step + j) % pool_size]);
            shuffle(topic_words[t], rng);
            std::vector<double> weights(topic_words[t].size());
            double total = 0.0;
            for (std::size_t r = 0; r < weights.size(); ++r) total += weights[r] = 1.0 / (r + 1.0);
            for (std::size_t r = 0; r < weights.size(); ++r)
                g.model.topic_dist[t][topic_words[t][r]] += weights[r] / total;
            topic_samplers.emplace_back(weights);
        }

        std::vector<double> bg_weights(background.size());
        double bg_total = 0.0;
        for (std::size_t r = 0; r < bg_weights.size(); ++r) bg_total += bg_weights[r] = 1.0 / (r + 1.0);
        g.model.background_dist.assign(g.model.vocab.size(), 0.0);
        for (std::size_t r = 0; r < background.size(); ++r)
            g.model.background_dist[background[r]] = bg_weights[r] / bg_total;
        CumulativeSampler bg_sampler(bg_weights);

        // Passages, generated topic by topic then shuffled before ids are assigned.
        std::vector<std::pair<std::size_t, std::vector<std::size_t>>> drafts;
        for (int t = 0; t < spec.topics_per_lang; ++t) {
            for (int k = 0; k < spec.passages_per_topic; ++k) {
                const auto len = static_cast<std::size_t>(spec.passage_len / 2) +
                                 uniform_index(rng, static_cast<std::uint64_t>(spec.passage_len) + 1);
                std::vector<std::size_t> words;
                bool has_topic_word = false;
                for (std::size_t i = 0; i < len; ++i) {
                    if (uniform01(rng) < spec.topic_mix) {
                        words.push_back(topic_words[t][topic_samplers[t](rng)]);
                        has_topic_word = true;
                    } else {
                        words.push_back(background[bg_sampler(rng)]);
                    }
                }
                if (!has_topic_word) words.front() = topic_words[t][topic_samplers[t](rng)];
                drafts.emplace_back(static_cast<std::size_t>(t), std::move(words));
            }
        }
        shuffle(drafts, rng);
        for (std::size_t i = 0; i < drafts.size(); ++i) {
            auto& [topic, words] = drafts[i];
            std::vector<std::string> text;
            for (auto w : words) text.push_back(g.model.vocab[w]);
            g.passages.push_back(Passage{lang + "-p" + pad(i, 5), join_tokens(text, lang), lang});
            g.passage_topic.push_back(topic);
            g.passage_words.emplace_back(words.begin(), words.end());
        }

        auto topic_name = [&](std::size_t t) { return lang + ":t" + std::to_string(t); };
        for (std::size_t i = 0; i < g.passages.size(); ++i) {
            out.passage_topic[g.passages[i].id] = topic_name(g.passage_topic[i]);
            out.corpus.add(g.passages[i]);
        }

        const bool is_source = li == 0;
        const auto n_labeled = is_source ? static_cast<std::size_t>(
                                               std::llround(spec.labeled_frac * spec.queries_per_lang))
                                         : std::size_t{0};
        for (int i = 0; i < spec.queries_per_lang; ++i) {
            auto q = make_query(spec, g, topic_samplers, topic_words, rng, lang + "-q" + pad(i, 5));
            out.query_topic[q.query.id] = topic_name(q.topic);
            if (static_cast<std::size_t>(i) < n_labeled) {
                for (auto p : q.relevant) out.train_qrels.add({q.query.id, g.passages[p].id, 1});
                out.train_queries.add(std::move(q.query));
            } else {
                out.unlabeled_queries.add(std::move(q.query));
            }
        }
        for (int i = 0; i < spec.eval_queries_per_lang; ++i) {
            auto q = make_query(spec, g, topic_samplers, topic_words, rng, lang + "-d" + pad(i, 5));
            out.query_topic[q.query.id] = topic_name(q.topic);
            for (auto p : q.relevant) out.dev_qrels.add({q.query.id, g.passages[p].id, 1});
            out.dev_queries.add(std::move(q.query));
        }
        out.models.emplace(lang, std::move(g.model));
    }
    return out;
}

std::string SynthBenchmark::most_likely_topic(const std::string& lang,
                                              const std::vector<std::string>& tokens) const {
    auto it = models.find(lang);
    if (it == models.end()) return {};
    const auto& m = it->second;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < m.vocab.size(); ++i) index.emplace(m.vocab[i], i);
    std::vector<std::size_t> words;
    for (const auto& t : tokens) {
        auto w = index.find(t);
        if (w != index.end()) words.push_back(w->second);
    }
    if (words.empty()) return {};
    std::size_t best = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < m.topic_dist.size(); ++t) {
        double ll = 0.0;
        for (auto w : words) {
            auto p = m.topic_dist[t].find(w);
            double topic_p = p == m.topic_dist[t].end() ? 0.0 : p->second;
            ll += std::log(m.topic_mix * topic_p + (1.0 - m.topic_mix) * m.background_dist[w] + 1e-300);
        }
        if (ll > best_ll) {
            best_ll = ll;
            best = t;
        }
    }
    return lang + ":t" + std::to_string(best);
}

void SynthBenchmark::write(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };
    write_text_file(path("passages.jsonl"), to_jsonl(corpus));
    write_text_file(path("train_queries.jsonl"), to_jsonl(train_queries));
    write_text_file(path("train_qrels.tsv"), to_qrels(train_qrels));
    write_text_file(path("unlabeled_queries.jsonl"), to_jsonl(unlabeled_queries));
    write_text_file(path("dev_queries.jsonl"), to_jsonl(dev_queries));
    write_text_file(path("dev_qrels.tsv"), to_qrels(dev_qrels));
    std::string topics;
    for (const auto& [pid, topic] : passage_topic) topics += pid + "\t" + topic + "\n";
    write_text_file(path("passage_topics.tsv"), topics);
    topics.clear();
    for (const auto& [qid, topic] : query_topic) topics += qid + "\t" + topic + "\n";
    write_text_file(path("query_topics.tsv"), topics);
}

}  // namespace lexmine
