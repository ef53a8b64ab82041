#pragma once

#include "lexmine/pipeline.hpp"
#include "lexmine/synth.hpp"

#include <filesystem>
#include <string>
#include <unistd.h>

namespace lexmine::testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("lexmine-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& child = "") const { return child.empty() ? path_.string() : (path_ / child).string(); }

private:
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::filesystem::path path_;
};

inline Dataset to_dataset(const SynthBenchmark& b) {
    return Dataset{b.corpus, b.train_queries, b.train_qrels, b.unlabeled_queries, b.dev_queries, b.dev_qrels};
}

/// Two languages, a few hundred passages: a full pipeline run takes well under a second.
inline SynthSpec small_spec() {
    SynthSpec s;
    s.languages = {"en", "sw"};
    s.topics_per_lang = 8;
    s.passages_per_topic = 10;
    s.vocab_size = 400;
    s.topic_terms = 16;
    s.queries_per_lang = 160;
    s.eval_queries_per_lang = 40;
    s.passage_len = 24;
    s.query_len = 3;
    return s;
}

inline PipelineConfig small_config() {
    PipelineConfig c;
    c.dim = 16;
    c.iterations = 2;
    c.minibatches_per_iter = 30;
    c.batch_size = 16;
    c.warmup_epochs = 1;
    c.n_generate = 40;
    c.seed = 5;
    return c;
}

}  // namespace lexmine::testing
