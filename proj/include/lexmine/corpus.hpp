#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lexmine {

struct Passage {
    std::string id;
    std::string text;
    std::string lang;

    bool operator==(const Passage&) const = default;
};

struct Query {
    std::string id;
    std::string text;
    std::string lang;

    bool operator==(const Query&) const = default;
};

struct Judgment {
    std::string query_id;
    std::string passage_id;
    int grade = 0;

    bool operator==(const Judgment&) const = default;
};

struct TokenizerConfig {
    bool lowercase = true;
    bool cjk_char_split = true;
    int min_token_len = 1;
};

/// Splits text into runs of letters and digits.
///
/// Input is UTF-8. Ideographs, kana, hangul and Thai letters become one token
/// per codepoint when `cjk_char_split` is set. Invalid UTF-8 bytes act as
/// separators. Length filtering counts codepoints.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg = {});

bool is_cjk_codepoint(char32_t cp);

/// Ordered collection of uniquely identified records.
template <typename Record>
class RecordSet {
public:
    RecordSet() = default;

    /// Throws DataError on a duplicate or empty id.
    void add(Record record);

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const Record& operator[](std::size_t i) const { return records_[i]; }
    const Record* find(const std::string& id) const;
    std::optional<std::size_t> position(const std::string& id) const;
    bool contains(const std::string& id) const { return by_id_.count(id) != 0; }

    auto begin() const { return records_.begin(); }
    auto end() const { return records_.end(); }
    const std::vector<Record>& records() const { return records_; }

    /// Records whose `lang` matches, in original order.
    RecordSet filter_lang(const std::string& lang) const;
    std::vector<std::string> languages() const;

    bool operator==(const RecordSet& other) const { return records_ == other.records_; }

private:
    std::vector<Record> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

using Corpus = RecordSet<Passage>;
using QuerySet = RecordSet<Query>;

class JudgmentSet {
public:
    void add(Judgment j);

    std::size_t size() const { return judgments_.size(); }
    bool empty() const { return judgments_.empty(); }
    const std::vector<Judgment>& judgments() const { return judgments_; }

    /// Grade of (query, passage); 0 when unjudged.
    int grade(const std::string& query_id, const std::string& passage_id) const;
    bool has_query(const std::string& query_id) const { return by_query_.count(query_id) != 0; }

    /// passage id -> grade for one query; empty if the query is unjudged.
    const std::map<std::string, int>& for_query(const std::string& query_id) const;
    std::vector<std::string> query_ids() const;

    /// Throws DataError if any judgment references an unknown query or passage.
    void validate(const QuerySet& queries, const Corpus& corpus) const;

    bool operator==(const JudgmentSet& other) const { return judgments_ == other.judgments_; }

private:
    std::vector<Judgment> judgments_;
    std::map<std::string, std::map<std::string, int>> by_query_;
};

Corpus load_passages(const std::string& path);
QuerySet load_queries(const std::string& path);
JudgmentSet load_qrels(const std::string& path);

Corpus parse_passages(std::string_view jsonl, const std::string& origin = "<string>");
QuerySet parse_queries(std::string_view jsonl, const std::string& origin = "<string>");
JudgmentSet parse_qrels(std::string_view text, const std::string& origin = "<string>");

std::string to_jsonl(const Corpus& corpus);
std::string to_jsonl(const QuerySet& queries);
std::string to_qrels(const JudgmentSet& qrels);

void write_text_file(const std::string& path, std::string_view content);
std::string read_text_file(const std::string& path);

}  // namespace lexmine
