#include "lexmine/corpus.hpp"

#include "lexmine/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace lexmine {

namespace {

// Decodes one codepoint starting at `i`; advances `i`. Returns U+FFFF on a bad sequence.
char32_t next_codepoint(std::string_view s, std::size_t& i) {
    auto byte = static_cast<unsigned char>(s[i]);
    int extra = 0;
    char32_t cp = 0;
    if (byte < 0x80) {
        ++i;
        return byte;
    } else if ((byte & 0xE0) == 0xC0) {
        extra = 1;
        cp = byte & 0x1F;
    } else if ((byte & 0xF0) == 0xE0) {
        extra = 2;
        cp = byte & 0x0F;
    } else if ((byte & 0xF8) == 0xF0) {
        extra = 3;
        cp = byte & 0x07;
    } else {
        ++i;
        return 0xFFFF;
    }
    if (i + extra >= s.size()) {
        ++i;
        return 0xFFFF;
    }
    for (int k = 1; k <= extra; ++k) {
        auto c = static_cast<unsigned char>(s[i + k]);
        if ((c & 0xC0) != 0x80) {
            ++i;
            return 0xFFFF;
        }
        cp = (cp << 6) | (c & 0x3F);
    }
    i += extra + 1;
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool in(char32_t cp, char32_t lo, char32_t hi) { return cp >= lo && cp <= hi; }

// Punctuation, symbols and separators outside ASCII. Everything else above
// U+007F counts as a word character.
bool is_non_ascii_separator(char32_t cp) {
    return in(cp, 0x0080, 0x00BF) || cp == 0x00D7 || cp == 0x00F7 ||
           in(cp, 0x2000, 0x2BFF) ||  // general punctuation .. misc symbols
           in(cp, 0x3000, 0x303F) ||  // CJK symbols and punctuation
           cp == 0x30FB ||            // katakana middle dot
           in(cp, 0xFE30, 0xFE4F) || in(cp, 0xFF00, 0xFF0F) || in(cp, 0xFF1A, 0xFF20) ||
           in(cp, 0xFF3B, 0xFF40) || in(cp, 0xFF5B, 0xFF65) || in(cp, 0xD800, 0xDFFF) ||
           cp == 0xFEFF || cp == 0xFFFD || cp == 0xFFFF || in(cp, 0x1F000, 0x1FAFF);
}

bool is_word_codepoint(char32_t cp) {
    if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) != 0;
    return !is_non_ascii_separator(cp);
}

// Simple one-to-one case folding for Latin-1, Latin Extended-A, Greek and Cyrillic.
char32_t to_lower(char32_t cp) {
    if (in(cp, 'A', 'Z')) return cp + 32;
    if (cp < 0x80) return cp;
    if (in(cp, 0x00C0, 0x00DE) && cp != 0x00D7) return cp + 32;
    if (in(cp, 0x0100, 0x017F) && cp % 2 == 0 && cp != 0x0130 && cp != 0x0138) return cp + 1;
    if (in(cp, 0x0391, 0x03AB) && cp != 0x03A2) return cp + 32;
    if (in(cp, 0x0410, 0x042F)) return cp + 32;
    if (in(cp, 0x0400, 0x040F)) return cp + 80;
    return cp;
}

void flush(std::vector<std::string>& tokens, std::string& current, int& length, int min_len) {
    if (length >= min_len && !current.empty()) tokens.push_back(current);
    current.clear();
    length = 0;
}

}  // namespace

bool is_cjk_codepoint(char32_t cp) {
    return in(cp, 0x3040, 0x30FF) ||    // hiragana, katakana
           in(cp, 0x3100, 0x312F) ||    // bopomofo
           in(cp, 0x3130, 0x318F) ||    // hangul compatibility jamo
           in(cp, 0x31F0, 0x31FF) ||    // katakana phonetic extensions
           in(cp, 0x3400, 0x4DBF) ||    // CJK extension A
           in(cp, 0x4E00, 0x9FFF) ||    // CJK unified ideographs
           in(cp, 0x1100, 0x11FF) ||    // hangul jamo
           in(cp, 0xAC00, 0xD7AF) ||    // hangul syllables
           in(cp, 0xF900, 0xFAFF) ||    // CJK compatibility ideographs
           in(cp, 0xFF66, 0xFF9F) ||    // halfwidth katakana
           in(cp, 0x0E01, 0x0E5B) ||    // thai, written without spaces
           in(cp, 0x20000, 0x3134F);    // CJK extensions B..G
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg) {
    std::vector<std::string> tokens;
    std::string current;
    int length = 0;
    const int min_len = std::max(1, cfg.min_token_len);
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = next_codepoint(text, i);
        if (!is_word_codepoint(cp)) {
            flush(tokens, current, length, min_len);
            continue;
        }
        if (cfg.lowercase) cp = to_lower(cp);
        if (cfg.cjk_char_split && is_cjk_codepoint(cp)) {
            flush(tokens, current, length, min_len);
            append_utf8(current, cp);
            length = 1;
            flush(tokens, current, length, min_len);
            continue;
        }
        append_utf8(current, cp);
        ++length;
    }
    flush(tokens, current, length, min_len);
    return tokens;
}

template <typename Record>
void RecordSet<Record>::add(Record record) {
    if (record.id.empty()) throw DataError("record with empty id");
    if (by_id_.count(record.id)) throw DataError("duplicate id '" + record.id + "'");
    by_id_.emplace(record.id, records_.size());
    records_.push_back(std::move(record));
}

template <typename Record>
const Record* RecordSet<Record>::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

template <typename Record>
std::optional<std::size_t> RecordSet<Record>::position(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

template <typename Record>
RecordSet<Record> RecordSet<Record>::filter_lang(const std::string& lang) const {
    RecordSet out;
    for (const auto& r : records_)
        if (r.lang == lang) out.add(r);
    return out;
}

template <typename Record>
std::vector<std::string> RecordSet<Record>::languages() const {
    std::vector<std::string> langs;
    for (const auto& r : records_)
        if (std::find(langs.begin(), langs.end(), r.lang) == langs.end()) langs.push_back(r.lang);
    return langs;
}

template class RecordSet<Passage>;
template class RecordSet<Query>;

void JudgmentSet::add(Judgment j) {
    if (j.grade < 0) throw DataError("negative grade for " + j.query_id + "/" + j.passage_id);
    auto& row = by_query_[j.query_id];
    if (row.count(j.passage_id))
        throw DataError("duplicate judgment " + j.query_id + "/" + j.passage_id);
    row[j.passage_id] = j.grade;
    judgments_.push_back(std::move(j));
}

int JudgmentSet::grade(const std::string& query_id, const std::string& passage_id) const {
    auto it = by_query_.find(query_id);
    if (it == by_query_.end()) return 0;
    auto jt = it->second.find(passage_id);
    return jt == it->second.end() ? 0 : jt->second;
}

const std::map<std::string, int>& JudgmentSet::for_query(const std::string& query_id) const {
    static const std::map<std::string, int> empty;
    auto it = by_query_.find(query_id);
    return it == by_query_.end() ? empty : it->second;
}

std::vector<std::string> JudgmentSet::query_ids() const {
    std::vector<std::string> ids;
    ids.reserve(by_query_.size());
    for (const auto& [qid, row] : by_query_) ids.push_back(qid);
    return ids;
}

void JudgmentSet::validate(const QuerySet& queries, const Corpus& corpus) const {
    for (const auto& j : judgments_) {
        if (!queries.contains(j.query_id))
            throw DataError("judgment references unknown query '" + j.query_id + "'");
        if (!corpus.contains(j.passage_id))
            throw DataError("judgment references unknown passage '" + j.passage_id + "'");
    }
}

namespace {

template <typename Record>
RecordSet<Record> parse_records(std::string_view jsonl, const std::string& origin) {
    RecordSet<Record> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        auto line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        Record r;
        try {
            auto obj = nlohmann::json::parse(line);
            r.id = obj.at("id").get<std::string>();
            r.text = obj.at("text").get<std::string>();
            r.lang = obj.value("lang", std::string());
        } catch (const nlohmann::json::exception& e) {
            throw DataError(origin, line_no, std::string("malformed record: ") + e.what());
        }
        if (r.id.empty()) throw DataError(origin, line_no, "empty id");
        if constexpr (std::is_same_v<Record, Passage>) {
            if (r.text.find_first_not_of(" \t\r\n") == std::string::npos)
                throw DataError(origin, line_no, "passage '" + r.id + "' has empty text");
        }
        if (out.contains(r.id)) throw DataError(origin, line_no, "duplicate id '" + r.id + "'");
        out.add(std::move(r));
    }
    return out;
}

template <typename Record>
std::string records_to_jsonl(const RecordSet<Record>& records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::ordered_json obj;
        obj["id"] = r.id;
        obj["text"] = r.text;
        obj["lang"] = r.lang;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

}  // namespace

Corpus parse_passages(std::string_view jsonl, const std::string& origin) {
    return parse_records<Passage>(jsonl, origin);
}

QuerySet parse_queries(std::string_view jsonl, const std::string& origin) {
    return parse_records<Query>(jsonl, origin);
}

JudgmentSet parse_qrels(std::string_view text, const std::string& origin) {
    JudgmentSet out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::vector<std::string> parts;
        for (std::string f; fields >> f;) parts.push_back(f);
        if (parts.empty() || parts[0].front() == '#') continue;
        if (parts.size() != 4) throw DataError(origin, line_no, "expected 4 qrels fields");
        int grade = 0;
        try {
            std::size_t used = 0;
            grade = std::stoi(parts[3], &used);
            if (used != parts[3].size()) throw std::invalid_argument(parts[3]);
        } catch (const std::exception&) {
            throw DataError(origin, line_no, "non-integer grade '" + parts[3] + "'");
        }
        if (grade < 0) throw DataError(origin, line_no, "negative grade");
        try {
            out.add({parts[0], parts[2], grade});
        } catch (const DataError& e) {
            throw DataError(origin, line_no, e.what());
        }
    }
    return out;
}

std::string to_jsonl(const Corpus& corpus) { return records_to_jsonl(corpus); }
std::string to_jsonl(const QuerySet& queries) { return records_to_jsonl(queries); }

std::string to_qrels(const JudgmentSet& qrels) {
    std::string out;
    for (const auto& j : qrels.judgments())
        out += j.query_id + " 0 " + j.passage_id + " " + std::to_string(j.grade) + "\n";
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file(const std::string& path, std::string_view content) {
    auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

Corpus load_passages(const std::string& path) { return parse_passages(read_text_file(path), path); }
QuerySet load_queries(const std::string& path) { return parse_queries(read_text_file(path), path); }
JudgmentSet load_qrels(const std::string& path) { return parse_qrels(read_text_file(path), path); }

}  // namespace lexmine
