#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "bootret/common.hpp"

namespace bootret {

constexpr size_t kMaxDocTokens = 512;
constexpr size_t kMaxQueryTokens = 64;

// Text-token vocabulary. Docid tokens live in their own id space (pq.hpp);
// they are never mixed into this one.
class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kMask = 4;

  Vocabulary() {
    for (const auto& t : reserved_tokens()) add_token(t);
  }

  static const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> r = {"<pad>", "<unk>", "<bos>", "<eos>", "[masked]"};
    return r;
  }

  int add_token(const std::string& tok) {
    auto it = token_to_id_.find(tok);
    if (it != token_to_id_.end()) return it->second;
    int id = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(tok);
    token_to_id_.emplace(tok, id);
    return id;
  }

  // kUnk for unknown tokens
  int id(const std::string& tok) const {
    auto it = token_to_id_.find(tok);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& tok) const { return token_to_id_.count(tok) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= static_cast<int>(id_to_token_.size())) raise("token id out of range: ", id);
    return id_to_token_[id];
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }

  bool operator==(const Vocabulary& o) const { return id_to_token_ == o.id_to_token_; }

private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

namespace detail {

inline bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

// Literal match of a reserved spelling ("<unk>", "[masked]", ...) at position i,
// case-insensitive. Keeps reserved tokens stable under join + re-tokenize.
inline size_t match_reserved(const std::string& text, size_t i, std::string* out) {
  for (const auto& r : Vocabulary::reserved_tokens()) {
    if (i + r.size() > text.size()) continue;
    bool ok = true;
    for (size_t j = 0; j < r.size(); ++j) {
      if (std::tolower(static_cast<unsigned char>(text[i + j])) != r[j]) {
        ok = false;
        break;
      }
    }
    if (ok) {
      *out = r;
      return r.size();
    }
  }
  return 0;
}

} // namespace detail

// Lowercased words, split on whitespace and punctuation. Reserved spellings
// survive as single tokens.
inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  size_t i = 0;
  while (i < text.size()) {
    std::string reserved;
    size_t skip = detail::match_reserved(text, i, &reserved);
    if (skip > 0) {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
      words.push_back(reserved);
      i += skip;
      continue;
    }
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (detail::is_word_byte(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
    ++i;
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

// Total function: OOV maps to <unk>, output truncated at max_tokens.
inline std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab,
                                 size_t max_tokens = kMaxDocTokens) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    if (ids.size() >= max_tokens) break;
    ids.push_back(vocab.id(w));
  }
  return ids;
}

struct Document {
  std::string doc_key;
  std::string text;
  std::vector<int> tokens;
};

struct Corpus {
  std::vector<Document> documents;
  Vocabulary vocab;

  int index_of(const std::string& doc_key) const {
    auto it = key_index_.find(doc_key);
    return it == key_index_.end() ? -1 : it->second;
  }

  const Document& at_key(const std::string& doc_key) const {
    int i = index_of(doc_key);
    if (i < 0) raise("unknown doc_key: ", doc_key);
    return documents[static_cast<size_t>(i)];
  }

  void rebuild_index() {
    key_index_.clear();
    for (size_t i = 0; i < documents.size(); ++i)
      key_index_.emplace(documents[i].doc_key, static_cast<int>(i));
  }

private:
  std::unordered_map<std::string, int> key_index_;
};

// Ids: reserved block first, then frequency descending, ties broken by the
// lexicographically smaller token.
inline Vocabulary build_vocab(const std::vector<std::string>& texts, int min_count = 1) {
  if (texts.empty()) raise("build_vocab: empty corpus");
  std::unordered_map<std::string, long> freq;
  for (const auto& t : texts)
    for (const auto& w : split_words(t)) ++freq[w];

  std::vector<std::pair<std::string, long>> entries;
  entries.reserve(freq.size());
  const auto& reserved = Vocabulary::reserved_tokens();
  for (const auto& [tok, n] : freq) {
    if (n < min_count) continue;
    if (std::find(reserved.begin(), reserved.end(), tok) != reserved.end()) continue;
    entries.emplace_back(tok, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  for (const auto& [tok, n] : entries) {
    (void)n;
    vocab.add_token(tok);
  }
  return vocab;
}

// JSON Lines, one {"doc_key": ..., "text": ...} object per line.
// limit = 0 keeps everything.
inline Corpus ingest_jsonl(const std::string& path, size_t limit = 0, int min_count = 1,
                           size_t max_tokens = kMaxDocTokens) {
  std::ifstream in(path);
  if (!in) raise("cannot open corpus file: ", path);

  Corpus corpus;
  std::string line;
  size_t line_no = 0;
  std::unordered_map<std::string, size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (limit > 0 && corpus.documents.size() >= limit) break;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      raise("malformed line ", line_no, ": ", e.what());
    }
    if (!j.is_object() || !j.contains("doc_key") || !j["doc_key"].is_string() ||
        !j.contains("text") || !j["text"].is_string())
      raise("malformed line ", line_no, ": expected object with string doc_key and text");
    Document d;
    d.doc_key = j["doc_key"].get<std::string>();
    d.text = j["text"].get<std::string>();
    if (seen.count(d.doc_key)) raise("duplicate doc_key at line ", line_no, ": ", d.doc_key);
    seen.emplace(d.doc_key, line_no);
    corpus.documents.push_back(std::move(d));
  }
  if (corpus.documents.empty()) raise("corpus file has no documents: ", path);

  std::vector<std::string> texts;
  texts.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) texts.push_back(d.text);
  corpus.vocab = build_vocab(texts, min_count);

  for (auto& d : corpus.documents) {
    d.tokens = tokenize(d.text, corpus.vocab, max_tokens);
    if (d.tokens.empty()) raise("document tokenizes to empty: ", d.doc_key);
  }
  corpus.rebuild_index();
  return corpus;
}

inline void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
  std::ostringstream os;
  for (const auto& d : corpus.documents) {
    nlohmann::json j;
    j["doc_key"] = d.doc_key;
    j["text"] = d.text;
    os << j.dump() << "\n";
  }
  write_file(path, os.str());
}

inline void save_vocab(const Vocabulary& vocab, const std::string& path, int min_count) {
  nlohmann::json j;
  j["version"] = 1;
  j["min_count"] = min_count;
  std::vector<std::string> toks;
  for (int i = static_cast<int>(Vocabulary::reserved_tokens().size()); i < vocab.size(); ++i)
    toks.push_back(vocab.token(i));
  j["tokens"] = toks;
  write_file(path, j.dump(2) + "\n");
}

inline Vocabulary load_vocab(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_file(path));
  if (!j.contains("version") || j["version"].get<int>() != 1)
    raise("unsupported vocab file version in ", path);
  Vocabulary vocab;
  for (const auto& t : j["tokens"]) vocab.add_token(t.get<std::string>());
  return vocab;
}

struct Query {
  std::string query_id;
  std::string text;
  std::string relevant_doc_key; // empty for unlabeled queries
  std::vector<int> tokens;
};

// TSV: query_id <TAB> query_text [<TAB> relevant_doc_key]
inline std::vector<Query> load_queries_tsv(const std::string& path, const Vocabulary& vocab,
                                           size_t max_tokens = kMaxQueryTokens) {
  std::ifstream in(path);
  if (!in) raise("cannot open query file: ", path);
  std::vector<Query> queries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() < 2) raise("query file ", path, " line ", line_no, ": expected at least 2 columns");
    Query q;
    q.query_id = cols[0];
    q.text = cols[1];
    if (cols.size() >= 3) q.relevant_doc_key = cols[2];
    q.tokens = tokenize(q.text, vocab, max_tokens);
    queries.push_back(std::move(q));
  }
  return queries;
}

} // namespace bootret
