#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <future>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "bootret/common.hpp"
#include "bootret/corpus.hpp"
#include "bootret/rng.hpp"

namespace bootret {

enum class NoiseStrategy {
  kSynonymReplace = 0,
  kSentenceRemove = 1,
  kSentenceShuffle = 2,
  kWordMask = 3,
};

constexpr int kNoiseStrategyCount = 4;

constexpr std::array<NoiseStrategy, 4> all_noise_strategies() {
  return {NoiseStrategy::kSynonymReplace, NoiseStrategy::kSentenceRemove,
          NoiseStrategy::kSentenceShuffle, NoiseStrategy::kWordMask};
}

inline const char* strategy_name(NoiseStrategy s) {
  switch (s) {
    case NoiseStrategy::kSynonymReplace: return "synonym_replace";
    case NoiseStrategy::kSentenceRemove: return "sentence_remove";
    case NoiseStrategy::kSentenceShuffle: return "sentence_shuffle";
    case NoiseStrategy::kWordMask: return "word_mask";
  }
  raise("bad strategy");
}

inline NoiseStrategy strategy_from_name(const std::string& name) {
  for (NoiseStrategy s : all_noise_strategies())
    if (name == strategy_name(s)) return s;
  raise("unknown noise strategy: ", name);
}

// A perturbed copy of a document. Shares the source document's docid.
struct NoisyDocument {
  std::string source_key;
  NoiseStrategy strategy = NoiseStrategy::kSynonymReplace;
  std::string text;
  std::vector<int> tokens;
};

struct PseudoQuery {
  std::string source_key;
  int index = 0; // 1-based
  std::string text;
  std::vector<int> tokens;
};

struct GeneratorBackend {
  enum Kind { kRuleBased, kExternal };
  Kind kind = kRuleBased;
  // external generator service
  std::string endpoint; // e.g. http://127.0.0.1:8089
  std::string model;
  int timeout_ms = 30000;
  int max_inflight = 4;
};

inline std::string render_prompt(NoiseStrategy s, const std::string& doc_text) {
  switch (s) {
    case NoiseStrategy::kSynonymReplace:
      return "Replace some words in the following document with their synonyms while "
             "maintaining the overall semantic meaning: " + doc_text + ".";
    case NoiseStrategy::kSentenceRemove:
      return "Remove one or more sentences from the following document, while maintaining "
             "the overall semantic meaning: " + doc_text + ".";
    case NoiseStrategy::kSentenceShuffle:
      return "Rearrange the sentences in the following document to create a new flow, while "
             "maintaining the overall semantic meaning: " + doc_text + ".";
    case NoiseStrategy::kWordMask:
      return "Mask some words with [Masked] in the following document, while maintaining the "
             "overall semantic meaning: " + doc_text + ".";
  }
  raise("bad strategy");
}

inline std::string render_query_prompt(const std::string& doc_text, int x) {
  return "Given the following document " + doc_text + ", generate " + std::to_string(x) +
         " insightful queries that a reader might have after reading the content. Ensure the "
         "queries cover key concepts.";
}

// Sentences end at . ! ? (delimiter kept); a trailing fragment without a
// terminator still counts as a sentence.
inline std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    cur.push_back(ch);
    if (ch == '.' || ch == '!' || ch == '?') {
      while (!cur.empty() && std::isspace(static_cast<unsigned char>(cur.front()))) cur.erase(cur.begin());
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    }
  }
  while (!cur.empty() && std::isspace(static_cast<unsigned char>(cur.front()))) cur.erase(cur.begin());
  while (!cur.empty() && std::isspace(static_cast<unsigned char>(cur.back()))) cur.pop_back();
  if (!cur.empty()) out.push_back(cur);
  return out;
}

namespace detail {

inline const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> s = {
      "the", "a",  "an",  "of",   "to",   "and",  "in",   "is",   "are",  "was",  "were",
      "it",  "at", "on",  "for",  "with", "as",   "by",   "be",   "or",   "from", "but",
      "not", "no", "has", "have", "had",  "its",  "this", "that", "these", "those", "they",
      "we",  "he", "she", "you",  "i",    "their", "his",  "her",  "our",  "your", "will",
      "can", "do", "does", "did",  "than", "then", "so",   "such", "into", "about", "after",
      "also"};
  return s;
}

inline const std::unordered_map<std::string, std::string>& synonym_lexicon() {
  static const std::unordered_map<std::string, std::string> lex = {
      {"big", "large"},        {"large", "big"},          {"small", "little"},
      {"little", "small"},     {"fast", "quick"},         {"quick", "fast"},
      {"slow", "sluggish"},    {"happy", "glad"},         {"glad", "happy"},
      {"sad", "unhappy"},      {"smart", "clever"},       {"clever", "smart"},
      {"hard", "difficult"},   {"difficult", "hard"},     {"easy", "simple"},
      {"simple", "easy"},      {"begin", "start"},        {"start", "begin"},
      {"end", "finish"},       {"finish", "end"},         {"buy", "purchase"},
      {"purchase", "buy"},     {"cost", "price"},         {"price", "cost"},
      {"show", "display"},     {"display", "show"},       {"make", "build"},
      {"build", "make"},       {"help", "assist"},        {"assist", "help"},
      {"need", "require"},     {"require", "need"},       {"use", "employ"},
      {"employ", "use"},       {"find", "locate"},        {"locate", "find"},
      {"keep", "retain"},      {"retain", "keep"},        {"old", "ancient"},
      {"ancient", "old"},      {"new", "modern"},         {"modern", "new"},
      {"good", "fine"},        {"fine", "good"},          {"bad", "poor"},
      {"poor", "bad"},         {"many", "numerous"},      {"numerous", "many"},
      {"often", "frequently"}, {"frequently", "often"},   {"near", "close"},
      {"close", "near"},       {"far", "distant"},        {"distant", "far"},
      {"rich", "wealthy"},     {"wealthy", "rich"},       {"famous", "renowned"},
      {"renowned", "famous"},  {"important", "significant"}, {"significant", "important"},
      {"common", "typical"},   {"typical", "common"},     {"rare", "scarce"},
      {"scarce", "rare"},      {"strong", "powerful"},    {"powerful", "strong"},
      {"weak", "feeble"},      {"feeble", "weak"},        {"cold", "chilly"},
      {"chilly", "cold"},      {"hot", "warm"},           {"warm", "hot"},
      {"wet", "damp"},         {"damp", "wet"},           {"dry", "arid"},
      {"arid", "dry"},         {"street", "road"},        {"road", "street"},
      {"car", "automobile"},   {"automobile", "car"},     {"home", "house"},
      {"house", "home"},       {"country", "nation"},     {"nation", "country"},
      {"sea", "ocean"},        {"ocean", "sea"},          {"mountain", "peak"},
      {"peak", "mountain"},    {"doctor", "physician"},   {"physician", "doctor"},
      {"illness", "sickness"}, {"sickness", "illness"},   {"answer", "reply"},
      {"reply", "answer"},     {"question", "query"},     {"query", "question"},
      {"speak", "talk"},       {"talk", "speak"},         {"walk", "stroll"},
      {"stroll", "walk"},      {"run", "sprint"},         {"sprint", "run"},
      {"eat", "consume"},      {"consume", "eat"},        {"money", "cash"},
      {"cash", "money"},       {"job", "occupation"},     {"occupation", "job"},
      {"work", "labor"},       {"labor", "work"},         {"area", "region"},
      {"region", "area"},      {"part", "portion"},       {"portion", "part"},
      {"whole", "entire"},     {"entire", "whole"},       {"true", "correct"},
      {"correct", "true"},     {"wrong", "false"},        {"gasoline", "petrol"},
      {"petrol", "gasoline"},  {"fuel", "gas"},           {"rain", "rainfall"},
      {"storm", "tempest"},    {"city", "metropolis"},    {"town", "village"},
      {"village", "town"},     {"food", "fare"},          {"water", "liquid"},
      {"heat", "warmth"},      {"warmth", "heat"},        {"cheap", "inexpensive"},
      {"inexpensive", "cheap"}, {"average", "typical"},   {"yearly", "annual"},
      {"annual", "yearly"}};
  return lex;
}

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// lowercase core of a word, with leading/trailing punctuation stripped
inline std::string word_core(const std::string& w, std::string* prefix = nullptr,
                             std::string* suffix = nullptr) {
  size_t b = 0, e = w.size();
  while (b < e && !is_word_byte(static_cast<unsigned char>(w[b]))) ++b;
  while (e > b && !is_word_byte(static_cast<unsigned char>(w[e - 1]))) --e;
  if (prefix) *prefix = w.substr(0, b);
  if (suffix) *suffix = w.substr(e);
  std::string core = w.substr(b, e - b);
  for (char& c : core) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return core;
}

inline bool is_content_word(const std::string& core) {
  if (core.size() < 2) return false;
  if (stopwords().count(core)) return false;
  for (char c : core)
    if (std::isalpha(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 0x80)
      return true;
  return false;
}

inline size_t ceil_fraction(size_t n, double frac) {
  return static_cast<size_t>(std::ceil(frac * static_cast<double>(n)));
}

inline std::string rule_synonym_replace(const std::string& text, Rng& rng) {
  std::vector<std::string> words = whitespace_tokens(text);
  std::vector<size_t> content;
  for (size_t i = 0; i < words.size(); ++i)
    if (is_content_word(word_core(words[i]))) content.push_back(i);
  if (content.empty()) return text;
  size_t n_replace = ceil_fraction(content.size(), 0.10);
  for (size_t pick : rng.sample_indices(content.size(), n_replace)) {
    size_t i = content[pick];
    std::string prefix, suffix;
    std::string core = word_core(words[i], &prefix, &suffix);
    auto it = synonym_lexicon().find(core);
    if (it != synonym_lexicon().end()) words[i] = prefix + it->second + suffix;
  }
  return join(words, " ");
}

inline std::string rule_sentence_remove(const std::string& text, Rng& rng) {
  std::vector<std::string> sents = split_sentences(text);
  if (sents.size() <= 1) return text; // never remove everything
  size_t n_remove = std::min(ceil_fraction(sents.size(), 0.20), sents.size() - 1);
  std::vector<size_t> removed = rng.sample_indices(sents.size(), n_remove);
  std::set<size_t> gone(removed.begin(), removed.end());
  std::vector<std::string> kept;
  for (size_t i = 0; i < sents.size(); ++i)
    if (!gone.count(i)) kept.push_back(sents[i]);
  return join(kept, " ");
}

inline std::string rule_sentence_shuffle(const std::string& text, Rng& rng) {
  std::vector<std::string> sents = split_sentences(text);
  if (sents.size() < 2) return text; // identity is the only permutation
  std::vector<size_t> perm(sents.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  do {
    rng.shuffle(perm);
  } while (std::is_sorted(perm.begin(), perm.end()));
  std::vector<std::string> out;
  out.reserve(sents.size());
  for (size_t i : perm) out.push_back(sents[i]);
  return join(out, " ");
}

inline std::string rule_word_mask(const std::string& text, Rng& rng) {
  std::vector<std::string> words = whitespace_tokens(text);
  if (words.empty()) return text;
  size_t n_mask = ceil_fraction(words.size(), 0.15);
  for (size_t i : rng.sample_indices(words.size(), n_mask)) words[i] = "[Masked]";
  return join(words, " ");
}

inline std::string external_generate(const GeneratorBackend& b, const std::string& prompt,
                                     const std::string& context) {
  std::string endpoint = b.endpoint;
  if (const char* env = std::getenv("BOOTRET_EXTERNAL_ENDPOINT"); env != nullptr && *env != '\0')
    endpoint = env;
  if (endpoint.empty()) raise("external backend: no endpoint configured (", context, ")");

  std::string host = endpoint;
  std::string path = "/generate";
  size_t scheme = host.find("://");
  size_t path_start = host.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start != std::string::npos) {
    path = host.substr(path_start);
    host = host.substr(0, path_start);
  }

  httplib::Client client(host);
  client.set_connection_timeout(b.timeout_ms / 1000, (b.timeout_ms % 1000) * 1000);
  client.set_read_timeout(b.timeout_ms / 1000, (b.timeout_ms % 1000) * 1000);

  nlohmann::json req;
  req["model"] = b.model;
  req["prompt"] = prompt;
  req["max_tokens"] = 512;
  auto res = client.Post(path, req.dump(), "application/json");
  if (!res) raise("external backend: request failed (", context, "): ", httplib::to_string(res.error()));
  if (res->status != 200)
    raise("external backend: HTTP ", res->status, " (", context, ")");
  nlohmann::json resp = nlohmann::json::parse(res->body);
  if (!resp.contains("text") || !resp["text"].is_string())
    raise("external backend: response missing text field (", context, ")");
  std::string text = resp["text"].get<std::string>();
  if (text.empty()) raise("external backend: empty generation (", context, ")");
  return text;
}

} // namespace detail

inline NoisyDocument make_noisy(const Document& doc, NoiseStrategy strategy,
                                const GeneratorBackend& backend, uint64_t seed,
                                const Vocabulary& vocab) {
  if (split_sentences(doc.text).empty()) raise("make_noisy: document ", doc.doc_key, " is empty");
  NoisyDocument out;
  out.source_key = doc.doc_key;
  out.strategy = strategy;
  if (backend.kind == GeneratorBackend::kRuleBased) {
    Rng rng(mix_seed(mix_seed(seed, hash_str(doc.doc_key)), static_cast<uint64_t>(strategy)));
    switch (strategy) {
      case NoiseStrategy::kSynonymReplace: out.text = detail::rule_synonym_replace(doc.text, rng); break;
      case NoiseStrategy::kSentenceRemove: out.text = detail::rule_sentence_remove(doc.text, rng); break;
      case NoiseStrategy::kSentenceShuffle: out.text = detail::rule_sentence_shuffle(doc.text, rng); break;
      case NoiseStrategy::kWordMask: out.text = detail::rule_word_mask(doc.text, rng); break;
    }
  } else {
    out.text = detail::external_generate(
        backend, render_prompt(strategy, doc.text),
        cat("strategy=", strategy_name(strategy), " doc=", doc.doc_key));
  }
  if (out.text.empty()) raise("make_noisy: empty result for ", doc.doc_key);
  out.tokens = tokenize(out.text, vocab);
  return out;
}

// Corpus-level document frequencies, for salience ranking.
struct TokenStats {
  std::unordered_map<std::string, int> doc_freq;
  int n_docs = 0;

  static TokenStats build(const Corpus& corpus) {
    TokenStats st;
    st.n_docs = static_cast<int>(corpus.documents.size());
    for (const auto& d : corpus.documents) {
      std::set<std::string> distinct;
      for (const auto& w : split_words(d.text)) distinct.insert(w);
      for (const auto& w : distinct) ++st.doc_freq[w];
    }
    return st;
  }

  double idf(const std::string& w) const {
    auto it = doc_freq.find(w);
    int df = it == doc_freq.end() ? 0 : it->second;
    return std::log((1.0 + n_docs) / (1.0 + df));
  }
};

// X queries per document, each a seeded sample of 2..5 of the document's
// highest-IDF content words.
inline std::vector<PseudoQuery> make_pseudo_queries(const Document& doc, int x_count,
                                                    const GeneratorBackend& backend, uint64_t seed,
                                                    const Vocabulary& vocab,
                                                    const TokenStats& stats) {
  if (x_count < 1) raise("make_pseudo_queries: X must be >= 1");
  std::vector<PseudoQuery> out;

  if (backend.kind == GeneratorBackend::kExternal) {
    std::string text = detail::external_generate(
        backend, render_query_prompt(doc.text, x_count), cat("pseudo_query doc=", doc.doc_key));
    std::istringstream is(text);
    std::string line;
    while (static_cast<int>(out.size()) < x_count && std::getline(is, line)) {
      while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
      if (line.empty()) continue;
      PseudoQuery q;
      q.source_key = doc.doc_key;
      q.index = static_cast<int>(out.size()) + 1;
      q.text = line;
      q.tokens = tokenize(line, vocab, kMaxQueryTokens);
      out.push_back(std::move(q));
    }
    if (static_cast<int>(out.size()) < x_count)
      raise("external backend: got ", out.size(), " queries, wanted ", x_count, " (doc=",
            doc.doc_key, ")");
    return out;
  }

  std::vector<std::string> pool;
  {
    std::set<std::string> distinct;
    for (const auto& w : split_words(doc.text))
      if (detail::is_content_word(w)) distinct.insert(w);
    pool.assign(distinct.begin(), distinct.end());
  }
  if (pool.size() < 2)
    raise("make_pseudo_queries: document ", doc.doc_key, " has fewer than 2 distinct content tokens");
  std::sort(pool.begin(), pool.end(), [&](const std::string& a, const std::string& b) {
    double ia = stats.idf(a), ib = stats.idf(b);
    if (ia != ib) return ia > ib;
    return a < b;
  });
  if (pool.size() > 12) pool.resize(12);

  Rng rng(mix_seed(seed, hash_str(doc.doc_key)));
  std::set<std::string> seen;
  for (int x = 1; x <= x_count; ++x) {
    std::string text;
    for (int attempt = 0; attempt < 64; ++attempt) {
      size_t len = std::min<size_t>(2 + rng.index(4), pool.size());
      std::vector<std::string> words;
      for (size_t i : rng.sample_indices(pool.size(), len)) words.push_back(pool[i]);
      text = bootret::join(words, " ");
      if (!seen.count(text)) break; // duplicates allowed only after retries run out
    }
    seen.insert(text);
    PseudoQuery q;
    q.source_key = doc.doc_key;
    q.index = x;
    q.text = text;
    q.tokens = tokenize(text, vocab, kMaxQueryTokens);
    out.push_back(std::move(q));
  }
  return out;
}

// One entry per document, one noisy variant per strategy.
struct NoisyStore {
  std::map<std::string, std::vector<NoisyDocument>> by_key;

  const std::vector<NoisyDocument>& variants(const std::string& doc_key) const {
    auto it = by_key.find(doc_key);
    if (it == by_key.end()) raise("noisy store: unknown doc_key ", doc_key);
    return it->second;
  }
  bool empty() const { return by_key.empty(); }
};

struct QueryStore {
  std::map<std::string, std::vector<PseudoQuery>> by_key;

  const std::vector<PseudoQuery>& queries(const std::string& doc_key) const {
    auto it = by_key.find(doc_key);
    if (it == by_key.end()) raise("query store: unknown doc_key ", doc_key);
    return it->second;
  }
  bool empty() const { return by_key.empty(); }
};

namespace detail {

// Runs fn over every document with at most max_inflight concurrent calls.
// Results land in corpus order regardless of completion order.
template <typename T, typename Fn>
std::vector<T> map_documents(const Corpus& corpus, int max_inflight, Fn&& fn) {
  std::vector<T> results(corpus.documents.size());
  size_t i = 0;
  while (i < corpus.documents.size()) {
    size_t chunk = std::min<size_t>(static_cast<size_t>(std::max(1, max_inflight)),
                                    corpus.documents.size() - i);
    std::vector<std::future<T>> futures;
    futures.reserve(chunk);
    for (size_t j = 0; j < chunk; ++j)
      futures.push_back(std::async(std::launch::async, fn, std::cref(corpus.documents[i + j])));
    for (size_t j = 0; j < chunk; ++j) results[i + j] = futures[j].get();
    i += chunk;
  }
  return results;
}

} // namespace detail

inline NoisyStore build_noisy_store(const Corpus& corpus, const GeneratorBackend& backend,
                                    uint64_t seed) {
  NoisyStore store;
  auto make_all = [&](const Document& d) {
    std::vector<NoisyDocument> v;
    v.reserve(kNoiseStrategyCount);
    for (NoiseStrategy s : all_noise_strategies())
      v.push_back(make_noisy(d, s, backend, seed, corpus.vocab));
    return v;
  };
  if (backend.kind == GeneratorBackend::kExternal) {
    auto results = detail::map_documents<std::vector<NoisyDocument>>(corpus, backend.max_inflight,
                                                                     make_all);
    for (size_t i = 0; i < corpus.documents.size(); ++i)
      store.by_key[corpus.documents[i].doc_key] = std::move(results[i]);
  } else {
    for (const auto& d : corpus.documents) store.by_key[d.doc_key] = make_all(d);
  }
  return store;
}

inline QueryStore build_query_store(const Corpus& corpus, int x_count,
                                    const GeneratorBackend& backend, uint64_t seed) {
  QueryStore store;
  TokenStats stats = TokenStats::build(corpus);
  auto make_all = [&](const Document& d) {
    return make_pseudo_queries(d, x_count, backend, seed, corpus.vocab, stats);
  };
  if (backend.kind == GeneratorBackend::kExternal) {
    auto results =
        detail::map_documents<std::vector<PseudoQuery>>(corpus, backend.max_inflight, make_all);
    for (size_t i = 0; i < corpus.documents.size(); ++i)
      store.by_key[corpus.documents[i].doc_key] = std::move(results[i]);
  } else {
    for (const auto& d : corpus.documents) store.by_key[d.doc_key] = make_all(d);
  }
  return store;
}

// ---- augmentation cache (JSONL of {source_key, kind, seed, text}) ----

inline void save_noisy_cache(const NoisyStore& store, uint64_t seed, const std::string& path) {
  std::ostringstream os;
  for (const auto& [key, variants] : store.by_key) {
    for (const auto& nd : variants) {
      nlohmann::json j;
      j["source_key"] = key;
      j["kind"] = strategy_name(nd.strategy);
      j["seed"] = seed;
      j["text"] = nd.text;
      os << j.dump() << "\n";
    }
  }
  write_file(path, os.str());
}

inline NoisyStore load_noisy_cache(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) raise("cannot open noisy cache: ", path);
  NoisyStore store;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      raise("noisy cache line ", line_no, ": ", e.what());
    }
    NoisyDocument nd;
    nd.source_key = j.at("source_key").get<std::string>();
    nd.strategy = strategy_from_name(j.at("kind").get<std::string>());
    nd.text = j.at("text").get<std::string>();
    nd.tokens = tokenize(nd.text, vocab);
    store.by_key[nd.source_key].push_back(std::move(nd));
  }
  for (const auto& [key, variants] : store.by_key)
    if (variants.size() != kNoiseStrategyCount)
      raise("noisy cache: doc ", key, " has ", variants.size(), " variants, expected ",
            kNoiseStrategyCount);
  return store;
}

inline void save_query_cache(const QueryStore& store, uint64_t seed, const std::string& path) {
  std::ostringstream os;
  for (const auto& [key, queries] : store.by_key) {
    for (const auto& q : queries) {
      nlohmann::json j;
      j["source_key"] = key;
      j["kind"] = "pseudo_query";
      j["seed"] = seed;
      j["text"] = q.text;
      os << j.dump() << "\n";
    }
  }
  write_file(path, os.str());
}

inline QueryStore load_query_cache(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) raise("cannot open query cache: ", path);
  QueryStore store;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      raise("query cache line ", line_no, ": ", e.what());
    }
    if (j.at("kind").get<std::string>() != "pseudo_query")
      raise("query cache line ", line_no, ": unexpected kind");
    PseudoQuery q;
    q.source_key = j.at("source_key").get<std::string>();
    q.text = j.at("text").get<std::string>();
    q.tokens = tokenize(q.text, vocab, kMaxQueryTokens);
    auto& list = store.by_key[q.source_key];
    q.index = static_cast<int>(list.size()) + 1;
    list.push_back(std::move(q));
  }
  return store;
}

} // namespace bootret
