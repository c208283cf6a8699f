#pragma once

#include <cctype>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "bootret/common.hpp"
#include "bootret/rng.hpp"

namespace bootret {

// Synthetic topical corpus for tests and the bundled toy data set. Each
// document mixes words from one topic pool with shared filler words plus a
// repeated document-unique term, so queries built from salient words can
// actually identify single documents while topics give the PQ codebooks
// cluster structure.
struct SynthSpec {
  int n_docs = 200;
  int n_topics = 15;
  int words_per_topic = 16;
  int sentences_min = 4;
  int sentences_max = 8;
  int words_per_sentence_min = 6;
  int words_per_sentence_max = 12;
  double topic_word_ratio = 0.7;
  uint64_t seed = 7;
};

namespace detail {

inline std::string synth_word(uint64_t tag, std::set<std::string>& used) {
  static const char* syllables[] = {"ba", "ke",  "di",  "mo",  "ru",  "sa",  "ti",
                                    "vo", "ne",  "la",  "pu",  "go",  "zi",  "fa",
                                    "mer", "kon", "dal", "sur", "bel", "tor", "vin"};
  constexpr size_t n_syl = sizeof(syllables) / sizeof(syllables[0]);
  for (uint64_t salt = 0;; ++salt) {
    uint64_t h = mix_seed(tag, salt);
    std::string w = std::string(syllables[h % n_syl]) + syllables[(h >> 8) % n_syl] +
                    syllables[(h >> 16) % n_syl];
    if (used.insert(w).second) return w;
  }
}

inline const std::vector<std::string>& synth_common_words() {
  static const std::vector<std::string> w = {
      "big",     "small",  "fast",   "cost",    "price",   "road",    "city",   "country",
      "water",   "food",   "money",  "work",    "area",    "question", "answer", "storm",
      "rain",    "sea",    "mountain", "doctor", "house",   "home",    "car",    "street",
      "town",    "village", "region", "nation",  "cash",    "fuel",    "system", "report",
      "value",   "level",  "record", "market",  "season",  "result",  "number", "group",
      "member",  "service", "project", "event",  "change",  "public",  "local",  "study",
      "model",   "method"};
  return w;
}

} // namespace detail

struct SynthDocument {
  std::string doc_key;
  std::string text;
  int topic = 0;
  std::string unique_word;
  std::vector<std::string> topic_words_used;
};

struct SynthCorpus {
  std::vector<SynthDocument> docs;

  std::string to_jsonl() const {
    std::ostringstream os;
    for (const auto& d : docs)
      os << "{\"doc_key\": \"" << d.doc_key << "\", \"text\": \"" << d.text << "\"}\n";
    return os.str();
  }
};

inline SynthCorpus make_synth_corpus(const SynthSpec& spec) {
  std::set<std::string> used(detail::synth_common_words().begin(),
                             detail::synth_common_words().end());
  std::vector<std::vector<std::string>> topics(static_cast<size_t>(spec.n_topics));
  for (int t = 0; t < spec.n_topics; ++t)
    for (int j = 0; j < spec.words_per_topic; ++j)
      topics[static_cast<size_t>(t)].push_back(
          detail::synth_word(mix_seed(spec.seed, (static_cast<uint64_t>(t) << 20) | j), used));

  SynthCorpus corpus;
  for (int i = 0; i < spec.n_docs; ++i) {
    SynthDocument d;
    char key[16];
    std::snprintf(key, sizeof(key), "D%04d", i);
    d.doc_key = key;
    d.topic = i % spec.n_topics;
    d.unique_word = detail::synth_word(mix_seed(spec.seed, 0xD0C0000ULL + i), used);

    Rng rng(mix_seed(mix_seed(spec.seed, hash_str("doc")), static_cast<uint64_t>(i)));
    const auto& pool = topics[static_cast<size_t>(d.topic)];
    const auto& common = detail::synth_common_words();
    std::set<std::string> topic_used;

    const int n_sent =
        spec.sentences_min + static_cast<int>(rng.index(
                                 static_cast<size_t>(spec.sentences_max - spec.sentences_min + 1)));
    // the unique term shows up in a few fixed sentence slots
    std::vector<size_t> unique_slots =
        rng.sample_indices(static_cast<size_t>(n_sent), std::min(3, n_sent));
    std::set<size_t> unique_at(unique_slots.begin(), unique_slots.end());

    std::vector<std::string> sentences;
    for (int s = 0; s < n_sent; ++s) {
      const int n_words = spec.words_per_sentence_min +
                          static_cast<int>(rng.index(static_cast<size_t>(
                              spec.words_per_sentence_max - spec.words_per_sentence_min + 1)));
      std::vector<std::string> words;
      for (int w = 0; w < n_words; ++w) {
        if (rng.uniform() < spec.topic_word_ratio) {
          const std::string& tw = pool[rng.index(pool.size())];
          words.push_back(tw);
          topic_used.insert(tw);
        } else {
          words.push_back(common[rng.index(common.size())]);
        }
      }
      if (unique_at.count(static_cast<size_t>(s)))
        words[rng.index(words.size())] = d.unique_word;
      words[0][0] = static_cast<char>(std::toupper(static_cast<unsigned char>(words[0][0])));
      sentences.push_back(join(words, " ") + ".");
    }
    d.text = join(sentences, " ");
    d.topic_words_used.assign(topic_used.begin(), topic_used.end());
    corpus.docs.push_back(std::move(d));
  }
  return corpus;
}

// Labeled query sets over a synthetic corpus: each query samples the target
// document's unique term plus 1..3 of its topic words.
struct SynthQueries {
  std::string queries_tsv; // query_id \t text \t relevant_doc_key
  std::string qrels_tsv;   // query_id \t doc_key
};

inline SynthQueries make_synth_queries(const SynthCorpus& corpus, int n_queries,
                                       const char* id_prefix, uint64_t seed) {
  SynthQueries out;
  std::ostringstream qs, qr;
  Rng rng(seed);
  for (int i = 0; i < n_queries; ++i) {
    const SynthDocument& d = corpus.docs[rng.index(corpus.docs.size())];
    std::vector<std::string> words;
    words.push_back(d.unique_word);
    if (!d.topic_words_used.empty()) {
      size_t extra = 1 + rng.index(std::min<size_t>(3, d.topic_words_used.size()));
      for (size_t j : rng.sample_indices(d.topic_words_used.size(), extra))
        words.push_back(d.topic_words_used[j]);
    }
    rng.shuffle(words);
    char qid[24];
    std::snprintf(qid, sizeof(qid), "%s%04d", id_prefix, i);
    qs << qid << '\t' << join(words, " ") << '\t' << d.doc_key << '\n';
    qr << qid << '\t' << d.doc_key << '\n';
  }
  out.queries_tsv = qs.str();
  out.qrels_tsv = qr.str();
  return out;
}

} // namespace bootret
