#include "bootret/corpus.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace bootret;
using bootret::testing::TempDir;

namespace {

std::string three_line_corpus() {
  return R"({"doc_key": "D1", "text": "Germany gasoline cost rises."})"
         "\n"
         R"({"doc_key": "D2", "text": "Heating oil average prices in Germany."})"
         "\n"
         R"({"doc_key": "D3", "text": "Ocean storms near the coast."})"
         "\n";
}

} // namespace

TEST(Ingest, ThreeValidLines) {
  TempDir tmp("corpus");
  write_file(tmp.file("c.jsonl"), three_line_corpus());
  Corpus c = ingest_jsonl(tmp.file("c.jsonl"));
  ASSERT_EQ(c.documents.size(), 3u);
  EXPECT_EQ(c.documents[0].doc_key, "D1");
  EXPECT_EQ(c.documents[2].doc_key, "D3");
  for (const auto& d : c.documents) EXPECT_FALSE(d.tokens.empty());
}

TEST(Ingest, DuplicateKeyNamesLine) {
  TempDir tmp("corpus");
  write_file(tmp.file("c.jsonl"),
             R"({"doc_key": "D1", "text": "one."})"
             "\n"
             R"({"doc_key": "D1", "text": "two."})"
             "\n");
  try {
    ingest_jsonl(tmp.file("c.jsonl"));
    FAIL() << "expected duplicate key error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate doc_key at line 2"), std::string::npos)
        << e.what();
  }
}

TEST(Ingest, MalformedLineCarriesLineNumber) {
  TempDir tmp("corpus");
  write_file(tmp.file("c.jsonl"),
             R"({"doc_key": "D1", "text": "one."})"
             "\n"
             "not json\n");
  try {
    ingest_jsonl(tmp.file("c.jsonl"));
    FAIL() << "expected parse error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("malformed line 2"), std::string::npos) << e.what();
  }
}

TEST(Ingest, LimitTruncates) {
  TempDir tmp("corpus");
  write_file(tmp.file("c.jsonl"), three_line_corpus());
  Corpus c = ingest_jsonl(tmp.file("c.jsonl"), 1);
  EXPECT_EQ(c.documents.size(), 1u);
}

TEST(Tokenize, DirectLookupAndUnk) {
  Vocabulary v;
  int germany = v.add_token("germany");
  int gasoline = v.add_token("gasoline");
  int cost = v.add_token("cost");
  EXPECT_EQ(tokenize("Germany gasoline cost", v), (std::vector<int>{germany, gasoline, cost}));
  EXPECT_TRUE(tokenize("", v).empty());
  EXPECT_EQ(tokenize("germany unseen cost", v),
            (std::vector<int>{germany, Vocabulary::kUnk, cost}));
}

TEST(Tokenize, PunctuationSplitsAndMaskTokenSurvives) {
  Vocabulary v;
  int a = v.add_token("alpha");
  int b = v.add_token("beta");
  EXPECT_EQ(tokenize("Alpha, beta. ALPHA!", v), (std::vector<int>{a, b, a}));
  EXPECT_EQ(tokenize("alpha [Masked] beta", v), (std::vector<int>{a, Vocabulary::kMask, b}));
}

TEST(Tokenize, TruncatesAtCap) {
  Vocabulary v;
  v.add_token("w");
  std::string text;
  for (int i = 0; i < 600; ++i) text += "w ";
  EXPECT_EQ(tokenize(text, v).size(), kMaxDocTokens);
}

TEST(Tokenize, IdempotentOnJoinedTokens) {
  Vocabulary v;
  v.add_token("germany");
  v.add_token("cost");
  std::vector<int> first = tokenize("Germany, unknownword cost [Masked]!", v);
  std::vector<std::string> strs;
  for (int id : first) strs.push_back(v.token(id));
  EXPECT_EQ(tokenize(join(strs, " "), v), first);
}

TEST(BuildVocab, MinCountFiltersAndReservedBlock) {
  std::vector<std::string> texts = {"shared word one.", "shared two."};
  Vocabulary v = build_vocab(texts, 2);
  // reserved + "shared"
  EXPECT_EQ(v.size(), static_cast<int>(Vocabulary::reserved_tokens().size()) + 1);
  EXPECT_EQ(v.id("shared"), 5);
  EXPECT_EQ(v.id("one"), Vocabulary::kUnk);
}

TEST(BuildVocab, AllTokensAtMinCountOne) {
  std::vector<std::string> texts = {"a bb ccc"};
  Vocabulary v = build_vocab(texts, 1);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("bb"));
  EXPECT_TRUE(v.contains("ccc"));
}

TEST(BuildVocab, FrequencyTieBreaksLexicographically) {
  std::vector<std::string> texts = {"zeta apple zeta apple mango"};
  Vocabulary v = build_vocab(texts, 1);
  // apple and zeta both occur twice; apple gets the smaller id
  EXPECT_LT(v.id("apple"), v.id("zeta"));
  EXPECT_LT(v.id("zeta"), v.id("mango") + 100); // mango occurs once, comes last
  EXPECT_GT(v.id("mango"), v.id("zeta"));
}

TEST(BuildVocab, EmptyCorpusRejected) {
  EXPECT_THROW(build_vocab({}, 1), Error);
}

TEST(BuildVocab, IdsContiguousFromZero) {
  std::vector<std::string> texts = {"one two three two"};
  Vocabulary v = build_vocab(texts, 1);
  for (int i = 0; i < v.size(); ++i) EXPECT_NO_THROW(v.token(i));
  EXPECT_THROW(v.token(v.size()), Error);
}

TEST(Ingest, HonorsTokenCap) {
  TempDir tmp("corpus");
  std::string text;
  for (int i = 0; i < 30; ++i) text += "word ";
  write_file(tmp.file("c.jsonl"), cat(R"({"doc_key": "D1", "text": ")", text, "\"}\n"));
  Corpus c = ingest_jsonl(tmp.file("c.jsonl"), 0, 1, /*max_tokens=*/8);
  EXPECT_EQ(c.documents[0].tokens.size(), 8u);
}

TEST(Corpus, RoundTripThroughFiles) {
  TempDir tmp("corpus");
  write_file(tmp.file("c.jsonl"), three_line_corpus());
  Corpus a = ingest_jsonl(tmp.file("c.jsonl"));

  save_corpus_jsonl(a, tmp.file("copy.jsonl"));
  save_vocab(a.vocab, tmp.file("vocab.json"), 1);

  Corpus b = ingest_jsonl(tmp.file("copy.jsonl"));
  ASSERT_EQ(a.documents.size(), b.documents.size());
  for (size_t i = 0; i < a.documents.size(); ++i) {
    EXPECT_EQ(a.documents[i].doc_key, b.documents[i].doc_key);
    EXPECT_EQ(a.documents[i].tokens, b.documents[i].tokens);
  }
  Vocabulary v = load_vocab(tmp.file("vocab.json"));
  EXPECT_TRUE(v == a.vocab);
}

TEST(Queries, TsvParsing) {
  TempDir tmp("queries");
  Vocabulary v;
  v.add_token("germany");
  v.add_token("cost");
  write_file(tmp.file("q.tsv"), "Q1\tgermany cost\tD1\nQ2\tcost only\n");
  auto qs = load_queries_tsv(tmp.file("q.tsv"), v);
  ASSERT_EQ(qs.size(), 2u);
  EXPECT_EQ(qs[0].query_id, "Q1");
  EXPECT_EQ(qs[0].relevant_doc_key, "D1");
  EXPECT_TRUE(qs[1].relevant_doc_key.empty());
  EXPECT_EQ(qs[0].tokens.size(), 2u);
}
