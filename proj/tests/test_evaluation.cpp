#include "bootret/evaluation.hpp"

#include <gtest/gtest.h>

#include "bootret/synth.hpp"
#include "test_util.hpp"

using namespace bootret;
using bootret::testing::TempDir;

namespace {

RankedList ranked_with(const std::vector<std::string>& keys) {
  RankedList out;
  double score = 0.0;
  for (const auto& k : keys) {
    out.push_back({k, score, {}});
    score -= 1.0;
  }
  return out;
}

} // namespace

TEST(Hits, UnitExamples) {
  RankedList r = ranked_with({"A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L"});
  EXPECT_EQ(hits_at_k(r, "A", 1), 1.0);
  EXPECT_EQ(hits_at_k(r, "K", 10), 0.0); // rank 11
  EXPECT_EQ(hits_at_k(r, "ZZZ", 10), 0.0);
  EXPECT_EQ(hits_at_k(r, "J", 10), 1.0);
  EXPECT_THROW(hits_at_k(r, "A", 0), Error);
}

TEST(Mrr, UnitExamples) {
  RankedList r = ranked_with({"A", "B", "C", "D"});
  EXPECT_DOUBLE_EQ(mrr_at_k(r, "B", 3), 0.5);
  EXPECT_DOUBLE_EQ(mrr_at_k(r, "D", 3), 0.0); // rank 4, truncated
  EXPECT_DOUBLE_EQ(mrr_at_k(r, "A", 20), 1.0);
  EXPECT_DOUBLE_EQ(mrr_at_k(r, "ZZZ", 20), 0.0);
}

TEST(Metrics, TwoQueryAggregation) {
  // relevant docs at ranks 1 and 2
  RankedList q1 = ranked_with({"A", "B"});
  RankedList q2 = ranked_with({"A", "B"});
  double hits1 = (hits_at_k(q1, "A", 1) + hits_at_k(q2, "B", 1)) / 2.0;
  double mrr3 = (mrr_at_k(q1, "A", 3) + mrr_at_k(q2, "B", 3)) / 2.0;
  EXPECT_DOUBLE_EQ(hits1, 0.5);
  EXPECT_DOUBLE_EQ(mrr3, 0.75);
}

namespace {

struct EvalFixture {
  Corpus corpus;
  TrainState st;
  std::vector<Query> queries;
  QRels qrels;
};

EvalFixture make_eval_fixture(const TempDir& tmp, int n_docs, uint64_t seed) {
  SynthSpec spec;
  spec.n_docs = n_docs;
  spec.seed = seed;
  SynthCorpus sc = make_synth_corpus(spec);
  const std::string cpath = tmp.file(cat("c", seed, ".jsonl"));
  write_file(cpath, sc.to_jsonl());
  EvalFixture f;
  f.corpus = ingest_jsonl(cpath);

  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.model_dim = 16;
  cfg.groups = 4;
  cfg.clusters = 4;
  TrainerOptions opts;
  opts.seed = seed;
  f.st = initialize(f.corpus, cfg, opts);

  SynthQueries sq = make_synth_queries(sc, 12, "Q", mix_seed(seed, 9));
  const std::string qpath = tmp.file(cat("q", seed, ".tsv"));
  write_file(qpath, sq.queries_tsv);
  f.queries = load_queries_tsv(qpath, f.corpus.vocab);
  const std::string rpath = tmp.file(cat("r", seed, ".tsv"));
  write_file(rpath, sq.qrels_tsv);
  f.qrels = QRels::load_tsv(rpath);
  return f;
}

} // namespace

TEST(Evaluate, DeterministicAndMonotone) {
  TempDir tmp("eval");
  EvalFixture f = make_eval_fixture(tmp, 24, 3);
  PrefixTrie trie = build_trie(f.st.table);
  EvalOptions opts;
  opts.beam.beam = 10;
  MetricsReport a = evaluate(f.st.params, f.st.table, trie, f.queries, f.qrels, opts);
  MetricsReport b = evaluate(f.st.params, f.st.table, trie, f.queries, f.qrels, opts);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_LE(a.hits1, a.hits10);
  EXPECT_LE(a.mrr3, a.mrr20);
  EXPECT_GE(a.hits1, 0.0);
  EXPECT_LE(a.hits10, 1.0);
  EXPECT_EQ(a.rows.size(), f.queries.size());
}

TEST(Evaluate, BeamSubsetRanksOnlyImproveAndFullWidthMatchesExhaustive) {
  TempDir tmp("eval");
  EvalFixture f = make_eval_fixture(tmp, 24, 5);
  PrefixTrie trie = build_trie(f.st.table);

  // a surviving document can only move up when competitors are pruned away
  EvalOptions narrow;
  narrow.beam.beam = 10;
  EvalOptions full;
  full.exhaustive = true;
  MetricsReport nb = evaluate(f.st.params, f.st.table, trie, f.queries, f.qrels, narrow);
  MetricsReport ex = evaluate(f.st.params, f.st.table, trie, f.queries, f.qrels, full);
  ASSERT_EQ(nb.rows.size(), ex.rows.size());
  for (size_t i = 0; i < nb.rows.size(); ++i) {
    if (nb.rows[i].rank > 0) {
      EXPECT_LE(nb.rows[i].rank, ex.rows[i].rank);
    }
  }

  // at full width the beam decode IS the exhaustive ranking
  EvalOptions wide;
  wide.beam.beam = static_cast<int>(f.st.table.size());
  MetricsReport wb = evaluate(f.st.params, f.st.table, trie, f.queries, f.qrels, wide);
  EXPECT_EQ(wb.to_csv(), ex.to_csv());
}

TEST(Evaluate, UnknownRelevantDocIsAnError) {
  TempDir tmp("eval");
  EvalFixture f = make_eval_fixture(tmp, 24, 7);
  PrefixTrie trie = build_trie(f.st.table);
  f.qrels.relevant[f.queries[0].query_id] = "NOT_A_DOC";
  EXPECT_THROW(evaluate(f.st.params, f.st.table, trie, f.queries, f.qrels, {}), Error);
}

TEST(ExportEmbeddings, MatchesEncodeAndIsStable) {
  TempDir tmp("eval");
  EvalFixture f = make_eval_fixture(tmp, 10, 11);
  std::string tsv = export_corpus_embeddings(f.st.params, f.corpus);
  std::string tsv2 = export_corpus_embeddings(f.st.params, f.corpus);
  EXPECT_EQ(tsv, tsv2);

  std::istringstream is(tsv);
  std::string line;
  size_t rows = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    Vec expected = encode(f.st.params, f.corpus.at_key(key).tokens);
    for (double e : expected) {
      double got;
      ls >> got;
      EXPECT_EQ(got, e);
    }
    ++rows;
  }
  EXPECT_EQ(rows, f.corpus.documents.size());
}

TEST(Ablation, AllConfigurationsRunAndEmitCsv) {
  TempDir tmp("eval");
  SynthSpec spec;
  spec.n_docs = 16;
  spec.seed = 13;
  SynthCorpus sc = make_synth_corpus(spec);
  write_file(tmp.file("c.jsonl"), sc.to_jsonl());

  AblationContext ctx;
  Corpus corpus = ingest_jsonl(tmp.file("c.jsonl"));
  ctx.corpus = &corpus;
  GeneratorBackend rule;
  NoisyStore noisy = build_noisy_store(corpus, rule, 1);
  QueryStore queries = build_query_store(corpus, 2, rule, 2);
  ctx.stores = {&noisy, &queries};
  ctx.cfg.embed_dim = 8;
  ctx.cfg.model_dim = 16;
  ctx.cfg.groups = 4;
  ctx.cfg.clusters = 4;
  ctx.sched.total_steps = 8;
  ctx.sched.first_refresh_step = 4;
  ctx.sched.refresh_every = 2;
  ctx.sched.batch_n = 4;
  ctx.sched.learning_rate = 0.01;
  ctx.fopts.steps = 4;
  ctx.fopts.batch_n = 4;
  ctx.fopts.pseudo_queries_per_doc = 2;

  SynthQueries train = make_synth_queries(sc, 6, "T", 21);
  write_file(tmp.file("train.tsv"), train.queries_tsv);
  ctx.train_queries = load_queries_tsv(tmp.file("train.tsv"), corpus.vocab);
  SynthQueries test = make_synth_queries(sc, 6, "E", 22);
  write_file(tmp.file("test.tsv"), test.queries_tsv);
  write_file(tmp.file("test_qrels.tsv"), test.qrels_tsv);
  ctx.eval_queries = load_queries_tsv(tmp.file("test.tsv"), corpus.vocab);
  ctx.qrels = QRels::load_tsv(tmp.file("test_qrels.tsv"));
  ctx.eval.beam.beam = 5;
  ctx.work_dir = tmp.dir("ablate");

  std::vector<AblationRow> rows = run_ablation(ctx, {1, 2});
  EXPECT_EQ(rows.size(), ablation_config_names().size() * 2);

  std::string csv = ablation_csv(rows);
  for (const auto& name : ablation_config_names()) {
    EXPECT_NE(csv.find(name + ",1,"), std::string::npos) << name;
    EXPECT_NE(csv.find(name + ",mean,"), std::string::npos) << name;
    EXPECT_NE(csv.find(name + ",stdev,"), std::string::npos) << name;
  }
}

TEST(Sweep, EmitsOnePointPerIteration) {
  TempDir tmp("eval");
  SynthSpec spec;
  spec.n_docs = 16;
  spec.seed = 17;
  SynthCorpus sc = make_synth_corpus(spec);
  write_file(tmp.file("c.jsonl"), sc.to_jsonl());

  AblationContext ctx;
  Corpus corpus = ingest_jsonl(tmp.file("c.jsonl"));
  ctx.corpus = &corpus;
  GeneratorBackend rule;
  NoisyStore noisy = build_noisy_store(corpus, rule, 1);
  QueryStore queries = build_query_store(corpus, 2, rule, 2);
  ctx.stores = {&noisy, &queries};
  ctx.cfg.embed_dim = 8;
  ctx.cfg.model_dim = 16;
  ctx.cfg.groups = 4;
  ctx.cfg.clusters = 4;
  ctx.sched.first_refresh_step = 4;
  ctx.sched.refresh_every = 2;
  ctx.sched.batch_n = 4;
  ctx.sched.learning_rate = 0.01;

  SynthQueries test = make_synth_queries(sc, 5, "E", 23);
  write_file(tmp.file("test.tsv"), test.queries_tsv);
  write_file(tmp.file("test_qrels.tsv"), test.qrels_tsv);
  ctx.eval_queries = load_queries_tsv(tmp.file("test.tsv"), corpus.vocab);
  ctx.qrels = QRels::load_tsv(tmp.file("test_qrels.tsv"));
  ctx.eval.beam.beam = 5;
  ctx.work_dir = tmp.dir("sweep");

  std::vector<SweepPoint> points = run_iteration_sweep(ctx, 3);
  ASSERT_EQ(points.size(), 3u);
  for (int n = 0; n < 3; ++n) EXPECT_EQ(points[static_cast<size_t>(n)].iteration, n + 1);

  std::string csv = sweep_csv(points);
  EXPECT_NE(csv.find("iteration,hits@1,hits@10,mrr@3,mrr@20"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4); // header + 3 points
}

TEST(LatencyCsv, TableLayout) {
  LatencyReport r;
  r.mean_ms = 1.25;
  r.trie_bytes = 2 * 1024 * 1024;
  std::string csv = latency_csv(r);
  EXPECT_NE(csv.find("method,memory_mb,latency_ms"), std::string::npos);
  EXPECT_NE(csv.find("BootRet,2,1.25"), std::string::npos);
}
