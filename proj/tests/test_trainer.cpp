#include "bootret/trainer.hpp"

#include <gtest/gtest.h>

#include "bootret/synth.hpp"
#include "test_util.hpp"

using namespace bootret;
using bootret::testing::TempDir;

namespace {

struct TrainFixture {
  Corpus corpus;
  NoisyStore noisy;
  QueryStore queries;
  ModelConfig cfg;
  TrainerOptions opts;
  Stores stores() const { return {&noisy, &queries}; }
};

TrainFixture make_train_fixture(const TempDir& tmp, int n_docs, uint64_t seed) {
  SynthSpec spec;
  spec.n_docs = n_docs;
  spec.seed = seed;
  const std::string path = tmp.file(cat("c", n_docs, "_", seed, ".jsonl"));
  write_file(path, make_synth_corpus(spec).to_jsonl());
  TrainFixture f;
  f.corpus = ingest_jsonl(path);
  GeneratorBackend rule;
  f.noisy = build_noisy_store(f.corpus, rule, mix_seed(seed, 100));
  f.queries = build_query_store(f.corpus, 3, rule, mix_seed(seed, 200));
  f.cfg.embed_dim = 8;
  f.cfg.model_dim = 16;
  f.cfg.groups = 4;
  f.cfg.clusters = 4;
  f.opts.seed = seed;
  return f;
}

IterationSchedule small_schedule() {
  IterationSchedule s;
  s.total_steps = 20;
  s.first_refresh_step = 6;
  s.refresh_every = 4;
  s.learning_rate = 0.01;
  s.batch_n = 4;
  s.max_iterations = 10;
  return s;
}

size_t count_lines(const std::string& text) {
  size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

} // namespace

TEST(PlannedRefreshes, MatchesScheduleArithmetic) {
  IterationSchedule desk;
  desk.total_steps = 2000;
  desk.first_refresh_step = 500;
  desk.refresh_every = 300;
  desk.max_iterations = 100;
  EXPECT_EQ(planned_refreshes(desk), 5);

  IterationSchedule large;
  large.total_steps = 500000;
  large.first_refresh_step = 100000;
  large.refresh_every = 40000;
  large.max_iterations = 100;
  EXPECT_EQ(planned_refreshes(large), 10);

  large.max_iterations = 7;
  EXPECT_EQ(planned_refreshes(large), 7);

  IterationSchedule degenerate;
  degenerate.total_steps = 10;
  degenerate.first_refresh_step = 10;
  degenerate.refresh_every = 5;
  EXPECT_EQ(planned_refreshes(degenerate), 0);
}

TEST(Initialize, DeterministicAndBijective) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 30, 3);
  TrainState a = initialize(f.corpus, f.cfg, f.opts);
  TrainState b = initialize(f.corpus, f.cfg, f.opts);
  EXPECT_EQ(a.table.forward, b.table.forward);
  EXPECT_EQ(a.codebook.centroids, b.codebook.centroids);
  EXPECT_EQ(a.params.w.enc_W.a, b.params.w.enc_W.a);
  EXPECT_EQ(a.iteration, 0);
  EXPECT_EQ(a.table.iteration_tag, 0);
  EXPECT_EQ(a.table.size(), f.corpus.documents.size());
}

TEST(PretrainIteration, ZeroStepsStillIncrementsT) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 5);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  IterationSchedule sched = small_schedule();
  st.global_step = sched.total_steps; // budget exhausted
  const Vec before = st.params.w.enc_W.a;
  pretrain_iteration(st, f.corpus, f.stores(), sched, f.opts);
  EXPECT_EQ(st.iteration, 1);
  EXPECT_EQ(st.params.w.enc_W.a, before);
}

TEST(PretrainIteration, TraceHasOneRowPerStepAndTableIsFrozen) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 7);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  const uint64_t table_before = table_hash(st.table);
  IterationSchedule sched = small_schedule();
  {
    LossTrace trace(tmp.file("trace.csv"));
    pretrain_iteration(st, f.corpus, f.stores(), sched, f.opts, &trace);
  }
  EXPECT_EQ(st.global_step, sched.first_refresh_step);
  EXPECT_EQ(table_hash(st.table), table_before);
  // header + one row per step
  EXPECT_EQ(count_lines(read_file(tmp.file("trace.csv"))),
            static_cast<size_t>(sched.first_refresh_step) + 1);
}

TEST(Refresh, BeforeTrainingNothingChangesAndRepeatIsIdempotent) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 25, 11);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  st.iteration = 1; // pretend one iteration ran without touching the params
  auto changes = bootstrap_refresh(st, f.corpus, f.opts);
  EXPECT_TRUE(changes.empty());
  EXPECT_EQ(st.table.iteration_tag, 1);

  DocidTable after_first = st.table;
  st.iteration = 2;
  auto changes2 = bootstrap_refresh(st, f.corpus, f.opts);
  EXPECT_TRUE(changes2.empty());
  EXPECT_EQ(st.table.forward, after_first.forward);
}

TEST(PretrainIteration, NonFiniteLossAbortsWithStepNumber) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 61);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  st.params.w.dec_out_b(0, 0) = std::numeric_limits<double>::quiet_NaN();
  IterationSchedule sched = small_schedule();
  try {
    pretrain_iteration(st, f.corpus, f.stores(), sched, f.opts);
    FAIL() << "expected abort";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("at step 0"), std::string::npos) << e.what();
  }
}

TEST(Refresh, FreshKmeansAndAdamResetFlags) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 25, 67);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);

  // give the Adam moments something to lose
  TensorSet g = TensorSet::shaped(st.params.cfg);
  g.enc_W(0, 0) = 1.0;
  optimizer_step(st.params, g, 0.01);
  ASSERT_NE(st.params.adam_t, 0);

  st.iteration = 1;
  TrainerOptions fresh = f.opts;
  fresh.warm_start_kmeans = false;
  fresh.reset_adam_on_refresh = true;
  bootstrap_refresh(st, f.corpus, fresh);
  EXPECT_EQ(st.table.iteration_tag, 1);
  EXPECT_EQ(st.table.size(), f.corpus.documents.size());
  EXPECT_EQ(st.params.adam_t, 0);
  bool moments_zero = true;
  st.params.adam_m.visit([&](const char*, const Mat& m) {
    for (double v : m.a) moments_zero = moments_zero && v == 0.0;
  });
  EXPECT_TRUE(moments_zero);
}

TEST(Refresh, RequiresAtLeastOneIteration) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 13);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  EXPECT_THROW(bootstrap_refresh(st, f.corpus, f.opts), Error);
}

TEST(ChangeLog, ListsEveryChangedDocument) {
  TempDir tmp("trainer");
  std::vector<DocidChange> changes = {{"D1", Docid{{0, 1}}, Docid{{0, 2}}},
                                      {"D7", Docid{{3, 3}}, Docid{{1, 3}}}};
  write_change_log(changes, tmp.file("log.csv"));
  std::string text = read_file(tmp.file("log.csv"));
  EXPECT_NE(text.find("doc_key,old_codes,new_codes"), std::string::npos);
  EXPECT_NE(text.find("D1,0-1,0-2"), std::string::npos);
  EXPECT_NE(text.find("D7,3-3,1-3"), std::string::npos);
}

TEST(RunBootstrap, RefreshCountAndStepAccounting) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 17);
  IterationSchedule sched = small_schedule(); // 20 total, first 6, every 4
  TrainState st;
  BootstrapResult r =
      run_bootstrap(st, f.corpus, f.stores(), f.cfg, sched, f.opts, tmp.dir("run"));
  EXPECT_EQ(r.refreshes, planned_refreshes(sched));
  EXPECT_EQ(st.global_step, sched.total_steps);
  EXPECT_FALSE(r.bs_dir.empty());
  EXPECT_FALSE(r.mt_dir.empty());
  EXPECT_EQ(r.change_counts.size(), static_cast<size_t>(r.refreshes));
}

TEST(RunBootstrap, MaxIterationsOneMakesBsEqualMt) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 19);
  IterationSchedule sched = small_schedule();
  sched.max_iterations = 1;
  TrainState st;
  BootstrapResult r =
      run_bootstrap(st, f.corpus, f.stores(), f.cfg, sched, f.opts, tmp.dir("run1"));
  EXPECT_EQ(r.refreshes, 1);
  for (const char* file : {"/model.ckpt", "/codebook.json", "/docids.json", "/state.json"})
    EXPECT_EQ(read_file(r.bs_dir + file), read_file(r.mt_dir + file)) << file;
}

TEST(RunBootstrap, FixedDocidModeNeverRefreshes) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 23);
  IterationSchedule sched = small_schedule();
  TrainState st;
  BootstrapResult r = run_bootstrap(st, f.corpus, f.stores(), f.cfg, sched, f.opts,
                                    tmp.dir("fixed"), /*dynamic_docids=*/false);
  EXPECT_EQ(r.refreshes, 0);
  EXPECT_EQ(st.global_step, sched.total_steps);
  EXPECT_EQ(st.table.iteration_tag, 0);
}

TEST(RunBootstrap, TwoRunsAreByteIdentical) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 29);
  IterationSchedule sched = small_schedule();
  TrainState a, b;
  BootstrapResult ra = run_bootstrap(a, f.corpus, f.stores(), f.cfg, sched, f.opts, tmp.dir("a"));
  BootstrapResult rb = run_bootstrap(b, f.corpus, f.stores(), f.cfg, sched, f.opts, tmp.dir("b"));
  for (const char* file : {"/model.ckpt", "/codebook.json", "/docids.json", "/state.json"})
    EXPECT_EQ(read_file(ra.mt_dir + file), read_file(rb.mt_dir + file)) << file;
}

TEST(RunBootstrap, ResumeFromSnapshotIsBitExact) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 31);
  IterationSchedule sched = small_schedule();
  TrainState full;
  BootstrapResult rfull =
      run_bootstrap(full, f.corpus, f.stores(), f.cfg, sched, f.opts, tmp.dir("full"));
  ASSERT_GE(rfull.refreshes, 2);

  TrainState resumed = load_snapshot(tmp.dir("full") + "/iter_001");
  BootstrapResult rres =
      bootstrap_loop(resumed, f.corpus, f.stores(), sched, f.opts, tmp.dir("resumed"));
  (void)rres;
  EXPECT_EQ(read_file(rfull.mt_dir + "/model.ckpt"),
            read_file(tmp.dir("resumed") + "/mt/model.ckpt"));
  EXPECT_EQ(read_file(rfull.mt_dir + "/docids.json"),
            read_file(tmp.dir("resumed") + "/mt/docids.json"));
  EXPECT_EQ(read_file(rfull.mt_dir + "/state.json"),
            read_file(tmp.dir("resumed") + "/mt/state.json"));
}

TEST(Snapshot, RoundTripsTrainState) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 37);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  st.global_step = 7;
  save_snapshot(st, tmp.dir("snap"));
  TrainState loaded = load_snapshot(tmp.dir("snap"));
  EXPECT_EQ(loaded.iteration, st.iteration);
  EXPECT_EQ(loaded.global_step, 7);
  EXPECT_EQ(loaded.table.forward, st.table.forward);
  EXPECT_EQ(loaded.codebook.centroids, st.codebook.centroids);
  EXPECT_EQ(loaded.params.w.token_embed.a, st.params.w.token_embed.a);
}

TEST(Finetune, ZeroLabeledQueriesIsZeroShot) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 41);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  const Vec before = st.params.w.enc_W.a;
  FinetuneOptions fopts;
  fopts.steps = 10;
  finetune(st, f.corpus, {}, nullptr, fopts, f.opts);
  EXPECT_EQ(st.params.w.enc_W.a, before);
}

TEST(Finetune, RejectsUnknownDocKey) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 43);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  Query q;
  q.query_id = "Q1";
  q.text = "anything";
  q.relevant_doc_key = "NOT_A_DOC";
  q.tokens = tokenize(q.text, f.corpus.vocab, kMaxQueryTokens);
  EXPECT_THROW(finetune(st, f.corpus, {q}, nullptr, FinetuneOptions{}, f.opts), Error);
}

TEST(Finetune, TrainsWithoutTouchingDocids) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 47);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  const uint64_t table_before = table_hash(st.table);
  const Vec params_before = st.params.w.enc_W.a;

  std::vector<Query> labeled;
  for (int i = 0; i < 4; ++i) {
    Query q;
    q.query_id = cat("Q", i);
    const Document& d = f.corpus.documents[static_cast<size_t>(i)];
    q.relevant_doc_key = d.doc_key;
    q.text = d.text.substr(0, 20);
    q.tokens = tokenize(q.text, f.corpus.vocab, kMaxQueryTokens);
    labeled.push_back(std::move(q));
  }
  FinetuneOptions fopts;
  fopts.steps = 6;
  fopts.batch_n = 4;
  fopts.pseudo_queries_per_doc = 10;
  finetune(st, f.corpus, labeled, nullptr, fopts, f.opts);
  EXPECT_EQ(table_hash(st.table), table_before);
  EXPECT_NE(st.params.w.enc_W.a, params_before);
}

TEST(PretrainIteration, RawProbScoreModeTrains) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 71);
  f.opts.loss.score_mode = ContrastiveScore::kRawProb;
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  IterationSchedule sched = small_schedule();
  sched.total_steps = 6;
  sched.first_refresh_step = 6;
  const Vec before = st.params.w.enc_W.a;
  pretrain_iteration(st, f.corpus, f.stores(), sched, f.opts);
  EXPECT_EQ(st.global_step, 6);
  EXPECT_NE(st.params.w.enc_W.a, before);
  EXPECT_TRUE(st.params.w.finite());
}

TEST(Finetune, IncludeNoisyVariantsFlag) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 20, 73);
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  Query q;
  q.query_id = "Q0";
  const Document& d = f.corpus.documents[0];
  q.relevant_doc_key = d.doc_key;
  q.text = d.text.substr(0, 24);
  q.tokens = tokenize(q.text, f.corpus.vocab, kMaxQueryTokens);

  FinetuneOptions fopts;
  fopts.steps = 4;
  fopts.batch_n = 4;
  fopts.pseudo_queries_per_doc = 2;
  fopts.include_noisy = true;
  finetune(st, f.corpus, {q}, &f.noisy, fopts, f.opts);
  EXPECT_TRUE(st.params.w.finite());
}

TEST(Training, LossGoesDownOnASmallCorpus) {
  TempDir tmp("trainer");
  TrainFixture f = make_train_fixture(tmp, 32, 53);
  IterationSchedule sched;
  sched.total_steps = 120;
  sched.first_refresh_step = 120;
  sched.refresh_every = 40;
  sched.learning_rate = 0.01;
  sched.batch_n = 4;
  TrainState st = initialize(f.corpus, f.cfg, f.opts);
  {
    LossTrace trace(tmp.file("trace.csv"));
    pretrain_iteration(st, f.corpus, f.stores(), sched, f.opts, &trace);
  }
  // mean total loss over the last 10% of steps < mean over the first 10%
  std::ifstream in(tmp.file("trace.csv"));
  std::string line;
  std::getline(in, line); // header
  std::vector<double> totals;
  while (std::getline(in, line))
    totals.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  ASSERT_EQ(totals.size(), 120u);
  double first = 0, last = 0;
  for (int i = 0; i < 12; ++i) {
    first += totals[static_cast<size_t>(i)];
    last += totals[totals.size() - 1 - static_cast<size_t>(i)];
  }
  EXPECT_LT(last, first);
}
