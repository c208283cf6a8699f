#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bootret/augment.hpp"
#include "bootret/common.hpp"
#include "bootret/corpus.hpp"
#include "bootret/model.hpp"
#include "bootret/objectives.hpp"
#include "bootret/pq.hpp"

namespace bootret {

struct IterationSchedule {
  int64_t total_steps = 2000;
  int64_t first_refresh_step = 500;
  int64_t refresh_every = 300;
  double learning_rate = 5e-3;
  int batch_n = 8;
  int max_iterations = 7;

  void validate() const {
    if (total_steps < 1) raise("schedule: total_steps must be >= 1");
    if (first_refresh_step < 1 || first_refresh_step > total_steps)
      raise("schedule: first_refresh_step must be in (0, total_steps]");
    if (refresh_every < 1) raise("schedule: refresh_every must be >= 1");
    if (batch_n < 2) raise("schedule: batch_n must be >= 2 for contrastive terms");
    if (max_iterations < 1) raise("schedule: max_iterations must be >= 1");
    if (learning_rate <= 0) raise("schedule: learning_rate must be positive");
  }
};

// Refreshes fire after a finished iteration while steps remain and the
// iteration cap is not hit, so the run normally ends on a training segment.
inline int planned_refreshes(const IterationSchedule& s) {
  if (s.first_refresh_step >= s.total_steps) return 0;
  int64_t by_budget = 1 + (s.total_steps - s.first_refresh_step - 1) / s.refresh_every;
  return static_cast<int>(std::min<int64_t>(by_budget, s.max_iterations));
}

struct TrainerOptions {
  LossOptions loss;
  OptimizerOptions optimizer;
  bool warm_start_kmeans = true;
  bool reset_adam_on_refresh = false;
  uint64_t seed = 42;
};

// Model parameters plus everything that must move with them between phases.
struct TrainState {
  ModelParams params;
  Codebook codebook;
  DocidTable table;
  int iteration = 0; // t
  int64_t global_step = 0;
};

struct Stores {
  const NoisyStore* noisy = nullptr;
  const QueryStore* queries = nullptr;
};

// Per-step loss trace, one CSV row per optimizer step.
class LossTrace {
public:
  explicit LossTrace(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) raise("cannot open loss trace: ", path);
    out_ << "step,batch_type,L_SC,L_C1,L_C2,L_RP,L_ID,L_RE,total\n";
  }

  void log(int64_t step, const char* batch_type, const LossParts& p, double total) {
    out_ << step << ',' << batch_type << ',' << format_double(p.sc) << ',' << format_double(p.c1)
         << ',' << format_double(p.c2) << ',' << format_double(p.rp) << ',' << format_double(p.id)
         << ',' << format_double(p.re) << ',' << format_double(total) << '\n';
  }

private:
  std::ofstream out_;
};

inline TrainState initialize(const Corpus& corpus, ModelConfig cfg, const TrainerOptions& opts) {
  if (corpus.documents.empty()) raise("initialize: empty corpus");
  cfg.text_vocab = corpus.vocab.size();
  TrainState st;
  st.params = init_params(cfg, mix_seed(opts.seed, hash_str("model")));
  std::vector<Vec> vectors = encode_corpus(st.params, corpus);
  st.codebook = train_codebook(vectors, cfg.groups, cfg.clusters,
                               mix_seed(mix_seed(opts.seed, hash_str("kmeans")), 0));
  st.table = build_docid_table_from_vectors(corpus, vectors, st.codebook);
  st.iteration = 0;
  if (st.table.iteration_tag != st.iteration) raise("initialize: iteration tag mismatch");
  return st;
}

// One pre-training phase: refresh_every steps (first_refresh_step for the
// first), alternating batch types, docids frozen throughout. Increments t.
inline void pretrain_iteration(TrainState& st, const Corpus& corpus, const Stores& stores,
                               const IterationSchedule& sched, const TrainerOptions& opts,
                               LossTrace* trace = nullptr) {
  sched.validate();
  int64_t budget = st.iteration == 0 ? sched.first_refresh_step : sched.refresh_every;
  budget = std::min(budget, sched.total_steps - st.global_step);

  BatchPlan plan;
  plan.corpus = &corpus;
  plan.noisy = stores.noisy;
  plan.queries = stores.queries;
  plan.batch_n = sched.batch_n;
  plan.seed = opts.seed;

  const uint64_t table_before = table_hash(st.table);
  TensorSet grads = TensorSet::shaped(st.params.cfg);
  for (int64_t s = 0; s < budget; ++s) {
    const int64_t step = st.global_step;
    grads.zero();
    LossParts parts;
    double total = 0.0;
    const bool indexing = step % 2 == 0;
    try {
      if (indexing) {
        IndexingBatch b = make_indexing_batch(plan, st.table, static_cast<size_t>(step / 2));
        total = compute_loss(st.params, &b, nullptr, opts.loss, LossKind::kPretrainTotal, &grads,
                             &parts);
      } else {
        RetrievalBatch b = make_retrieval_batch(plan, st.table, static_cast<size_t>(step / 2));
        total = compute_loss(st.params, nullptr, &b, opts.loss, LossKind::kPretrainTotal, &grads,
                             &parts);
      }
      optimizer_step(st.params, grads, sched.learning_rate, opts.optimizer);
    } catch (const Error& e) {
      raise("pre-training aborted at step ", step, ": ", e.what());
    }
    if (trace != nullptr) trace->log(step, indexing ? "indexing" : "retrieval", parts, total);
    ++st.global_step;
  }
  if (table_hash(st.table) != table_before) raise("docid table changed during pre-training");
  ++st.iteration;
}

// Docid update: re-encode, retrain codebook (warm-started by default),
// rebuild the table. Returns the per-document changes for the case log.
inline std::vector<DocidChange> bootstrap_refresh(TrainState& st, const Corpus& corpus,
                                                  const TrainerOptions& opts) {
  if (st.iteration < 1) raise("bootstrap_refresh: no pre-training iteration has run yet");
  RefreshResult r = update_docids(
      corpus, st.params, st.codebook, st.table,
      mix_seed(mix_seed(opts.seed, hash_str("kmeans")), static_cast<uint64_t>(st.iteration)),
      opts.warm_start_kmeans);
  st.codebook = std::move(r.codebook);
  st.table = std::move(r.table);
  if (opts.reset_adam_on_refresh) {
    st.params.adam_m.zero();
    st.params.adam_v.zero();
    st.params.adam_t = 0;
  }
  if (st.table.iteration_tag != st.iteration)
    raise("bootstrap_refresh: iteration tag ", st.table.iteration_tag, " != t ", st.iteration);
  return r.changes;
}

inline void write_change_log(const std::vector<DocidChange>& changes, const std::string& path) {
  std::ostringstream os;
  os << "doc_key,old_codes,new_codes\n";
  for (const auto& c : changes) os << c.doc_key << ',' << c.before.str() << ',' << c.after.str() << '\n';
  write_file(path, os.str());
}

// ---- snapshots ----

inline void save_snapshot(const TrainState& st, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_checkpoint(st.params, dir + "/model.ckpt");
  save_codebook(st.codebook, dir + "/codebook.json");
  save_docid_table(st.table, dir + "/docids.json");
  nlohmann::json j;
  j["version"] = 1;
  j["iteration"] = st.iteration;
  j["global_step"] = st.global_step;
  write_file(dir + "/state.json", j.dump(2) + "\n");
}

inline TrainState load_snapshot(const std::string& dir) {
  TrainState st;
  st.params = load_checkpoint(dir + "/model.ckpt");
  st.codebook = load_codebook(dir + "/codebook.json");
  st.table = load_docid_table(dir + "/docids.json");
  nlohmann::json j = nlohmann::json::parse(read_file(dir + "/state.json"));
  if (j.value("version", 0) != 1) raise("unsupported snapshot state version in ", dir);
  st.iteration = j["iteration"].get<int>();
  st.global_step = j["global_step"].get<int64_t>();
  return st;
}

struct BootstrapResult {
  int refreshes = 0;
  std::vector<int> change_counts; // docids changed at each refresh
  std::string bs_dir;
  std::string mt_dir;
};

namespace detail {

inline std::string iter_dir(const std::string& out_dir, int iteration) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "iter_%03d", iteration);
  return out_dir + "/" + buf;
}

} // namespace detail

// The iteration loop, resumable from any post-refresh snapshot. Writes a
// snapshot per refresh plus "bs" (after iteration 1) and "mt" (final).
inline BootstrapResult bootstrap_loop(TrainState& st, const Corpus& corpus, const Stores& stores,
                                      const IterationSchedule& sched, const TrainerOptions& opts,
                                      const std::string& out_dir, bool dynamic_docids = true,
                                      LossTrace* trace = nullptr) {
  namespace fs = std::filesystem;
  sched.validate();
  fs::create_directories(out_dir);
  BootstrapResult result;
  const int entry_iteration = st.iteration;

  while (st.global_step < sched.total_steps) {
    pretrain_iteration(st, corpus, stores, sched, opts, trace);
    if (!dynamic_docids) continue; // fixed docids: same step budget, zero refreshes
    if (st.global_step >= sched.total_steps) break;
    std::vector<DocidChange> changes = bootstrap_refresh(st, corpus, opts);
    write_change_log(changes, out_dir + "/change_log_" + std::to_string(st.iteration) + ".csv");
    result.change_counts.push_back(static_cast<int>(changes.size()));
    ++result.refreshes;
    save_snapshot(st, detail::iter_dir(out_dir, st.iteration));
    if (st.iteration == 1) {
      result.bs_dir = out_dir + "/bs";
      save_snapshot(st, result.bs_dir);
    }
    if (st.iteration >= sched.max_iterations) break;
  }

  result.mt_dir = out_dir + "/mt";
  save_snapshot(st, result.mt_dir);
  if (result.bs_dir.empty() && entry_iteration == 0) {
    // degenerate schedules never refresh; the single phase is both versions.
    // Resumed runs skip this: their first-iteration snapshot lives with the
    // original run.
    result.bs_dir = out_dir + "/bs";
    save_snapshot(st, result.bs_dir);
  }
  return result;
}

inline BootstrapResult run_bootstrap(TrainState& st, const Corpus& corpus, const Stores& stores,
                                     const ModelConfig& cfg, const IterationSchedule& sched,
                                     const TrainerOptions& opts, const std::string& out_dir,
                                     bool dynamic_docids = true, LossTrace* trace = nullptr) {
  st = initialize(corpus, cfg, opts);
  return bootstrap_loop(st, corpus, stores, sched, opts, out_dir, dynamic_docids, trace);
}

// ---- fine-tuning ----

struct FinetuneOptions {
  int64_t steps = 600;
  double learning_rate = 1e-2;
  int batch_n = 8;
  int pseudo_queries_per_doc = 10;
  bool include_noisy = false;
};

// MLE-only training over document-docid pairs, labeled query-docid pairs and
// generated pseudo-queries. Docids stay frozen; zero labeled queries is the
// zero-shot configuration and leaves the state untouched.
inline void finetune(TrainState& st, const Corpus& corpus, const std::vector<Query>& labeled,
                     const NoisyStore* noisy, const FinetuneOptions& fopts,
                     const TrainerOptions& opts, LossTrace* trace = nullptr) {
  for (const auto& q : labeled)
    if (corpus.index_of(q.relevant_doc_key) < 0)
      raise("finetune: labeled query ", q.query_id, " references unknown doc_key ",
            q.relevant_doc_key);
  if (labeled.empty()) return;

  GeneratorBackend rule;
  rule.kind = GeneratorBackend::kRuleBased;
  QueryStore pool =
      build_query_store(corpus, fopts.pseudo_queries_per_doc, rule,
                        mix_seed(opts.seed, hash_str("finetune_queries")));
  for (const auto& q : labeled) {
    PseudoQuery pq;
    pq.source_key = q.relevant_doc_key;
    pq.text = q.text;
    pq.tokens = q.tokens;
    auto& list = pool.by_key[q.relevant_doc_key];
    pq.index = static_cast<int>(list.size()) + 1;
    list.push_back(std::move(pq));
  }

  BatchPlan plan;
  plan.corpus = &corpus;
  plan.noisy = fopts.include_noisy ? noisy : nullptr;
  plan.queries = &pool;
  plan.batch_n = fopts.batch_n;
  plan.seed = mix_seed(opts.seed, hash_str("finetune"));

  LossOptions mle = opts.loss;
  mle.weights.gamma = 0.0;
  mle.weights.rho = 0.0;
  mle.weights.lambda = 1.0;

  const uint64_t table_before = table_hash(st.table);
  TensorSet grads = TensorSet::shaped(st.params.cfg);
  for (int64_t s = 0; s < fopts.steps; ++s) {
    grads.zero();
    LossParts parts;
    double total = 0.0;
    const bool indexing = s % 2 == 0;
    if (indexing) {
      IndexingBatch b = make_indexing_batch(plan, st.table, static_cast<size_t>(s / 2));
      total = compute_loss(st.params, &b, nullptr, mle, LossKind::kPretrainTotal, &grads, &parts);
    } else {
      RetrievalBatch b = make_retrieval_batch(plan, st.table, static_cast<size_t>(s / 2));
      total = compute_loss(st.params, nullptr, &b, mle, LossKind::kPretrainTotal, &grads, &parts);
    }
    optimizer_step(st.params, grads, fopts.learning_rate, opts.optimizer);
    if (trace != nullptr) trace->log(s, indexing ? "indexing" : "retrieval", parts, total);
  }
  if (table_hash(st.table) != table_before) raise("finetune: docid table changed");
}

} // namespace bootret
