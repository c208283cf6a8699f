// Pipeline CLI: every phase is a subcommand over a run directory. Commands
// are deterministic given identical inputs and seeds; snapshots are never
// mutated in place.

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "bootret/config.hpp"
#include "bootret/evaluation.hpp"
#include "bootret/synth.hpp"

namespace fs = std::filesystem;
using namespace bootret;

namespace {

// One writer per run directory at a time.
class RunLock {
public:
  explicit RunLock(const std::string& run_dir) : path_(run_dir + "/.lock") {
    fs::create_directories(run_dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      raise("run directory is locked (", path_, " exists); remove it if no other command is running");
  }
  ~RunLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

private:
  std::string path_;
  int fd_ = -1;
};

struct CommonArgs {
  std::string run_dir;
  std::string config_path; // optional explicit config
  std::optional<uint64_t> seed_flag;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) {
    cfg = RunConfig::parse_file(args.config_path);
  } else if (fs::exists(args.run_dir + "/config.cfg")) {
    cfg = RunConfig::parse_file(args.run_dir + "/config.cfg");
  }
  if (args.seed_flag) cfg.seed = *args.seed_flag; // flag wins over config
  return cfg;
}

Corpus load_run_corpus(const std::string& run_dir, const RunConfig& cfg) {
  const std::string path = run_dir + "/corpus.jsonl";
  if (!fs::exists(path)) raise("missing ", path, "; run `bootret ingest` first");
  return ingest_jsonl(path, 0, cfg.min_count, static_cast<size_t>(cfg.max_doc_tokens));
}

struct LoadedStores {
  NoisyStore noisy;
  QueryStore queries;
};

LoadedStores load_run_stores(const std::string& run_dir, const Corpus& corpus) {
  const std::string noisy_path = run_dir + "/augment/noisy.jsonl";
  const std::string query_path = run_dir + "/augment/pqueries.jsonl";
  if (!fs::exists(noisy_path) || !fs::exists(query_path))
    raise("missing augmentation caches under ", run_dir, "/augment; run `bootret augment` first");
  LoadedStores s;
  s.noisy = load_noisy_cache(noisy_path, corpus.vocab);
  s.queries = load_query_cache(query_path, corpus.vocab);
  return s;
}

// finetune snapshot when present, otherwise the final pre-training snapshot
std::string resolve_snapshot(const std::string& run_dir, const std::string& requested) {
  if (!requested.empty()) {
    std::string name = requested;
    if (name == "finetune") name = run_dir + "/finetune";
    else if (name == "pretrain-mt") name = run_dir + "/pretrain/mt";
    else if (name == "pretrain-bs") name = run_dir + "/pretrain/bs";
    if (!fs::exists(name + "/model.ckpt")) raise("snapshot not found: ", name);
    return name;
  }
  if (fs::exists(run_dir + "/finetune/model.ckpt")) return run_dir + "/finetune";
  if (fs::exists(run_dir + "/pretrain/mt/model.ckpt")) return run_dir + "/pretrain/mt";
  raise("no snapshot under ", run_dir, "; run `bootret pretrain` first");
}

std::vector<Query> load_queries_checked(const std::string& path, const Corpus& corpus,
                                        const RunConfig& cfg) {
  if (!fs::exists(path)) raise("query file not found: ", path);
  return load_queries_tsv(path, corpus.vocab, static_cast<size_t>(cfg.max_query_tokens));
}

int cmd_ingest(const std::string& corpus_file, const std::string& out_dir, size_t limit,
               const CommonArgs& args) {
  CommonArgs a = args;
  a.run_dir = out_dir;
  RunLock lock(out_dir);
  RunConfig cfg = resolve_config(a);
  Corpus corpus = ingest_jsonl(corpus_file, limit, cfg.min_count,
                               static_cast<size_t>(cfg.max_doc_tokens));
  save_corpus_jsonl(corpus, out_dir + "/corpus.jsonl");
  save_vocab(corpus.vocab, out_dir + "/vocab.json", cfg.min_count);
  std::cout << "ingested " << corpus.documents.size() << " documents, vocabulary size "
            << corpus.vocab.size() << "\n";
  return 0;
}

int cmd_augment(const CommonArgs& args, const std::string& backend_flag) {
  RunLock lock(args.run_dir);
  RunConfig cfg = resolve_config(args);
  if (!backend_flag.empty()) cfg.backend = backend_flag;
  Corpus corpus = load_run_corpus(args.run_dir, cfg);
  GeneratorBackend backend = cfg.generator_backend();

  fs::create_directories(args.run_dir + "/augment");
  const uint64_t noisy_seed = mix_seed(cfg.seed, hash_str("augment_noisy"));
  const uint64_t query_seed = mix_seed(cfg.seed, hash_str("augment_queries"));
  NoisyStore noisy = build_noisy_store(corpus, backend, noisy_seed);
  save_noisy_cache(noisy, noisy_seed, args.run_dir + "/augment/noisy.jsonl");
  QueryStore queries = build_query_store(corpus, cfg.pseudo_queries_per_doc, backend, query_seed);
  save_query_cache(queries, query_seed, args.run_dir + "/augment/pqueries.jsonl");
  std::cout << "augmented " << corpus.documents.size() << " documents: 4 noisy variants and "
            << cfg.pseudo_queries_per_doc << " pseudo-queries each\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& args) {
  RunLock lock(args.run_dir);
  RunConfig cfg = resolve_config(args);
  write_file(args.run_dir + "/config.cfg", cfg.to_text());
  Corpus corpus = load_run_corpus(args.run_dir, cfg);
  LoadedStores stores = load_run_stores(args.run_dir, corpus);

  const std::string out_dir = args.run_dir + "/pretrain";
  fs::create_directories(out_dir);
  LossTrace trace(out_dir + "/loss_trace.csv");
  TrainState st;
  BootstrapResult r = run_bootstrap(st, corpus, {&stores.noisy, &stores.queries},
                                    cfg.model_config(), cfg.schedule(), cfg.trainer_options(),
                                    out_dir, /*dynamic_docids=*/true, &trace);
  std::cout << "pre-trained " << st.global_step << " steps, " << r.refreshes
            << " docid refreshes; snapshots at " << r.bs_dir << " and " << r.mt_dir << "\n";
  return 0;
}

int cmd_finetune(const CommonArgs& args, const std::string& queries_path) {
  RunLock lock(args.run_dir);
  RunConfig cfg = resolve_config(args);
  Corpus corpus = load_run_corpus(args.run_dir, cfg);
  TrainState st = load_snapshot(resolve_snapshot(args.run_dir, "pretrain-mt"));

  std::vector<Query> labeled;
  if (!queries_path.empty()) labeled = load_queries_checked(queries_path, corpus, cfg);

  const NoisyStore* noisy = nullptr;
  NoisyStore noisy_store;
  if (cfg.finetune_include_noisy) {
    noisy_store = load_run_stores(args.run_dir, corpus).noisy;
    noisy = &noisy_store;
  }

  fs::create_directories(args.run_dir + "/finetune");
  LossTrace trace(args.run_dir + "/finetune/loss_trace.csv");
  finetune(st, corpus, labeled, noisy, cfg.finetune_options(), cfg.trainer_options(), &trace);
  save_snapshot(st, args.run_dir + "/finetune");
  std::cout << "fine-tuned on " << labeled.size() << " labeled queries ("
            << (labeled.empty() ? "zero-shot: snapshot copied unchanged" : "MLE updates applied")
            << ")\n";
  return 0;
}

int cmd_retrieve(const CommonArgs& args, const std::string& queries_path, int beam_flag,
                 const std::string& snapshot) {
  RunLock lock(args.run_dir);
  RunConfig cfg = resolve_config(args);
  if (beam_flag > 0) cfg.beam_width = beam_flag;
  Corpus corpus = load_run_corpus(args.run_dir, cfg);
  TrainState st = load_snapshot(resolve_snapshot(args.run_dir, snapshot));
  std::vector<Query> queries = load_queries_checked(queries_path, corpus, cfg);

  PrefixTrie trie = build_trie(st.table);
  std::ostringstream os;
  for (const auto& q : queries) {
    RankedList ranked = constrained_beam_search(st.params, q.tokens, trie, cfg.beam_options());
    int rank = 1;
    for (const auto& r : ranked)
      os << q.query_id << '\t' << rank++ << '\t' << r.doc_key << '\t'
         << format_double(r.log_likelihood) << '\n';
  }
  fs::create_directories(args.run_dir + "/retrieve");
  write_file(args.run_dir + "/retrieve/results.tsv", os.str());
  std::cout << "retrieved " << queries.size() << " queries at beam " << cfg.beam_width << " -> "
            << args.run_dir << "/retrieve/results.tsv\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& queries_path,
                 const std::string& qrels_path, int beam_flag, const std::string& snapshot,
                 bool exhaustive) {
  RunLock lock(args.run_dir);
  RunConfig cfg = resolve_config(args);
  if (beam_flag > 0) cfg.beam_width = beam_flag;
  Corpus corpus = load_run_corpus(args.run_dir, cfg);
  TrainState st = load_snapshot(resolve_snapshot(args.run_dir, snapshot));
  std::vector<Query> queries = load_queries_checked(queries_path, corpus, cfg);
  QRels qrels;
  if (!qrels_path.empty()) qrels = QRels::load_tsv(qrels_path);

  PrefixTrie trie = build_trie(st.table);
  EvalOptions opts;
  opts.beam = cfg.beam_options();
  opts.exhaustive = exhaustive;
  MetricsReport report = evaluate(st.params, st.table, trie, queries, qrels, opts);
  fs::create_directories(args.run_dir + "/eval");
  write_file(args.run_dir + "/eval/report.csv", report.to_csv());
  std::cout << report.summary() << "\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args, int n_seeds, const std::string& train_queries_path,
               const std::string& queries_path, const std::string& qrels_path) {
  RunLock lock(args.run_dir);
  RunConfig cfg = resolve_config(args);
  Corpus corpus = load_run_corpus(args.run_dir, cfg);
  LoadedStores stores = load_run_stores(args.run_dir, corpus);

  AblationContext ctx;
  ctx.corpus = &corpus;
  ctx.stores = {&stores.noisy, &stores.queries};
  ctx.cfg = cfg.model_config();
  ctx.sched = cfg.schedule();
  ctx.opts = cfg.trainer_options();
  ctx.fopts = cfg.finetune_options();
  if (!train_queries_path.empty())
    ctx.train_queries = load_queries_checked(train_queries_path, corpus, cfg);
  ctx.eval_queries = load_queries_checked(queries_path, corpus, cfg);
  ctx.qrels = QRels::load_tsv(qrels_path);
  ctx.eval.beam = cfg.beam_options();
  ctx.work_dir = args.run_dir + "/ablation";
  fs::create_directories(ctx.work_dir);

  std::vector<uint64_t> seeds;
  for (int i = 0; i < n_seeds; ++i) seeds.push_back(cfg.seed + static_cast<uint64_t>(i));
  std::vector<AblationRow> rows = run_ablation(ctx, seeds);
  write_file(ctx.work_dir + "/ablation.csv", ablation_csv(rows));
  std::cout << "ablation over " << seeds.size() << " seeds -> " << ctx.work_dir
            << "/ablation.csv\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args, int iterations, const std::string& queries_path,
              const std::string& qrels_path) {
  RunLock lock(args.run_dir);
  RunConfig cfg = resolve_config(args);
  Corpus corpus = load_run_corpus(args.run_dir, cfg);
  LoadedStores stores = load_run_stores(args.run_dir, corpus);

  AblationContext ctx;
  ctx.corpus = &corpus;
  ctx.stores = {&stores.noisy, &stores.queries};
  ctx.cfg = cfg.model_config();
  ctx.sched = cfg.schedule();
  ctx.opts = cfg.trainer_options();
  ctx.eval_queries = load_queries_checked(queries_path, corpus, cfg);
  ctx.qrels = QRels::load_tsv(qrels_path);
  ctx.eval.beam = cfg.beam_options();
  ctx.work_dir = args.run_dir + "/sweep";
  fs::create_directories(ctx.work_dir);

  std::vector<SweepPoint> points = run_iteration_sweep(ctx, iterations);
  write_file(ctx.work_dir + "/sweep.csv", sweep_csv(points));
  std::cout << "iteration sweep 1.." << iterations << " -> " << ctx.work_dir << "/sweep.csv\n";
  return 0;
}

int cmd_bench(const CommonArgs& args, const std::string& queries_path, int beam_flag,
              const std::string& snapshot) {
  RunLock lock(args.run_dir);
  RunConfig cfg = resolve_config(args);
  if (beam_flag > 0) cfg.beam_width = beam_flag;
  Corpus corpus = load_run_corpus(args.run_dir, cfg);
  TrainState st = load_snapshot(resolve_snapshot(args.run_dir, snapshot));
  std::vector<Query> queries = load_queries_checked(queries_path, corpus, cfg);

  PrefixTrie trie = build_trie(st.table);
  std::vector<std::vector<int>> tokens;
  tokens.reserve(queries.size());
  for (const auto& q : queries) tokens.push_back(q.tokens);
  LatencyReport r = measure_latency(st.params, tokens, trie, cfg.beam_options());
  fs::create_directories(args.run_dir + "/bench");
  write_file(args.run_dir + "/bench/latency.csv", latency_csv(r));
  std::cout << "mean latency " << format_double(r.mean_ms) << " ms/query over " << r.query_count
            << " queries; trie " << r.trie_nodes << " nodes, "
            << format_double(static_cast<double>(r.trie_bytes) / (1024.0 * 1024.0)) << " MB\n";
  return 0;
}

int cmd_export(const CommonArgs& args, const std::string& queries_path,
               const std::string& snapshot) {
  RunLock lock(args.run_dir);
  RunConfig cfg = resolve_config(args);
  Corpus corpus = load_run_corpus(args.run_dir, cfg);
  TrainState st = load_snapshot(resolve_snapshot(args.run_dir, snapshot));
  fs::create_directories(args.run_dir + "/export");
  write_file(args.run_dir + "/export/doc_embeddings.tsv",
             export_corpus_embeddings(st.params, corpus));
  if (!queries_path.empty()) {
    std::vector<Query> queries = load_queries_checked(queries_path, corpus, cfg);
    write_file(args.run_dir + "/export/query_embeddings.tsv",
               export_query_embeddings(st.params, queries));
  }
  std::cout << "exported embeddings to " << args.run_dir << "/export\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"bootstrapped generative retrieval pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string corpus_file, out_dir, queries_path, qrels_path, train_queries_path;
  std::string backend_flag, snapshot;
  size_t limit = 0;
  int beam_flag = 0;
  int n_seeds = 5;
  int iterations = 8;
  bool exhaustive = false;
  uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* sub, bool with_run = true) {
    if (with_run) sub->add_option("--run", args.run_dir, "run directory")->required();
    sub->add_option("--config", args.config_path, "config file (key=value lines)");
    sub->add_option("--seed", seed_value, "seed override (wins over the config value)")
        ->each([&](const std::string&) { args.seed_flag = seed_value; });
  };

  auto* ingest = app.add_subcommand("ingest", "load a JSONL corpus into a run directory");
  ingest->add_option("--corpus", corpus_file, "corpus JSONL file")->required();
  ingest->add_option("--out", out_dir, "run directory to create")->required();
  ingest->add_option("--limit", limit, "keep only the first N documents");
  add_common(ingest, false);

  auto* augment = app.add_subcommand("augment", "generate noisy documents and pseudo-queries");
  augment->add_option("--backend", backend_flag, "rule or external");
  add_common(augment);

  auto* pretrain = app.add_subcommand("pretrain", "bootstrapped pre-training (Bs and Mt snapshots)");
  add_common(pretrain);

  auto* finetune_cmd = app.add_subcommand("finetune", "MLE fine-tuning on labeled queries");
  finetune_cmd->add_option("--queries", queries_path, "labeled queries TSV");
  add_common(finetune_cmd);

  auto* retrieve = app.add_subcommand("retrieve", "decode ranked docids for queries");
  retrieve->add_option("--queries", queries_path, "queries TSV")->required();
  retrieve->add_option("--beam", beam_flag, "beam width (default from config: 20)");
  retrieve->add_option("--snapshot", snapshot, "finetune | pretrain-mt | pretrain-bs | path");
  add_common(retrieve);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Hits@K / MRR@K report");
  evaluate_cmd->add_option("--queries", queries_path, "queries TSV")->required();
  evaluate_cmd->add_option("--qrels", qrels_path, "qrels TSV (query_id, doc_key)");
  evaluate_cmd->add_option("--beam", beam_flag, "beam width");
  evaluate_cmd->add_option("--snapshot", snapshot, "finetune | pretrain-mt | pretrain-bs | path");
  evaluate_cmd->add_flag("--exhaustive", exhaustive, "rank every docid instead of beam search");
  add_common(evaluate_cmd);

  auto* ablate = app.add_subcommand("ablate", "run the ablation grid and emit a CSV");
  ablate->add_option("--seeds", n_seeds, "number of seeds (default 5)");
  ablate->add_option("--train-queries", train_queries_path, "labeled training queries TSV");
  ablate->add_option("--queries", queries_path, "evaluation queries TSV")->required();
  ablate->add_option("--qrels", qrels_path, "evaluation qrels TSV")->required();
  add_common(ablate);

  auto* sweep = app.add_subcommand("sweep", "Hits@10 vs bootstrap iteration count");
  sweep->add_option("--iterations", iterations, "sweep 1..N iterations (default 8)");
  sweep->add_option("--queries", queries_path, "evaluation queries TSV")->required();
  sweep->add_option("--qrels", qrels_path, "evaluation qrels TSV")->required();
  add_common(sweep);

  auto* bench = app.add_subcommand("bench", "latency and trie memory report");
  bench->add_option("--queries", queries_path, "queries TSV")->required();
  bench->add_option("--beam", beam_flag, "beam width");
  bench->add_option("--snapshot", snapshot, "finetune | pretrain-mt | pretrain-bs | path");
  add_common(bench);

  auto* export_cmd = app.add_subcommand("export", "dump encoder embeddings as TSV");
  export_cmd->add_option("--queries", queries_path, "also export these queries");
  export_cmd->add_option("--snapshot", snapshot, "finetune | pretrain-mt | pretrain-bs | path");
  add_common(export_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return cmd_ingest(corpus_file, out_dir, limit, args);
    if (augment->parsed()) return cmd_augment(args, backend_flag);
    if (pretrain->parsed()) return cmd_pretrain(args);
    if (finetune_cmd->parsed()) return cmd_finetune(args, queries_path);
    if (retrieve->parsed()) return cmd_retrieve(args, queries_path, beam_flag, snapshot);
    if (evaluate_cmd->parsed())
      return cmd_evaluate(args, queries_path, qrels_path, beam_flag, snapshot, exhaustive);
    if (ablate->parsed())
      return cmd_ablate(args, n_seeds, train_queries_path, queries_path, qrels_path);
    if (sweep->parsed()) return cmd_sweep(args, iterations, queries_path, qrels_path);
    if (bench->parsed()) return cmd_bench(args, queries_path, beam_flag, snapshot);
    if (export_cmd->parsed()) return cmd_export(args, queries_path, snapshot);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
