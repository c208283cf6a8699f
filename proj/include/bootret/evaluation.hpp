#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "bootret/common.hpp"
#include "bootret/corpus.hpp"
#include "bootret/retrieval.hpp"
#include "bootret/trainer.hpp"

namespace bootret {

// One relevant document per query.
struct QRels {
  std::map<std::string, std::string> relevant; // query_id -> doc_key

  static QRels load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise("cannot open qrels file: ", path);
    QRels q;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      size_t tab = line.find('\t');
      if (tab == std::string::npos) raise("qrels ", path, " line ", line_no, ": expected 2 columns");
      q.relevant[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return q;
  }
};

inline double hits_at_k(const RankedList& ranked, const std::string& relevant, int k) {
  if (k < 1) raise("hits_at_k: K must be >= 1");
  for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(k); ++i)
    if (ranked[i].doc_key == relevant) return 1.0;
  return 0.0;
}

// Truncated reciprocal rank: 0 when the relevant document ranks below K.
inline double mrr_at_k(const RankedList& ranked, const std::string& relevant, int k) {
  if (k < 1) raise("mrr_at_k: K must be >= 1");
  for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(k); ++i)
    if (ranked[i].doc_key == relevant) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

struct QueryMetrics {
  std::string query_id;
  int rank = 0; // 1-based; 0 when the relevant document is not returned
  double hits1 = 0, hits10 = 0, mrr3 = 0, mrr20 = 0;
};

struct MetricsReport {
  double hits1 = 0, hits10 = 0, mrr3 = 0, mrr20 = 0;
  std::vector<QueryMetrics> rows;

  std::string to_csv() const {
    std::ostringstream os;
    os << "query_id,rank,hits@1,hits@10,mrr@3,mrr@20\n";
    for (const auto& r : rows)
      os << r.query_id << ',' << r.rank << ',' << format_double(r.hits1) << ','
         << format_double(r.hits10) << ',' << format_double(r.mrr3) << ','
         << format_double(r.mrr20) << '\n';
    os << "ALL,," << format_double(hits1) << ',' << format_double(hits10) << ','
       << format_double(mrr3) << ',' << format_double(mrr20) << '\n';
    return os.str();
  }

  std::string summary() const {
    std::ostringstream os;
    os << "queries=" << rows.size() << " Hits@1=" << format_double(hits1)
       << " Hits@10=" << format_double(hits10) << " MRR@3=" << format_double(mrr3)
       << " MRR@20=" << format_double(mrr20);
    return os.str();
  }
};

struct EvalOptions {
  BeamSearchOptions beam;
  bool exhaustive = false; // rank every docid instead of beam decoding
};

// Decodes every query and averages the per-query metrics.
inline MetricsReport evaluate(const ModelParams& params, const DocidTable& table,
                              const PrefixTrie& trie, const std::vector<Query>& queries,
                              const QRels& qrels, const EvalOptions& opts = {}) {
  if (queries.empty()) raise("evaluate: no queries");
  MetricsReport report;
  for (const auto& q : queries) {
    std::string relevant = q.relevant_doc_key;
    if (auto it = qrels.relevant.find(q.query_id); it != qrels.relevant.end())
      relevant = it->second;
    if (relevant.empty()) raise("evaluate: query ", q.query_id, " has no relevance judgment");
    if (table.forward.find(relevant) == table.forward.end())
      raise("evaluate: query ", q.query_id, " references unknown doc_key ", relevant);

    RankedList ranked = opts.exhaustive ? exhaustive_rank(params, q.tokens, table)
                                        : constrained_beam_search(params, q.tokens, trie, opts.beam);
    QueryMetrics m;
    m.query_id = q.query_id;
    for (size_t i = 0; i < ranked.size(); ++i)
      if (ranked[i].doc_key == relevant) {
        m.rank = static_cast<int>(i + 1);
        break;
      }
    m.hits1 = hits_at_k(ranked, relevant, 1);
    m.hits10 = hits_at_k(ranked, relevant, 10);
    m.mrr3 = mrr_at_k(ranked, relevant, 3);
    m.mrr20 = mrr_at_k(ranked, relevant, 20);
    report.hits1 += m.hits1;
    report.hits10 += m.hits10;
    report.mrr3 += m.mrr3;
    report.mrr20 += m.mrr20;
    report.rows.push_back(std::move(m));
  }
  const double inv = 1.0 / static_cast<double>(report.rows.size());
  report.hits1 *= inv;
  report.hits10 *= inv;
  report.mrr3 *= inv;
  report.mrr20 *= inv;
  return report;
}

// key + D tab-separated floats per row; matches encode() exactly.
inline std::string export_embeddings(const ModelParams& params,
                                     const std::vector<std::pair<std::string, std::vector<int>>>& items) {
  std::ostringstream os;
  for (const auto& [key, tokens] : items) {
    os << key;
    for (double v : encode(params, tokens)) os << '\t' << format_double(v);
    os << '\n';
  }
  return os.str();
}

inline std::string export_corpus_embeddings(const ModelParams& params, const Corpus& corpus) {
  std::vector<std::pair<std::string, std::vector<int>>> items;
  items.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) items.emplace_back(d.doc_key, d.tokens);
  return export_embeddings(params, items);
}

inline std::string export_query_embeddings(const ModelParams& params,
                                           const std::vector<Query>& queries) {
  std::vector<std::pair<std::string, std::vector<int>>> items;
  items.reserve(queries.size());
  for (const auto& q : queries) items.emplace_back(q.query_id, q.tokens);
  return export_embeddings(params, items);
}

// ---- ablation harness ----

inline const std::vector<std::string>& ablation_config_names() {
  static const std::vector<std::string> names = {
      "full",
      "wo_dynamic_identifiers",
      "wo_pretraining",
      "wo_retrieval_prediction",
      "wo_corpus_indexing",
      "wo_noisy_documents",
      "wo_contrastive_losses",
  };
  return names;
}

struct AblationContext {
  const Corpus* corpus = nullptr;
  Stores stores;
  ModelConfig cfg;
  IterationSchedule sched;
  TrainerOptions opts;
  FinetuneOptions fopts;
  std::vector<Query> train_queries; // may be empty
  std::vector<Query> eval_queries;
  QRels qrels;
  EvalOptions eval;
  std::string work_dir;
};

struct AblationRow {
  std::string config;
  uint64_t seed = 0;
  MetricsReport metrics;
};

inline MetricsReport run_ablation_config(const AblationContext& ctx, const std::string& config,
                                         uint64_t seed) {
  TrainerOptions opts = ctx.opts;
  opts.seed = seed;
  Stores stores = ctx.stores;
  bool dynamic = true;
  bool pretrain = true;
  if (config == "full") {
  } else if (config == "wo_dynamic_identifiers") {
    dynamic = false;
  } else if (config == "wo_pretraining") {
    pretrain = false;
  } else if (config == "wo_retrieval_prediction") {
    opts.loss.weights.rho = 0.0;
  } else if (config == "wo_corpus_indexing") {
    opts.loss.weights.gamma = 0.0;
  } else if (config == "wo_noisy_documents") {
    stores.noisy = nullptr;
  } else if (config == "wo_contrastive_losses") {
    opts.loss.weights.alpha = 0.0;
    opts.loss.weights.beta = 0.0;
    opts.loss.weights.rho = 0.0;
    opts.loss.weights.gamma = 1.0; // keeps the semantic consistency term unscaled
  } else {
    raise("unknown ablation config: ", config);
  }

  const std::string dir = ctx.work_dir + "/" + config + "_seed" + std::to_string(seed);
  TrainState st;
  if (pretrain) {
    run_bootstrap(st, *ctx.corpus, stores, ctx.cfg, ctx.sched, opts, dir, dynamic);
  } else {
    st = initialize(*ctx.corpus, ctx.cfg, opts);
    save_snapshot(st, dir + "/mt");
  }
  finetune(st, *ctx.corpus, ctx.train_queries,
           stores.noisy != nullptr && !stores.noisy->empty() ? stores.noisy : nullptr, ctx.fopts,
           opts);
  PrefixTrie trie = build_trie(st.table);
  return evaluate(st.params, st.table, trie, ctx.eval_queries, ctx.qrels, ctx.eval);
}

inline std::vector<AblationRow> run_ablation(const AblationContext& ctx,
                                             const std::vector<uint64_t>& seeds) {
  if (seeds.empty()) raise("run_ablation: need at least one seed");
  std::vector<AblationRow> rows;
  for (const auto& config : ablation_config_names())
    for (uint64_t seed : seeds)
      rows.push_back({config, seed, run_ablation_config(ctx, config, seed)});
  return rows;
}

// One row per configuration per seed, then mean and stdev rows per configuration.
inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "config,seed,hits@1,hits@10,mrr@3,mrr@20\n";
  for (const auto& r : rows)
    os << r.config << ',' << r.seed << ',' << format_double(r.metrics.hits1) << ','
       << format_double(r.metrics.hits10) << ',' << format_double(r.metrics.mrr3) << ','
       << format_double(r.metrics.mrr20) << '\n';
  for (const auto& config : ablation_config_names()) {
    std::vector<const MetricsReport*> ms;
    for (const auto& r : rows)
      if (r.config == config) ms.push_back(&r.metrics);
    if (ms.empty()) continue;
    auto stat = [&](auto field) {
      double mean = 0, var = 0;
      for (const auto* m : ms) mean += m->*field;
      mean /= static_cast<double>(ms.size());
      for (const auto* m : ms) var += (m->*field - mean) * (m->*field - mean);
      var /= static_cast<double>(ms.size());
      return std::make_pair(mean, std::sqrt(var));
    };
    auto [h1m, h1s] = stat(&MetricsReport::hits1);
    auto [h10m, h10s] = stat(&MetricsReport::hits10);
    auto [m3m, m3s] = stat(&MetricsReport::mrr3);
    auto [m20m, m20s] = stat(&MetricsReport::mrr20);
    os << config << ",mean," << format_double(h1m) << ',' << format_double(h10m) << ','
       << format_double(m3m) << ',' << format_double(m20m) << '\n';
    os << config << ",stdev," << format_double(h1s) << ',' << format_double(h10s) << ','
       << format_double(m3s) << ',' << format_double(m20s) << '\n';
  }
  return os.str();
}

// ---- iteration sweep ----

struct SweepPoint {
  int iteration = 0;
  MetricsReport metrics;
};

// One bootstrap trajectory with a snapshot per refresh; each post-refresh
// state is evaluated zero-shot.
inline std::vector<SweepPoint> run_iteration_sweep(const AblationContext& ctx, int max_iteration) {
  if (max_iteration < 1) raise("run_iteration_sweep: need max_iteration >= 1");
  IterationSchedule sched = ctx.sched;
  sched.max_iterations = max_iteration;
  sched.total_steps =
      sched.first_refresh_step + static_cast<int64_t>(max_iteration) * sched.refresh_every;
  const std::string dir = ctx.work_dir + "/sweep";
  TrainState st;
  run_bootstrap(st, *ctx.corpus, ctx.stores, ctx.cfg, sched, ctx.opts, dir);
  std::vector<SweepPoint> points;
  for (int n = 1; n <= max_iteration; ++n) {
    TrainState snap = load_snapshot(detail::iter_dir(dir, n));
    PrefixTrie trie = build_trie(snap.table);
    points.push_back(
        {n, evaluate(snap.params, snap.table, trie, ctx.eval_queries, ctx.qrels, ctx.eval)});
  }
  return points;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "iteration,hits@1,hits@10,mrr@3,mrr@20\n";
  for (const auto& p : points)
    os << p.iteration << ',' << format_double(p.metrics.hits1) << ','
       << format_double(p.metrics.hits10) << ',' << format_double(p.metrics.mrr3) << ','
       << format_double(p.metrics.mrr20) << '\n';
  return os.str();
}

// ---- inference efficiency report ----

inline std::string latency_csv(const LatencyReport& r) {
  std::ostringstream os;
  os << "method,memory_mb,latency_ms\n";
  os << "BootRet," << format_double(static_cast<double>(r.trie_bytes) / (1024.0 * 1024.0)) << ','
     << format_double(r.mean_ms) << '\n';
  return os.str();
}

} // namespace bootret
