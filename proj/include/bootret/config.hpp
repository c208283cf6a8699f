#pragma once

#include <string>
#include <vector>

#include "bootret/augment.hpp"
#include "bootret/common.hpp"
#include "bootret/evaluation.hpp"
#include "bootret/model.hpp"
#include "bootret/objectives.hpp"
#include "bootret/trainer.hpp"

namespace bootret {

// key=value run configuration. Unknown keys and invalid values are rejected,
// all of them listed in a single error.
struct RunConfig {
  // data
  std::string corpus_file;
  std::string queries_file;
  std::string qrels_file;
  int max_doc_tokens = static_cast<int>(kMaxDocTokens);
  int max_query_tokens = static_cast<int>(kMaxQueryTokens);
  int min_count = 1;

  // model
  int embed_dim = 32;
  int model_dim = 64;
  int pq_groups = 8;
  int pq_clusters = 16;

  // objectives
  double alpha = 1.0, beta = 1.0, gamma = 2.0, rho = 2.0, lambda = 1.0;
  double tau = 0.2;
  std::string contrastive_score = "loglik"; // loglik | raw_prob

  // schedule
  int64_t total_steps = 2000;
  int64_t first_refresh_step = 500;
  int64_t refresh_every = 300;
  int max_iterations = 7;
  int batch_n = 8;
  double learning_rate = 5e-3;

  // fine-tuning
  int64_t finetune_steps = 600;
  double finetune_lr = 1e-2;
  int finetune_pseudo_queries = 10;
  bool finetune_include_noisy = false;

  // augmentation
  int pseudo_queries_per_doc = 5; // X
  std::string backend = "rule";   // rule | external
  std::string external_endpoint;
  std::string external_model = "llama-13b";
  int external_timeout_ms = 30000;
  int external_max_inflight = 4;

  // retrieval
  int beam_width = 20;
  bool renormalize_beam = true;

  // training mechanics
  std::string optimizer = "adam"; // adam | sgd
  bool warm_start_kmeans = true;
  bool reset_adam_on_refresh = false;
  uint64_t seed = 42;

  // -- parsing --

  static bool parse_bool(const std::string& v, bool* out) {
    if (v == "true" || v == "1" || v == "yes") {
      *out = true;
      return true;
    }
    if (v == "false" || v == "0" || v == "no") {
      *out = false;
      return true;
    }
    return false;
  }

  // applies one key=value; appends a message to errors when it fails
  void apply(const std::string& key, const std::string& value, std::vector<std::string>& errors) {
    auto bad = [&](const char* why) { errors.push_back(cat("key '", key, "': ", why)); };
    auto as_int = [&](auto* out) {
      try {
        *out = static_cast<std::remove_pointer_t<decltype(out)>>(std::stoll(value));
      } catch (...) {
        bad("not an integer");
      }
    };
    auto as_u64 = [&](uint64_t* out) {
      try {
        *out = std::stoull(value);
      } catch (...) {
        bad("not an unsigned integer");
      }
    };
    auto as_double = [&](double* out) {
      try {
        *out = std::stod(value);
      } catch (...) {
        bad("not a number");
      }
    };
    auto as_bool = [&](bool* out) {
      if (!parse_bool(value, out)) bad("not a boolean (true/false)");
    };

    if (key == "corpus_file") corpus_file = value;
    else if (key == "queries_file") queries_file = value;
    else if (key == "qrels_file") qrels_file = value;
    else if (key == "max_doc_tokens") as_int(&max_doc_tokens);
    else if (key == "max_query_tokens") as_int(&max_query_tokens);
    else if (key == "min_count") as_int(&min_count);
    else if (key == "embed_dim") as_int(&embed_dim);
    else if (key == "model_dim") as_int(&model_dim);
    else if (key == "pq_groups") as_int(&pq_groups);
    else if (key == "pq_clusters") as_int(&pq_clusters);
    else if (key == "alpha") as_double(&alpha);
    else if (key == "beta") as_double(&beta);
    else if (key == "gamma") as_double(&gamma);
    else if (key == "rho") as_double(&rho);
    else if (key == "lambda") as_double(&lambda);
    else if (key == "tau") as_double(&tau);
    else if (key == "contrastive_score") contrastive_score = value;
    else if (key == "total_steps") as_int(&total_steps);
    else if (key == "first_refresh_step") as_int(&first_refresh_step);
    else if (key == "refresh_every") as_int(&refresh_every);
    else if (key == "max_iterations") as_int(&max_iterations);
    else if (key == "batch_n") as_int(&batch_n);
    else if (key == "learning_rate") as_double(&learning_rate);
    else if (key == "finetune_steps") as_int(&finetune_steps);
    else if (key == "finetune_lr") as_double(&finetune_lr);
    else if (key == "finetune_pseudo_queries") as_int(&finetune_pseudo_queries);
    else if (key == "finetune_include_noisy") as_bool(&finetune_include_noisy);
    else if (key == "pseudo_queries_per_doc") as_int(&pseudo_queries_per_doc);
    else if (key == "backend") backend = value;
    else if (key == "external_endpoint") external_endpoint = value;
    else if (key == "external_model") external_model = value;
    else if (key == "external_timeout_ms") as_int(&external_timeout_ms);
    else if (key == "external_max_inflight") as_int(&external_max_inflight);
    else if (key == "beam_width") as_int(&beam_width);
    else if (key == "renormalize_beam") as_bool(&renormalize_beam);
    else if (key == "optimizer") optimizer = value;
    else if (key == "warm_start_kmeans") as_bool(&warm_start_kmeans);
    else if (key == "reset_adam_on_refresh") as_bool(&reset_adam_on_refresh);
    else if (key == "seed") as_u64(&seed);
    else errors.push_back(cat("unknown key '", key, "'"));
  }

  void validate(std::vector<std::string>& errors) const {
    auto check = [&](bool ok, const char* msg) {
      if (!ok) errors.emplace_back(msg);
    };
    check(embed_dim >= 1 && model_dim >= 1 && pq_groups >= 1 && pq_clusters >= 1,
          "embed_dim/model_dim/pq_groups/pq_clusters must be >= 1");
    check(model_dim % pq_groups == 0, "model_dim must be divisible by pq_groups");
    check(tau > 0, "tau must be positive");
    check(alpha >= 0 && beta >= 0 && gamma >= 0 && rho >= 0 && lambda >= 0,
          "loss weights must be nonnegative");
    check(contrastive_score == "loglik" || contrastive_score == "raw_prob",
          "contrastive_score must be loglik or raw_prob");
    check(total_steps >= 1, "total_steps must be >= 1");
    check(first_refresh_step >= 1 && first_refresh_step <= total_steps,
          "first_refresh_step must be in (0, total_steps]");
    check(refresh_every >= 1, "refresh_every must be >= 1");
    check(max_iterations >= 1, "max_iterations must be >= 1");
    check(batch_n >= 2, "batch_n must be >= 2");
    check(learning_rate > 0, "learning_rate must be positive");
    check(finetune_steps >= 0, "finetune_steps must be >= 0");
    check(finetune_lr > 0, "finetune_lr must be positive");
    check(finetune_pseudo_queries >= 0, "finetune_pseudo_queries must be >= 0");
    check(pseudo_queries_per_doc >= 1, "pseudo_queries_per_doc must be >= 1");
    check(backend == "rule" || backend == "external", "backend must be rule or external");
    check(beam_width >= 1, "beam_width must be >= 1");
    check(optimizer == "adam" || optimizer == "sgd", "optimizer must be adam or sgd");
    check(max_doc_tokens >= 1 && max_query_tokens >= 1, "token caps must be >= 1");
    check(min_count >= 1, "min_count must be >= 1");
    check(external_timeout_ms >= 1, "external_timeout_ms must be >= 1");
    check(external_max_inflight >= 1, "external_max_inflight must be >= 1");
  }

  static RunConfig parse_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::vector<std::string> errors;
    std::istringstream is(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      size_t b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      size_t e = line.find_last_not_of(" \t\r");
      line = line.substr(b, e - b + 1);
      size_t eq = line.find('=');
      if (eq == std::string::npos) {
        errors.push_back(cat("line ", line_no, ": expected key=value"));
        continue;
      }
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
      while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
        value.erase(value.begin());
      cfg.apply(key, value, errors);
    }
    cfg.validate(errors);
    if (!errors.empty()) {
      std::string msg = cat("invalid config ", origin, ":");
      for (const auto& err : errors) msg += "\n  " + err;
      throw Error(msg);
    }
    return cfg;
  }

  static RunConfig parse_file(const std::string& path) {
    return parse_text(read_file(path), path);
  }

  // deterministic serialization, used for the run-directory config copy
  std::string to_text() const {
    std::ostringstream os;
    os << "corpus_file=" << corpus_file << "\n";
    os << "queries_file=" << queries_file << "\n";
    os << "qrels_file=" << qrels_file << "\n";
    os << "max_doc_tokens=" << max_doc_tokens << "\n";
    os << "max_query_tokens=" << max_query_tokens << "\n";
    os << "min_count=" << min_count << "\n";
    os << "embed_dim=" << embed_dim << "\n";
    os << "model_dim=" << model_dim << "\n";
    os << "pq_groups=" << pq_groups << "\n";
    os << "pq_clusters=" << pq_clusters << "\n";
    os << "alpha=" << format_double(alpha) << "\n";
    os << "beta=" << format_double(beta) << "\n";
    os << "gamma=" << format_double(gamma) << "\n";
    os << "rho=" << format_double(rho) << "\n";
    os << "lambda=" << format_double(lambda) << "\n";
    os << "tau=" << format_double(tau) << "\n";
    os << "contrastive_score=" << contrastive_score << "\n";
    os << "total_steps=" << total_steps << "\n";
    os << "first_refresh_step=" << first_refresh_step << "\n";
    os << "refresh_every=" << refresh_every << "\n";
    os << "max_iterations=" << max_iterations << "\n";
    os << "batch_n=" << batch_n << "\n";
    os << "learning_rate=" << format_double(learning_rate) << "\n";
    os << "finetune_steps=" << finetune_steps << "\n";
    os << "finetune_lr=" << format_double(finetune_lr) << "\n";
    os << "finetune_pseudo_queries=" << finetune_pseudo_queries << "\n";
    os << "finetune_include_noisy=" << (finetune_include_noisy ? "true" : "false") << "\n";
    os << "pseudo_queries_per_doc=" << pseudo_queries_per_doc << "\n";
    os << "backend=" << backend << "\n";
    os << "external_endpoint=" << external_endpoint << "\n";
    os << "external_model=" << external_model << "\n";
    os << "external_timeout_ms=" << external_timeout_ms << "\n";
    os << "external_max_inflight=" << external_max_inflight << "\n";
    os << "beam_width=" << beam_width << "\n";
    os << "renormalize_beam=" << (renormalize_beam ? "true" : "false") << "\n";
    os << "optimizer=" << optimizer << "\n";
    os << "warm_start_kmeans=" << (warm_start_kmeans ? "true" : "false") << "\n";
    os << "reset_adam_on_refresh=" << (reset_adam_on_refresh ? "true" : "false") << "\n";
    os << "seed=" << seed << "\n";
    return os.str();
  }

  // -- converters to module option structs --

  ModelConfig model_config() const {
    ModelConfig m;
    m.embed_dim = embed_dim;
    m.model_dim = model_dim;
    m.groups = pq_groups;
    m.clusters = pq_clusters;
    return m;
  }

  IterationSchedule schedule() const {
    IterationSchedule s;
    s.total_steps = total_steps;
    s.first_refresh_step = first_refresh_step;
    s.refresh_every = refresh_every;
    s.learning_rate = learning_rate;
    s.batch_n = batch_n;
    s.max_iterations = max_iterations;
    return s;
  }

  TrainerOptions trainer_options() const {
    TrainerOptions t;
    t.loss.weights.alpha = alpha;
    t.loss.weights.beta = beta;
    t.loss.weights.gamma = gamma;
    t.loss.weights.rho = rho;
    t.loss.weights.lambda = lambda;
    t.loss.weights.tau = tau;
    t.loss.score_mode = contrastive_score == "raw_prob" ? ContrastiveScore::kRawProb
                                                        : ContrastiveScore::kLogLikelihood;
    t.optimizer.kind = optimizer == "sgd" ? OptimizerOptions::kSgd : OptimizerOptions::kAdam;
    t.warm_start_kmeans = warm_start_kmeans;
    t.reset_adam_on_refresh = reset_adam_on_refresh;
    t.seed = seed;
    return t;
  }

  FinetuneOptions finetune_options() const {
    FinetuneOptions f;
    f.steps = finetune_steps;
    f.learning_rate = finetune_lr;
    f.batch_n = batch_n;
    f.pseudo_queries_per_doc = finetune_pseudo_queries;
    f.include_noisy = finetune_include_noisy;
    return f;
  }

  GeneratorBackend generator_backend() const {
    GeneratorBackend b;
    b.kind = backend == "external" ? GeneratorBackend::kExternal : GeneratorBackend::kRuleBased;
    b.endpoint = external_endpoint;
    b.model = external_model;
    b.timeout_ms = external_timeout_ms;
    b.max_inflight = external_max_inflight;
    return b;
  }

  BeamSearchOptions beam_options() const {
    BeamSearchOptions b;
    b.beam = beam_width;
    b.renormalize = renormalize_beam;
    return b;
  }
};

} // namespace bootret
