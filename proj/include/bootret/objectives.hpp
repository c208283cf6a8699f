#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bootret/augment.hpp"
#include "bootret/common.hpp"
#include "bootret/corpus.hpp"
#include "bootret/mat.hpp"
#include "bootret/model.hpp"
#include "bootret/pq.hpp"

namespace bootret {

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 2.0;
  double rho = 2.0;
  double lambda = 1.0;
  double tau = 0.2;

  void validate() const {
    if (tau <= 0.0) raise("loss weights: tau must be positive");
    if (alpha < 0 || beta < 0 || gamma < 0 || rho < 0 || lambda < 0)
      raise("loss weights: alpha/beta/gamma/rho/lambda must be nonnegative");
  }
};

// How the sequence score enters exp(./tau) in the contrastive terms.
// kLogLikelihood feeds log P(id|.) (the default); kRawProb feeds P(id|.)
// itself, which is numerically flat for long docids.
enum class ContrastiveScore { kLogLikelihood, kRawProb };

struct LossOptions {
  LossWeights weights;
  ContrastiveScore score_mode = ContrastiveScore::kLogLikelihood;
};

// N originals with their docids plus H noisy variants each (H = 4 in the
// standard setup, 0 when noisy documents are ablated).
struct IndexingBatch {
  std::vector<std::vector<int>> doc_tokens;
  std::vector<std::vector<std::vector<int>>> noisy_tokens; // [i][h]
  std::vector<Docid> docids;

  int size() const { return static_cast<int>(doc_tokens.size()); }
  int noisy_per_doc() const {
    return noisy_tokens.empty() ? 0 : static_cast<int>(noisy_tokens[0].size());
  }

  void validate(const ModelConfig& cfg) const {
    if (doc_tokens.empty()) raise("indexing batch: empty");
    if (docids.size() != doc_tokens.size()) raise("indexing batch: docid count mismatch");
    if (!noisy_tokens.empty() && noisy_tokens.size() != doc_tokens.size())
      raise("indexing batch: noisy count mismatch");
    const size_t h = noisy_tokens.empty() ? 0 : noisy_tokens[0].size();
    for (const auto& v : noisy_tokens)
      if (v.size() != h) raise("indexing batch: ragged noisy variants");
    for (const auto& id : docids) check_codes(cfg, id.codes);
  }
};

// N documents' pseudo-queries (X per document) paired with the docids.
struct RetrievalBatch {
  std::vector<std::vector<std::vector<int>>> query_tokens; // [i][x]
  std::vector<Docid> docids;

  int size() const { return static_cast<int>(query_tokens.size()); }

  void validate(const ModelConfig& cfg) const {
    if (query_tokens.empty()) raise("retrieval batch: empty");
    if (docids.size() != query_tokens.size()) raise("retrieval batch: docid count mismatch");
    for (const auto& qs : query_tokens) {
      if (qs.empty()) raise("retrieval batch: document with no queries");
      for (const auto& q : qs)
        if (q.empty()) raise("retrieval batch: empty query");
    }
    for (const auto& id : docids) check_codes(cfg, id.codes);
  }
};

namespace detail {

// scores[r][j] = log P(docid_j | input r)
inline Mat score_matrix(const ModelParams& p, const std::vector<const std::vector<int>*>& inputs,
                        const std::vector<Docid>& docids) {
  Mat scores(static_cast<int>(inputs.size()), static_cast<int>(docids.size()));
  for (size_t r = 0; r < inputs.size(); ++r) {
    DecodeState start = begin_decode(p, *inputs[r]);
    for (size_t j = 0; j < docids.size(); ++j)
      scores(static_cast<int>(r), static_cast<int>(j)) =
          score_docid_from(p, start, docids[j].codes).log_likelihood;
  }
  return scores;
}

inline double transform_score(double s, double tau, ContrastiveScore mode) {
  return mode == ContrastiveScore::kLogLikelihood ? s / tau : std::exp(s) / tau;
}

// -sum_r log softmax_j(z(scores[r]))[positive[r]]
inline double contrastive_nll(const Mat& scores, const std::vector<int>& positive, double tau,
                              ContrastiveScore mode) {
  double total = 0.0;
  Vec z(static_cast<size_t>(scores.cols));
  for (int r = 0; r < scores.rows; ++r) {
    for (int j = 0; j < scores.cols; ++j)
      z[static_cast<size_t>(j)] = transform_score(scores(r, j), tau, mode);
    total += log_sum_exp(z) - z[static_cast<size_t>(positive[static_cast<size_t>(r)])];
  }
  return total;
}

// coeff * d(contrastive_nll row r)/d(scores[r][j]), added into w_row
inline void contrastive_row_grad(const Mat& scores, int r, int positive, double tau,
                                 ContrastiveScore mode, double coeff, Vec& w_row) {
  Vec z(static_cast<size_t>(scores.cols));
  for (int j = 0; j < scores.cols; ++j)
    z[static_cast<size_t>(j)] = transform_score(scores(r, j), tau, mode);
  const double lse = log_sum_exp(z);
  for (int j = 0; j < scores.cols; ++j) {
    const double pj = std::exp(z[static_cast<size_t>(j)] - lse);
    const double dz = pj - (j == positive ? 1.0 : 0.0);
    const double chain =
        mode == ContrastiveScore::kLogLikelihood ? 1.0 / tau : std::exp(scores(r, j)) / tau;
    w_row[static_cast<size_t>(j)] += coeff * dz * chain;
  }
}

inline double cosine(const Vec& u, const Vec& v) {
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) return 0.0; // convention for degenerate encodings
  return dot(u, v) / (nu * nv);
}

// coeff * d(1 - cos(u, v)) accumulated into du, dv
inline void cosine_loss_grad(const Vec& u, const Vec& v, double coeff, Vec& du, Vec& dv) {
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) return;
  const double c = dot(u, v) / (nu * nv);
  for (size_t i = 0; i < u.size(); ++i) {
    du[i] += coeff * (c * u[i] / (nu * nu) - v[i] / (nu * nv));
    dv[i] += coeff * (c * v[i] / (nv * nv) - u[i] / (nu * nv));
  }
}

} // namespace detail

enum class LossKind {
  kSemanticConsistency,
  kContrastiveIndexing,
  kContrastiveNoisy,
  kCorpusIndexing,      // SC + alpha*C1 + beta*C2
  kRelevancePrediction,
  kMleIndexing,
  kMleRetrieval,
  kPretrainTotal,       // gamma*CI + rho*RP + lambda*(ID + RE)
};

struct LossParts {
  double sc = 0, c1 = 0, c2 = 0, rp = 0, id = 0, re = 0;
};

namespace detail {

struct Mults {
  double sc = 0, c1 = 0, c2 = 0, rp = 0, id = 0, re = 0;
};

inline Mults multipliers(LossKind kind, const LossWeights& w) {
  switch (kind) {
    case LossKind::kSemanticConsistency: return {1, 0, 0, 0, 0, 0};
    case LossKind::kContrastiveIndexing: return {0, 1, 0, 0, 0, 0};
    case LossKind::kContrastiveNoisy: return {0, 0, 1, 0, 0, 0};
    case LossKind::kCorpusIndexing: return {1, w.alpha, w.beta, 0, 0, 0};
    case LossKind::kRelevancePrediction: return {0, 0, 0, 1, 0, 0};
    case LossKind::kMleIndexing: return {0, 0, 0, 0, 1, 0};
    case LossKind::kMleRetrieval: return {0, 0, 0, 0, 0, 1};
    case LossKind::kPretrainTotal:
      return {w.gamma, w.gamma * w.alpha, w.gamma * w.beta, w.rho, w.lambda, w.lambda};
  }
  raise("bad loss kind");
}

} // namespace detail

// Single entry point for every objective: value, per-component breakdown, and
// (when grads != nullptr) analytic gradients accumulated into *grads.
// Either batch pointer may be null; components needing a missing batch are 0.
// When no contrastive term is active only the diagonal scores are computed,
// which is what makes MLE-only fine-tuning cheap.
inline double compute_loss(const ModelParams& p, const IndexingBatch* ib, const RetrievalBatch* rb,
                           const LossOptions& opts, LossKind kind, TensorSet* grads = nullptr,
                           LossParts* parts_out = nullptr) {
  opts.weights.validate();
  const detail::Mults m = detail::multipliers(kind, opts.weights);
  const double tau = opts.weights.tau;
  const ContrastiveScore mode = opts.score_mode;
  LossParts parts;

  if (ib != nullptr && (m.sc != 0 || m.c1 != 0 || m.c2 != 0 || m.id != 0)) {
    ib->validate(p.cfg);
    const int N = ib->size();
    const int H = ib->noisy_per_doc();

    const bool full_s = m.c1 != 0;
    const bool need_s = full_s || m.id != 0;
    Mat S;
    Vec s_diag;
    if (need_s) {
      if (full_s) {
        std::vector<const std::vector<int>*> inputs;
        inputs.reserve(static_cast<size_t>(N));
        for (const auto& t : ib->doc_tokens) inputs.push_back(&t);
        S = detail::score_matrix(p, inputs, ib->docids);
        s_diag.resize(static_cast<size_t>(N));
        for (int i = 0; i < N; ++i) s_diag[static_cast<size_t>(i)] = S(i, i);
      } else {
        s_diag.resize(static_cast<size_t>(N));
        for (int i = 0; i < N; ++i)
          s_diag[static_cast<size_t>(i)] =
              score_docid(p, ib->doc_tokens[static_cast<size_t>(i)],
                          ib->docids[static_cast<size_t>(i)].codes)
                  .log_likelihood;
      }
    }

    const bool full_t = m.c2 != 0 && H > 0;
    const bool need_t = H > 0 && (full_t || m.id != 0);
    Mat T;
    Vec t_diag; // [i*H + h] = log P(id_i | noisy_i^h)
    if (need_t) {
      if (full_t) {
        std::vector<const std::vector<int>*> inputs;
        inputs.reserve(static_cast<size_t>(N) * H);
        for (const auto& v : ib->noisy_tokens)
          for (const auto& t : v) inputs.push_back(&t);
        T = detail::score_matrix(p, inputs, ib->docids);
        t_diag.resize(static_cast<size_t>(N) * H);
        for (int i = 0; i < N; ++i)
          for (int h = 0; h < H; ++h)
            t_diag[static_cast<size_t>(i) * H + h] = T(i * H + h, i);
      } else {
        t_diag.resize(static_cast<size_t>(N) * H);
        for (int i = 0; i < N; ++i)
          for (int h = 0; h < H; ++h)
            t_diag[static_cast<size_t>(i) * H + h] =
                score_docid(p, ib->noisy_tokens[static_cast<size_t>(i)][static_cast<size_t>(h)],
                            ib->docids[static_cast<size_t>(i)].codes)
                    .log_likelihood;
      }
    }

    if (full_s) {
      std::vector<int> pos(static_cast<size_t>(N));
      for (int i = 0; i < N; ++i) pos[static_cast<size_t>(i)] = i;
      parts.c1 = detail::contrastive_nll(S, pos, tau, mode);
    }
    if (full_t) {
      std::vector<int> pos(static_cast<size_t>(N) * H);
      for (int i = 0; i < N; ++i)
        for (int h = 0; h < H; ++h) pos[static_cast<size_t>(i) * H + h] = i;
      parts.c2 = detail::contrastive_nll(T, pos, tau, mode);
    }
    if (m.id != 0) {
      for (double v : s_diag) parts.id -= v;
      for (double v : t_diag) parts.id -= v;
    }

    std::vector<Vec> enc_docs, enc_noisy;
    if (m.sc != 0 && H > 0) {
      enc_docs.reserve(static_cast<size_t>(N));
      enc_noisy.reserve(static_cast<size_t>(N) * H);
      for (int i = 0; i < N; ++i) {
        enc_docs.push_back(encode(p, ib->doc_tokens[static_cast<size_t>(i)]));
        for (int h = 0; h < H; ++h) {
          enc_noisy.push_back(
              encode(p, ib->noisy_tokens[static_cast<size_t>(i)][static_cast<size_t>(h)]));
          parts.sc += 1.0 - detail::cosine(enc_docs.back(), enc_noisy.back());
        }
      }
    }

    if (grads != nullptr) {
      Vec w_row(static_cast<size_t>(N));
      if (need_s) {
        for (int i = 0; i < N; ++i) {
          std::fill(w_row.begin(), w_row.end(), 0.0);
          if (full_s) detail::contrastive_row_grad(S, i, i, tau, mode, m.c1, w_row);
          if (m.id != 0) w_row[static_cast<size_t>(i)] -= m.id;
          for (int j = 0; j < N; ++j)
            accumulate_score_grad(p, ib->doc_tokens[static_cast<size_t>(i)],
                                  ib->docids[static_cast<size_t>(j)].codes,
                                  w_row[static_cast<size_t>(j)], *grads);
        }
      }
      if (need_t) {
        for (int i = 0; i < N; ++i) {
          for (int h = 0; h < H; ++h) {
            std::fill(w_row.begin(), w_row.end(), 0.0);
            if (full_t) detail::contrastive_row_grad(T, i * H + h, i, tau, mode, m.c2, w_row);
            if (m.id != 0) w_row[static_cast<size_t>(i)] -= m.id;
            for (int j = 0; j < N; ++j)
              accumulate_score_grad(
                  p, ib->noisy_tokens[static_cast<size_t>(i)][static_cast<size_t>(h)],
                  ib->docids[static_cast<size_t>(j)].codes, w_row[static_cast<size_t>(j)], *grads);
          }
        }
      }
      if (m.sc != 0 && H > 0) {
        Vec du(static_cast<size_t>(p.cfg.model_dim));
        Vec dv(static_cast<size_t>(p.cfg.model_dim));
        for (int i = 0; i < N; ++i) {
          std::fill(du.begin(), du.end(), 0.0);
          for (int h = 0; h < H; ++h) {
            std::fill(dv.begin(), dv.end(), 0.0);
            detail::cosine_loss_grad(enc_docs[static_cast<size_t>(i)],
                                     enc_noisy[static_cast<size_t>(i) * H + h], m.sc, du, dv);
            accumulate_encode_grad(
                p, ib->noisy_tokens[static_cast<size_t>(i)][static_cast<size_t>(h)], dv, *grads);
          }
          accumulate_encode_grad(p, ib->doc_tokens[static_cast<size_t>(i)], du, *grads);
        }
      }
    }
  }

  if (rb != nullptr && (m.rp != 0 || m.re != 0)) {
    rb->validate(p.cfg);
    const int N = rb->size();
    std::vector<const std::vector<int>*> inputs;
    std::vector<int> pos;
    for (int i = 0; i < N; ++i)
      for (const auto& q : rb->query_tokens[static_cast<size_t>(i)]) {
        inputs.push_back(&q);
        pos.push_back(i);
      }

    const bool full_u = m.rp != 0;
    Mat U;
    Vec u_diag;
    if (full_u) {
      U = detail::score_matrix(p, inputs, rb->docids);
      u_diag.resize(inputs.size());
      for (size_t r = 0; r < inputs.size(); ++r)
        u_diag[r] = U(static_cast<int>(r), pos[r]);
    } else {
      u_diag.resize(inputs.size());
      for (size_t r = 0; r < inputs.size(); ++r)
        u_diag[r] = score_docid(p, *inputs[r], rb->docids[static_cast<size_t>(pos[r])].codes)
                        .log_likelihood;
    }

    if (full_u) parts.rp = detail::contrastive_nll(U, pos, tau, mode);
    if (m.re != 0)
      for (double v : u_diag) parts.re -= v;

    if (grads != nullptr) {
      Vec w_row(static_cast<size_t>(N));
      for (size_t r = 0; r < inputs.size(); ++r) {
        std::fill(w_row.begin(), w_row.end(), 0.0);
        if (full_u)
          detail::contrastive_row_grad(U, static_cast<int>(r), pos[r], tau, mode, m.rp, w_row);
        if (m.re != 0) w_row[static_cast<size_t>(pos[r])] -= m.re;
        for (int j = 0; j < N; ++j)
          accumulate_score_grad(p, *inputs[r], rb->docids[static_cast<size_t>(j)].codes,
                                w_row[static_cast<size_t>(j)], *grads);
      }
    }
  }

  if (parts_out != nullptr) *parts_out = parts;
  double value = m.sc * parts.sc + m.c1 * parts.c1 + m.c2 * parts.c2 + m.rp * parts.rp +
                 m.id * parts.id + m.re * parts.re;
  if (!std::isfinite(value)) raise("loss is not finite");
  return value;
}

// Named objectives.

inline double loss_semantic_consistency(const ModelParams& p, const IndexingBatch& b) {
  return compute_loss(p, &b, nullptr, LossOptions{}, LossKind::kSemanticConsistency);
}

inline double loss_contrastive_indexing(const ModelParams& p, const IndexingBatch& b,
                                        const LossOptions& opts) {
  return compute_loss(p, &b, nullptr, opts, LossKind::kContrastiveIndexing);
}

inline double loss_contrastive_noisy(const ModelParams& p, const IndexingBatch& b,
                                     const LossOptions& opts) {
  return compute_loss(p, &b, nullptr, opts, LossKind::kContrastiveNoisy);
}

inline double loss_corpus_indexing(const ModelParams& p, const IndexingBatch& b,
                                   const LossOptions& opts) {
  return compute_loss(p, &b, nullptr, opts, LossKind::kCorpusIndexing);
}

inline double loss_relevance_prediction(const ModelParams& p, const RetrievalBatch& b,
                                        const LossOptions& opts) {
  return compute_loss(p, nullptr, &b, opts, LossKind::kRelevancePrediction);
}

inline double loss_mle_indexing(const ModelParams& p, const IndexingBatch& b) {
  return compute_loss(p, &b, nullptr, LossOptions{}, LossKind::kMleIndexing);
}

inline double loss_mle_retrieval(const ModelParams& p, const RetrievalBatch& b) {
  return compute_loss(p, nullptr, &b, LossOptions{}, LossKind::kMleRetrieval);
}

inline double loss_pretrain_total(const ModelParams& p, const IndexingBatch* ib,
                                  const RetrievalBatch* rb, const LossOptions& opts,
                                  LossParts* parts = nullptr) {
  return compute_loss(p, ib, rb, opts, LossKind::kPretrainTotal, nullptr, parts);
}

// ---- batch construction ----
//
// Batches are a pure function of (seed, stream, batch index): each epoch's
// document order comes from a hash-derived shuffle, so a training run can be
// resumed from any step without replaying generator state. Docid labels are
// read through the table passed in at call time, which is how refreshed
// docids reach the very next step.

struct BatchPlan {
  const Corpus* corpus = nullptr;
  const NoisyStore* noisy = nullptr;   // null or empty: batches carry no noisy variants
  const QueryStore* queries = nullptr; // required for retrieval batches
  int batch_n = 8;
  int queries_per_doc = 0; // 0: use everything in the store
  uint64_t seed = 0;

  size_t chunks_per_epoch() const {
    if (corpus == nullptr || corpus->documents.empty()) raise("batch plan: empty corpus");
    size_t c = corpus->documents.size() / static_cast<size_t>(batch_n);
    if (c == 0) raise("batch plan: corpus smaller than batch size ", batch_n);
    return c;
  }
};

namespace detail {

inline std::vector<size_t> chunk_docs(const BatchPlan& plan, const char* stream,
                                      size_t batch_index) {
  const size_t per_epoch = plan.chunks_per_epoch();
  const size_t epoch = batch_index / per_epoch;
  const size_t within = batch_index % per_epoch;
  std::vector<size_t> order(plan.corpus->documents.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(mix_seed(plan.seed, hash_str(stream)), epoch));
  rng.shuffle(order);
  const size_t n = static_cast<size_t>(plan.batch_n);
  return {order.begin() + static_cast<long>(within * n),
          order.begin() + static_cast<long>((within + 1) * n)};
}

} // namespace detail

inline IndexingBatch make_indexing_batch(const BatchPlan& plan, const DocidTable& table,
                                         size_t batch_index) {
  IndexingBatch b;
  const bool with_noisy = plan.noisy != nullptr && !plan.noisy->empty();
  for (size_t di : detail::chunk_docs(plan, "indexing", batch_index)) {
    const Document& d = plan.corpus->documents[di];
    b.doc_tokens.push_back(d.tokens);
    b.docids.push_back(table.docid_of(d.doc_key));
    if (with_noisy) {
      std::vector<std::vector<int>> variants;
      for (const auto& nd : plan.noisy->variants(d.doc_key)) variants.push_back(nd.tokens);
      b.noisy_tokens.push_back(std::move(variants));
    }
  }
  return b;
}

inline RetrievalBatch make_retrieval_batch(const BatchPlan& plan, const DocidTable& table,
                                           size_t batch_index) {
  if (plan.queries == nullptr || plan.queries->empty())
    raise("batch plan: query store is empty");
  RetrievalBatch b;
  for (size_t di : detail::chunk_docs(plan, "retrieval", batch_index)) {
    const Document& d = plan.corpus->documents[di];
    std::vector<std::vector<int>> qs;
    for (const auto& q : plan.queries->queries(d.doc_key)) {
      qs.push_back(q.tokens);
      if (plan.queries_per_doc > 0 && static_cast<int>(qs.size()) >= plan.queries_per_doc) break;
    }
    b.query_tokens.push_back(std::move(qs));
    b.docids.push_back(table.docid_of(d.doc_key));
  }
  return b;
}

// Strictly alternating stream: even steps index, odd steps retrieve.
class BatchStream {
public:
  explicit BatchStream(BatchPlan plan) : plan_(std::move(plan)) {}

  bool next_is_indexing() const { return step_ % 2 == 0; }

  IndexingBatch next_indexing(const DocidTable& table) {
    if (!next_is_indexing()) raise("batch stream: expected retrieval step");
    return make_indexing_batch(plan_, table, step_++ / 2);
  }

  RetrievalBatch next_retrieval(const DocidTable& table) {
    if (next_is_indexing()) raise("batch stream: expected indexing step");
    return make_retrieval_batch(plan_, table, step_++ / 2);
  }

  size_t step() const { return step_; }

private:
  BatchPlan plan_;
  size_t step_ = 0;
};

} // namespace bootret
