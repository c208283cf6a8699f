#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "bootret/common.hpp"
#include "bootret/mat.hpp"
#include "bootret/rng.hpp"

namespace bootret {

struct ModelConfig {
  int text_vocab = 0;
  int embed_dim = 32; // E, shared by text and docid token embeddings
  int model_dim = 64; // D
  int groups = 8;     // g
  int clusters = 16;  // k

  int subdim() const { return model_dim / groups; }
  int docid_tokens() const { return groups * clusters; }

  void validate() const {
    if (text_vocab < 1 || embed_dim < 1 || model_dim < 1 || groups < 1 || clusters < 1)
      raise("model config: all sizes must be >= 1");
    if (model_dim % groups != 0)
      raise("model config: model_dim ", model_dim, " not divisible by groups ", groups);
  }

  bool operator==(const ModelConfig&) const = default;
};

// The weight arrays. Reused as-is for gradients and Adam moments.
struct TensorSet {
  Mat token_embed; // |V| x E
  Mat enc_W;       // E x D
  Mat enc_b;       // 1 x D
  Mat dec_U;       // D x D
  Mat dec_V;       // E x D
  Mat dec_out_W;   // (g*D) x k, output head t occupies rows [t*D, (t+1)*D)
  Mat dec_out_b;   // g x k
  Mat docid_embed; // (g*k) x E

  static TensorSet shaped(const ModelConfig& cfg) {
    TensorSet t;
    t.token_embed = Mat(cfg.text_vocab, cfg.embed_dim);
    t.enc_W = Mat(cfg.embed_dim, cfg.model_dim);
    t.enc_b = Mat(1, cfg.model_dim);
    t.dec_U = Mat(cfg.model_dim, cfg.model_dim);
    t.dec_V = Mat(cfg.embed_dim, cfg.model_dim);
    t.dec_out_W = Mat(cfg.groups * cfg.model_dim, cfg.clusters);
    t.dec_out_b = Mat(cfg.groups, cfg.clusters);
    t.docid_embed = Mat(cfg.groups * cfg.clusters, cfg.embed_dim);
    return t;
  }

  template <typename Fn>
  void visit(Fn&& fn) {
    fn("token_embed", token_embed);
    fn("enc_W", enc_W);
    fn("enc_b", enc_b);
    fn("dec_U", dec_U);
    fn("dec_V", dec_V);
    fn("dec_out_W", dec_out_W);
    fn("dec_out_b", dec_out_b);
    fn("docid_embed", docid_embed);
  }

  template <typename Fn>
  void visit(Fn&& fn) const {
    const_cast<TensorSet*>(this)->visit([&](const char* name, Mat& m) {
      fn(name, static_cast<const Mat&>(m));
    });
  }

  void zero() {
    visit([](const char*, Mat& m) { m.zero(); });
  }

  bool finite() const {
    bool ok = true;
    visit([&](const char*, const Mat& m) { ok = ok && all_finite(m); });
    return ok;
  }
};

struct ModelParams {
  ModelConfig cfg;
  TensorSet w;
  TensorSet adam_m;
  TensorSet adam_v;
  int64_t adam_t = 0;
  uint64_t rng_seed = 0;
  std::string rng_state;
};

// Weights uniform in [-0.08, 0.08], deterministic in seed.
inline ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  p.w = TensorSet::shaped(cfg);
  p.adam_m = TensorSet::shaped(cfg);
  p.adam_v = TensorSet::shaped(cfg);
  Rng rng(seed);
  p.w.visit([&](const char*, Mat& m) {
    for (double& v : m.a) v = rng.uniform(-0.08, 0.08);
  });
  p.rng_seed = seed;
  p.rng_state = rng.serialize();
  return p;
}

// Mean of the token embedding rows. The document vector is order-invariant.
inline Vec mean_embedding(const ModelParams& p, const std::vector<int>& tokens) {
  if (tokens.empty()) raise("encode: empty token sequence");
  Vec m(p.cfg.embed_dim, 0.0);
  for (int tok : tokens) {
    if (tok < 0 || tok >= p.cfg.text_vocab) raise("encode: token id out of range: ", tok);
    const double* row = p.w.token_embed.row(tok);
    for (int e = 0; e < p.cfg.embed_dim; ++e) m[e] += row[e];
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (double& v : m) v *= inv;
  return m;
}

// document vector: tanh(enc_W^T mean + enc_b)
inline Vec encode(const ModelParams& p, const std::vector<int>& tokens) {
  Vec m = mean_embedding(p, tokens);
  Vec s(p.cfg.model_dim);
  matvec_t(p.w.enc_W, m.data(), s.data());
  for (int j = 0; j < p.cfg.model_dim; ++j) s[j] = std::tanh(s[j] + p.w.enc_b(0, j));
  return s;
}

struct DecodeState {
  Vec s;
  int t = 0;
};

inline DecodeState begin_decode(const ModelParams& p, const std::vector<int>& tokens) {
  return DecodeState{encode(p, tokens), 0};
}

inline DecodeState begin_decode_from_vector(Vec doc_vector) {
  return DecodeState{std::move(doc_vector), 0};
}

inline Vec step_logits(const ModelParams& p, const DecodeState& st) {
  if (st.t < 0 || st.t >= p.cfg.groups) raise("step_logits: position ", st.t, " out of range");
  const int D = p.cfg.model_dim, k = p.cfg.clusters;
  Vec logits(p.w.dec_out_b.row(st.t), p.w.dec_out_b.row(st.t) + k);
  for (int d = 0; d < D; ++d) {
    const double sd = st.s[d];
    const double* wrow = p.w.dec_out_W.row(st.t * D + d);
    for (int c = 0; c < k; ++c) logits[c] += sd * wrow[c];
  }
  return logits;
}

// s' = tanh(dec_U^T s + dec_V^T e(code))
inline DecodeState advance(const ModelParams& p, const DecodeState& st, int code) {
  if (st.t < 0 || st.t >= p.cfg.groups) raise("advance: position ", st.t, " out of range");
  if (code < 0 || code >= p.cfg.clusters) raise("advance: code ", code, " out of range");
  const int D = p.cfg.model_dim;
  Vec a(D);
  matvec_t(p.w.dec_U, st.s.data(), a.data());
  const double* e = p.w.docid_embed.row(st.t * p.cfg.clusters + code);
  for (int i = 0; i < p.cfg.embed_dim; ++i) {
    const double ei = e[i];
    if (ei == 0.0) continue;
    const double* vrow = p.w.dec_V.row(i);
    for (int j = 0; j < D; ++j) a[j] += ei * vrow[j];
  }
  DecodeState nxt;
  nxt.s.resize(D);
  for (int j = 0; j < D; ++j) nxt.s[j] = std::tanh(a[j]);
  nxt.t = st.t + 1;
  return nxt;
}

struct SequenceScore {
  double log_likelihood = 0.0;
  Vec per_step; // length g, each <= 0
};

inline void check_codes(const ModelConfig& cfg, const std::vector<int>& codes) {
  if (static_cast<int>(codes.size()) != cfg.groups)
    raise("docid length ", codes.size(), " != groups ", cfg.groups);
  for (int c : codes)
    if (c < 0 || c >= cfg.clusters) raise("docid code ", c, " out of range [0, ", cfg.clusters, ")");
}

// log P(codes | state start), factorized over positions. Built on the same
// step functions beam search uses.
inline SequenceScore score_docid_from(const ModelParams& p, DecodeState st,
                                      const std::vector<int>& codes) {
  check_codes(p.cfg, codes);
  SequenceScore out;
  out.per_step.reserve(codes.size());
  for (int t = 0; t < p.cfg.groups; ++t) {
    Vec logits = step_logits(p, st);
    double lse = log_sum_exp(logits);
    double lp = logits[codes[static_cast<size_t>(t)]] - lse;
    out.per_step.push_back(lp);
    out.log_likelihood += lp;
    if (t + 1 < p.cfg.groups) st = advance(p, st, codes[static_cast<size_t>(t)]);
  }
  return out;
}

inline SequenceScore score_docid(const ModelParams& p, const std::vector<int>& tokens,
                                 const std::vector<int>& codes) {
  return score_docid_from(p, begin_decode(p, tokens), codes);
}

namespace detail {

// Shared encoder tail of both backward passes: d(loss)/d(s0) -> enc weights
// and token embedding rows.
inline void encoder_backward(const ModelParams& p, const std::vector<int>& tokens, const Vec& m,
                             const Vec& s0, const Vec& ds0, TensorSet& g) {
  const int D = p.cfg.model_dim, E = p.cfg.embed_dim;
  Vec da(D);
  for (int j = 0; j < D; ++j) da[j] = ds0[j] * (1.0 - s0[j] * s0[j]);
  add_outer(g.enc_W, m.data(), da.data());
  for (int j = 0; j < D; ++j) g.enc_b(0, j) += da[j];
  Vec dm(E);
  matvec(p.w.enc_W, da.data(), dm.data());
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (int tok : tokens) {
    double* row = g.token_embed.row(tok);
    for (int e = 0; e < E; ++e) row[e] += inv * dm[e];
  }
}

} // namespace detail

// Accumulates dll * d(log P(codes|tokens))/d(theta) into g.
inline void accumulate_score_grad(const ModelParams& p, const std::vector<int>& tokens,
                                  const std::vector<int>& codes, double dll, TensorSet& g) {
  if (dll == 0.0) return;
  check_codes(p.cfg, codes);
  const int D = p.cfg.model_dim, E = p.cfg.embed_dim, k = p.cfg.clusters, G = p.cfg.groups;

  // forward, caching everything the backward pass needs
  Vec m = mean_embedding(p, tokens);
  std::vector<Vec> states(static_cast<size_t>(G)); // s_0 .. s_{g-1}
  std::vector<Vec> probs(static_cast<size_t>(G));  // softmax(logits_t)
  {
    DecodeState st;
    st.s.resize(D);
    matvec_t(p.w.enc_W, m.data(), st.s.data());
    for (int j = 0; j < D; ++j) st.s[j] = std::tanh(st.s[j] + p.w.enc_b(0, j));
    st.t = 0;
    for (int t = 0; t < G; ++t) {
      states[static_cast<size_t>(t)] = st.s;
      Vec logits = step_logits(p, st);
      double lse = log_sum_exp(logits);
      Vec& pr = probs[static_cast<size_t>(t)];
      pr.resize(static_cast<size_t>(k));
      for (int c = 0; c < k; ++c) pr[static_cast<size_t>(c)] = std::exp(logits[static_cast<size_t>(c)] - lse);
      if (t + 1 < G) st = advance(p, st, codes[static_cast<size_t>(t)]);
    }
  }

  Vec ds_next; // d(loss)/d(s_{t+1})
  Vec ds_cur(static_cast<size_t>(D));
  Vec da(static_cast<size_t>(D));
  Vec dlogits(static_cast<size_t>(k));
  Vec de(static_cast<size_t>(E));
  for (int t = G - 1; t >= 0; --t) {
    const Vec& s_t = states[static_cast<size_t>(t)];
    std::fill(ds_cur.begin(), ds_cur.end(), 0.0);

    if (t + 1 < G) {
      // transition t produced s_{t+1} = tanh(U^T s_t + V^T e_t)
      const Vec& s_next = states[static_cast<size_t>(t + 1)];
      for (int j = 0; j < D; ++j) da[j] = ds_next[j] * (1.0 - s_next[j] * s_next[j]);
      add_outer(g.dec_U, s_t.data(), da.data());
      const int gid = t * k + codes[static_cast<size_t>(t)];
      const double* e = p.w.docid_embed.row(gid);
      add_outer(g.dec_V, e, da.data());
      matvec(p.w.dec_U, da.data(), ds_cur.data());
      matvec(p.w.dec_V, da.data(), de.data());
      double* de_row = g.docid_embed.row(gid);
      for (int i = 0; i < E; ++i) de_row[i] += de[i];
    }

    // logits_t = head_t^T s_t + b_t; d(lp)/d(logits) = onehot - softmax
    const Vec& pr = probs[static_cast<size_t>(t)];
    for (int c = 0; c < k; ++c) dlogits[static_cast<size_t>(c)] = -dll * pr[static_cast<size_t>(c)];
    dlogits[static_cast<size_t>(codes[static_cast<size_t>(t)])] += dll;
    double* brow = g.dec_out_b.row(t);
    for (int c = 0; c < k; ++c) brow[c] += dlogits[static_cast<size_t>(c)];
    for (int d = 0; d < D; ++d) {
      const double sd = s_t[d];
      double* wgrow = g.dec_out_W.row(t * D + d);
      const double* wrow = p.w.dec_out_W.row(t * D + d);
      double acc = 0.0;
      for (int c = 0; c < k; ++c) {
        wgrow[c] += sd * dlogits[static_cast<size_t>(c)];
        acc += wrow[c] * dlogits[static_cast<size_t>(c)];
      }
      ds_cur[static_cast<size_t>(d)] += acc;
    }

    ds_next = ds_cur;
  }

  detail::encoder_backward(p, tokens, m, states[0], ds_next, g);
}

// Accumulates dvec^T d(encode(tokens))/d(theta) into g.
inline void accumulate_encode_grad(const ModelParams& p, const std::vector<int>& tokens,
                                   const Vec& dvec, TensorSet& g) {
  Vec m = mean_embedding(p, tokens);
  Vec s0(p.cfg.model_dim);
  matvec_t(p.w.enc_W, m.data(), s0.data());
  for (int j = 0; j < p.cfg.model_dim; ++j) s0[j] = std::tanh(s0[j] + p.w.enc_b(0, j));
  detail::encoder_backward(p, tokens, m, s0, dvec, g);
}

struct OptimizerOptions {
  enum Kind { kAdam, kSgd };
  Kind kind = kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void optimizer_step(ModelParams& p, const TensorSet& grads, double lr,
                           const OptimizerOptions& opt = {}) {
  if (!grads.finite()) raise("optimizer_step: non-finite gradient");
  if (opt.kind == OptimizerOptions::kSgd) {
    const Mat* gm[8];
    int i = 0;
    grads.visit([&](const char*, const Mat& m) { gm[i++] = &m; });
    i = 0;
    p.w.visit([&](const char*, Mat& m) {
      const Mat& gmat = *gm[i++];
      for (size_t j = 0; j < m.a.size(); ++j) m.a[j] -= lr * gmat.a[j];
    });
  } else {
    p.adam_t += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(p.adam_t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(p.adam_t));
    const Mat* gm[8];
    Mat* mm[8];
    Mat* vm[8];
    int i = 0;
    grads.visit([&](const char*, const Mat& m) { gm[i++] = &m; });
    i = 0;
    p.adam_m.visit([&](const char*, Mat& m) { mm[i++] = &m; });
    i = 0;
    p.adam_v.visit([&](const char*, Mat& m) { vm[i++] = &m; });
    i = 0;
    p.w.visit([&](const char*, Mat& w) {
      const Mat& gmat = *gm[i];
      Mat& mmat = *mm[i];
      Mat& vmat = *vm[i];
      ++i;
      for (size_t j = 0; j < w.a.size(); ++j) {
        const double gj = gmat.a[j];
        mmat.a[j] = opt.beta1 * mmat.a[j] + (1.0 - opt.beta1) * gj;
        vmat.a[j] = opt.beta2 * vmat.a[j] + (1.0 - opt.beta2) * gj * gj;
        const double mhat = mmat.a[j] / bc1;
        const double vhat = vmat.a[j] / bc2;
        w.a[j] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
      }
    });
  }
  if (!p.w.finite()) raise("optimizer_step: non-finite parameters after update");
}

// ---- checkpoint container (versioned, little-endian doubles) ----

namespace detail {

constexpr char kCkptMagic[8] = {'B', 'R', 'E', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) raise("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

inline void put_str(std::string& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

inline std::string get_str(const std::string& in, size_t& pos) {
  uint32_t n = get<uint32_t>(in, pos);
  if (pos + n > in.size()) raise("checkpoint truncated");
  std::string s = in.substr(pos, n);
  pos += n;
  return s;
}

inline void put_mat(std::string& out, const char* name, const Mat& m) {
  put_str(out, name);
  put<int32_t>(out, m.rows);
  put<int32_t>(out, m.cols);
  out.append(reinterpret_cast<const char*>(m.a.data()), m.a.size() * sizeof(double));
}

inline void get_mat(const std::string& in, size_t& pos, const char* name, Mat& m) {
  std::string got = get_str(in, pos);
  if (got != name) raise("checkpoint tensor order mismatch: expected ", name, ", got ", got);
  int32_t r = get<int32_t>(in, pos);
  int32_t c = get<int32_t>(in, pos);
  if (r != m.rows || c != m.cols)
    raise("checkpoint tensor ", name, " shape ", r, "x", c, " != expected ", m.rows, "x", m.cols);
  size_t bytes = m.a.size() * sizeof(double);
  if (pos + bytes > in.size()) raise("checkpoint truncated");
  std::memcpy(m.a.data(), in.data() + pos, bytes);
  pos += bytes;
}

} // namespace detail

inline void save_checkpoint(const ModelParams& p, const std::string& path) {
  std::string out;
  out.append(detail::kCkptMagic, sizeof(detail::kCkptMagic));
  detail::put<uint32_t>(out, detail::kCkptVersion);
  detail::put<int32_t>(out, p.cfg.text_vocab);
  detail::put<int32_t>(out, p.cfg.embed_dim);
  detail::put<int32_t>(out, p.cfg.model_dim);
  detail::put<int32_t>(out, p.cfg.groups);
  detail::put<int32_t>(out, p.cfg.clusters);
  detail::put<int64_t>(out, p.adam_t);
  detail::put<uint64_t>(out, p.rng_seed);
  detail::put_str(out, p.rng_state);
  p.w.visit([&](const char* n, const Mat& m) { detail::put_mat(out, n, m); });
  p.adam_m.visit([&](const char* n, const Mat& m) { detail::put_mat(out, n, m); });
  p.adam_v.visit([&](const char* n, const Mat& m) { detail::put_mat(out, n, m); });
  write_file(path, out);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::string in = read_file(path);
  size_t pos = 0;
  if (in.size() < sizeof(detail::kCkptMagic) ||
      std::memcmp(in.data(), detail::kCkptMagic, sizeof(detail::kCkptMagic)) != 0)
    raise("not a checkpoint file: ", path);
  pos += sizeof(detail::kCkptMagic);
  uint32_t version = detail::get<uint32_t>(in, pos);
  if (version != detail::kCkptVersion) raise("unsupported checkpoint version ", version);
  ModelConfig cfg;
  cfg.text_vocab = detail::get<int32_t>(in, pos);
  cfg.embed_dim = detail::get<int32_t>(in, pos);
  cfg.model_dim = detail::get<int32_t>(in, pos);
  cfg.groups = detail::get<int32_t>(in, pos);
  cfg.clusters = detail::get<int32_t>(in, pos);
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  p.w = TensorSet::shaped(cfg);
  p.adam_m = TensorSet::shaped(cfg);
  p.adam_v = TensorSet::shaped(cfg);
  p.adam_t = detail::get<int64_t>(in, pos);
  p.rng_seed = detail::get<uint64_t>(in, pos);
  p.rng_state = detail::get_str(in, pos);
  p.w.visit([&](const char* n, Mat& m) { detail::get_mat(in, pos, n, m); });
  p.adam_m.visit([&](const char* n, Mat& m) { detail::get_mat(in, pos, n, m); });
  p.adam_v.visit([&](const char* n, Mat& m) { detail::get_mat(in, pos, n, m); });
  if (pos != in.size()) raise("checkpoint has trailing bytes: ", path);
  return p;
}

} // namespace bootret
