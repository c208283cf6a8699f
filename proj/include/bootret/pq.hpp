#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "bootret/common.hpp"
#include "bootret/corpus.hpp"
#include "bootret/model.hpp"
#include "bootret/rng.hpp"

namespace bootret {

// Length-g sequence of cluster indices. The decoder's generation target.
struct Docid {
  std::vector<int> codes;

  bool operator==(const Docid&) const = default;
  bool operator<(const Docid& o) const { return codes < o.codes; }

  std::string str() const {
    std::string s;
    for (size_t i = 0; i < codes.size(); ++i) {
      if (i) s.push_back('-');
      s += std::to_string(codes[i]);
    }
    return s;
  }
};

// Map between (group, cluster) pairs and the flat docid-token id space [0, g*k).
struct DocidVocabulary {
  int groups = 0;
  int clusters = 0;

  int global_id(int group, int cluster) const { return group * clusters + cluster; }
  int group_of(int global) const { return global / clusters; }
  int cluster_of(int global) const { return global % clusters; }
  int size() const { return groups * clusters; }
};

struct Codebook {
  int groups = 0;
  int clusters = 0;
  int subdim = 0;
  int iteration_tag = 0;
  Vec centroids; // groups * clusters * subdim, row-major

  int dim() const { return groups * subdim; }

  double* centroid(int group, int cluster) {
    return centroids.data() + (static_cast<size_t>(group) * clusters + cluster) * subdim;
  }
  const double* centroid(int group, int cluster) const {
    return centroids.data() + (static_cast<size_t>(group) * clusters + cluster) * subdim;
  }

  bool operator==(const Codebook&) const = default;
};

namespace detail {

inline double sq_dist(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Lloyd's algorithm on one group's subvectors. Stops at assignment fixpoint
// or max_iters. Empty clusters steal the point farthest from its centroid.
inline void kmeans_group(const std::vector<Vec>& vectors, int offset, int subdim, int k, Rng rng,
                         const double* warm, double* out, int max_iters) {
  const int n = static_cast<int>(vectors.size());
  std::vector<double> cent(static_cast<size_t>(k) * subdim);
  auto point = [&](int i) { return vectors[static_cast<size_t>(i)].data() + offset; };

  if (warm != nullptr) {
    std::copy(warm, warm + cent.size(), cent.begin());
  } else {
    // k-means++ seeding
    int first = static_cast<int>(rng.index(static_cast<size_t>(n)));
    std::copy(point(first), point(first) + subdim, cent.begin());
    std::vector<double> d2(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) d2[static_cast<size_t>(i)] = sq_dist(point(i), cent.data(), subdim);
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (double v : d2) total += v;
      int pick;
      if (total <= 0.0) {
        pick = static_cast<int>(rng.index(static_cast<size_t>(n)));
      } else {
        double r = rng.uniform() * total;
        pick = n - 1;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += d2[static_cast<size_t>(i)];
          if (r < acc) {
            pick = i;
            break;
          }
        }
      }
      double* cc = cent.data() + static_cast<size_t>(c) * subdim;
      std::copy(point(pick), point(pick) + subdim, cc);
      for (int i = 0; i < n; ++i)
        d2[static_cast<size_t>(i)] = std::min(d2[static_cast<size_t>(i)], sq_dist(point(i), cc, subdim));
    }
  }

  std::vector<int> assign(static_cast<size_t>(n), -1);
  std::vector<int> counts(static_cast<size_t>(k), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(point(i), cent.data(), subdim);
      for (int c = 1; c < k; ++c) {
        double d = sq_dist(point(i), cent.data() + static_cast<size_t>(c) * subdim, subdim);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[static_cast<size_t>(i)] != best) {
        assign[static_cast<size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;

    std::fill(cent.begin(), cent.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int c = assign[static_cast<size_t>(i)];
      ++counts[static_cast<size_t>(c)];
      double* cc = cent.data() + static_cast<size_t>(c) * subdim;
      const double* x = point(i);
      for (int d = 0; d < subdim; ++d) cc[d] += x[d];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<size_t>(c)] > 0) {
        double* cc = cent.data() + static_cast<size_t>(c) * subdim;
        for (int d = 0; d < subdim; ++d) cc[d] /= counts[static_cast<size_t>(c)];
      }

    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      int steal = -1;
      double worst = -1.0;
      for (int i = 0; i < n; ++i) {
        const int ci = assign[static_cast<size_t>(i)];
        if (counts[static_cast<size_t>(ci)] <= 1) continue;
        double d = sq_dist(point(i), cent.data() + static_cast<size_t>(ci) * subdim, subdim);
        if (d > worst) {
          worst = d;
          steal = i;
        }
      }
      if (steal < 0) continue; // all points identical; nothing sensible to steal
      --counts[static_cast<size_t>(assign[static_cast<size_t>(steal)])];
      assign[static_cast<size_t>(steal)] = c;
      counts[static_cast<size_t>(c)] = 1;
      std::copy(point(steal), point(steal) + subdim, cent.data() + static_cast<size_t>(c) * subdim);
    }
  }

  std::copy(cent.begin(), cent.end(), out);
}

} // namespace detail

// Per-group k-means over evenly split subvectors. warm_start reuses previous
// centroids instead of k-means++ seeding.
inline Codebook train_codebook(const std::vector<Vec>& vectors, int groups, int clusters,
                               uint64_t seed, const Codebook* warm_start = nullptr,
                               int max_iters = 100) {
  if (vectors.size() < static_cast<size_t>(clusters))
    raise("train_codebook: need at least ", clusters, " vectors, got ", vectors.size());
  const int dim = static_cast<int>(vectors[0].size());
  if (dim % groups != 0) raise("train_codebook: dim ", dim, " not divisible by ", groups, " groups");
  for (const auto& v : vectors)
    if (static_cast<int>(v.size()) != dim) raise("train_codebook: inconsistent vector dimensions");
  if (warm_start != nullptr &&
      (warm_start->groups != groups || warm_start->clusters != clusters || warm_start->dim() != dim))
    raise("train_codebook: warm start shape mismatch");

  Codebook cb;
  cb.groups = groups;
  cb.clusters = clusters;
  cb.subdim = dim / groups;
  cb.iteration_tag = warm_start != nullptr ? warm_start->iteration_tag : 0;
  cb.centroids.resize(static_cast<size_t>(groups) * clusters * cb.subdim);
  for (int t = 0; t < groups; ++t) {
    detail::kmeans_group(vectors, t * cb.subdim, cb.subdim, clusters, Rng(mix_seed(seed, t)),
                         warm_start != nullptr ? warm_start->centroid(t, 0) : nullptr,
                         cb.centroid(t, 0), max_iters);
  }
  return cb;
}

// Nearest centroid per group, ties to the smaller cluster index.
inline Docid assign_docid(const Codebook& cb, const Vec& v) {
  if (static_cast<int>(v.size()) != cb.dim())
    raise("assign_docid: vector dim ", v.size(), " != codebook dim ", cb.dim());
  Docid id;
  id.codes.resize(static_cast<size_t>(cb.groups));
  for (int t = 0; t < cb.groups; ++t) {
    const double* sub = v.data() + static_cast<size_t>(t) * cb.subdim;
    int best = 0;
    double best_d = detail::sq_dist(sub, cb.centroid(t, 0), cb.subdim);
    for (int c = 1; c < cb.clusters; ++c) {
      double d = detail::sq_dist(sub, cb.centroid(t, c), cb.subdim);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    id.codes[static_cast<size_t>(t)] = best;
  }
  return id;
}

// doc_key <-> docid bijection for one iteration.
struct DocidTable {
  int groups = 0;
  int clusters = 0;
  int iteration_tag = 0;
  std::map<std::string, Docid> forward;
  std::map<std::vector<int>, std::string> reverse;

  const Docid& docid_of(const std::string& doc_key) const {
    auto it = forward.find(doc_key);
    if (it == forward.end()) raise("docid table: unknown doc_key ", doc_key);
    return it->second;
  }

  const std::string* key_of(const std::vector<int>& codes) const {
    auto it = reverse.find(codes);
    return it == reverse.end() ? nullptr : &it->second;
  }

  size_t size() const { return forward.size(); }

  bool operator==(const DocidTable&) const = default;
};

inline uint64_t table_hash(const DocidTable& t) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const auto& [key, id] : t.forward) {
    mix(key);
    mix(id.str());
  }
  return h;
}

inline std::vector<Vec> encode_corpus(const ModelParams& params, const Corpus& corpus) {
  std::vector<Vec> out;
  out.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) out.push_back(encode(params, d.tokens));
  return out;
}

// Raw PQ assignment, then collision resolution: colliding documents are
// ordered by doc_key, the first keeps the raw code, and each later one gets
// the nearest unused substitute in a single group, trying the last group
// first so shared prefixes survive.
inline DocidTable build_docid_table_from_vectors(const Corpus& corpus,
                                                 const std::vector<Vec>& vectors,
                                                 const Codebook& cb) {
  if (vectors.size() != corpus.documents.size())
    raise("build_docid_table: vector count mismatch");

  std::map<std::vector<int>, std::vector<int>> by_code; // raw codes -> doc indices
  std::vector<Docid> raw(vectors.size());
  for (size_t i = 0; i < vectors.size(); ++i) {
    raw[i] = assign_docid(cb, vectors[i]);
    by_code[raw[i].codes].push_back(static_cast<int>(i));
  }

  std::set<std::vector<int>> used;
  for (const auto& [codes, docs] : by_code) {
    (void)docs;
    used.insert(codes);
  }

  DocidTable table;
  table.groups = cb.groups;
  table.clusters = cb.clusters;
  table.iteration_tag = cb.iteration_tag;

  for (auto& [codes, docs] : by_code) {
    std::sort(docs.begin(), docs.end(), [&](int a, int b) {
      return corpus.documents[static_cast<size_t>(a)].doc_key <
             corpus.documents[static_cast<size_t>(b)].doc_key;
    });
    for (size_t rank = 0; rank < docs.size(); ++rank) {
      const int di = docs[rank];
      const std::string& key = corpus.documents[static_cast<size_t>(di)].doc_key;
      if (rank == 0) {
        table.forward[key] = Docid{codes};
        table.reverse[codes] = key;
        continue;
      }
      bool resolved = false;
      for (int gi = cb.groups - 1; gi >= 0 && !resolved; --gi) {
        const double* sub = vectors[static_cast<size_t>(di)].data() +
                            static_cast<size_t>(gi) * cb.subdim;
        std::vector<std::pair<double, int>> order;
        order.reserve(static_cast<size_t>(cb.clusters));
        for (int c = 0; c < cb.clusters; ++c)
          order.emplace_back(detail::sq_dist(sub, cb.centroid(gi, c), cb.subdim), c);
        std::sort(order.begin(), order.end());
        for (const auto& [dist, c] : order) {
          (void)dist;
          std::vector<int> candidate = codes;
          candidate[static_cast<size_t>(gi)] = c;
          if (used.count(candidate)) continue;
          used.insert(candidate);
          table.forward[key] = Docid{candidate};
          table.reverse[candidate] = key;
          resolved = true;
          break;
        }
      }
      if (!resolved)
        raise("docid collision unresolvable for raw code ", Docid{codes}.str(), " (", docs.size(),
              " documents share it)");
    }
  }

  if (table.forward.size() != corpus.documents.size() ||
      table.reverse.size() != corpus.documents.size())
    raise("docid table is not a bijection");
  return table;
}

inline DocidTable build_docid_table(const Corpus& corpus, const ModelParams& params,
                                    const Codebook& cb) {
  return build_docid_table_from_vectors(corpus, encode_corpus(params, corpus), cb);
}

struct DocidChange {
  std::string doc_key;
  Docid before;
  Docid after;
};

struct RefreshResult {
  Codebook codebook;
  DocidTable table;
  std::vector<DocidChange> changes;
};

// Re-encode with the current model, retrain the codebook (warm-started by
// default), rebuild the table, bump the iteration tag.
inline RefreshResult update_docids(const Corpus& corpus, const ModelParams& params,
                                   const Codebook& prev_cb, const DocidTable& prev_table,
                                   uint64_t seed, bool warm_start = true) {
  std::vector<Vec> vectors = encode_corpus(params, corpus);
  RefreshResult out;
  out.codebook = train_codebook(vectors, prev_cb.groups, prev_cb.clusters, seed,
                                warm_start ? &prev_cb : nullptr);
  out.codebook.iteration_tag = prev_cb.iteration_tag + 1;
  out.table = build_docid_table_from_vectors(corpus, vectors, out.codebook);
  for (const auto& [key, id] : out.table.forward) {
    const Docid& before = prev_table.docid_of(key);
    if (!(before == id)) out.changes.push_back({key, before, id});
  }
  return out;
}

// ---- snapshot files ----

inline void save_codebook(const Codebook& cb, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["groups"] = cb.groups;
  j["clusters"] = cb.clusters;
  j["subdim"] = cb.subdim;
  j["iteration_tag"] = cb.iteration_tag;
  j["centroids"] = cb.centroids;
  write_file(path, j.dump() + "\n");
}

inline Codebook load_codebook(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_file(path));
  if (j.value("version", 0) != 1) raise("unsupported codebook version in ", path);
  Codebook cb;
  cb.groups = j["groups"].get<int>();
  cb.clusters = j["clusters"].get<int>();
  cb.subdim = j["subdim"].get<int>();
  cb.iteration_tag = j["iteration_tag"].get<int>();
  cb.centroids = j["centroids"].get<Vec>();
  if (cb.centroids.size() != static_cast<size_t>(cb.groups) * cb.clusters * cb.subdim)
    raise("codebook centroid count mismatch in ", path);
  return cb;
}

inline void save_docid_table(const DocidTable& t, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["groups"] = t.groups;
  j["clusters"] = t.clusters;
  j["iteration_tag"] = t.iteration_tag;
  nlohmann::json docs = nlohmann::json::object();
  for (const auto& [key, id] : t.forward) docs[key] = id.codes;
  j["docids"] = docs;
  write_file(path, j.dump() + "\n");
}

inline DocidTable load_docid_table(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_file(path));
  if (j.value("version", 0) != 1) raise("unsupported docid table version in ", path);
  DocidTable t;
  t.groups = j["groups"].get<int>();
  t.clusters = j["clusters"].get<int>();
  t.iteration_tag = j["iteration_tag"].get<int>();
  for (const auto& [key, codes] : j["docids"].items()) {
    Docid id{codes.get<std::vector<int>>()};
    if (static_cast<int>(id.codes.size()) != t.groups)
      raise("docid table entry ", key, " has wrong length");
    for (int c : id.codes)
      if (c < 0 || c >= t.clusters) raise("docid table entry ", key, " has out-of-range code");
    if (t.reverse.count(id.codes)) raise("docid table is not a bijection: duplicate code for ", key);
    t.forward[key] = id;
    t.reverse[id.codes] = key;
  }
  return t;
}

} // namespace bootret
