#pragma once

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

#include "bootret/common.hpp"
#include "bootret/model.hpp"
#include "bootret/pq.hpp"

namespace bootret {

struct RankedResult {
  std::string doc_key;
  double log_likelihood = 0.0; // log P(docid | input), same quantity score_docid reports
  std::vector<int> codes;
};

// Descending scores, ties broken toward the lexicographically smaller code.
using RankedList = std::vector<RankedResult>;

// Trie over the current docid set. Every root-to-leaf path has length g and
// is exactly one table entry.
class PrefixTrie {
public:
  struct Node {
    std::vector<std::pair<int, int>> children; // (code, node index), code ascending
    int leaf = -1;                             // index into doc_keys_ at depth g
  };

  static PrefixTrie build(const DocidTable& table) {
    if (table.forward.empty()) raise("build_trie: empty docid table");
    PrefixTrie trie;
    trie.depth_ = table.groups;
    trie.nodes_.emplace_back();
    for (const auto& [key, id] : table.forward) {
      int cur = 0;
      for (int code : id.codes) {
        Node& n = trie.nodes_[static_cast<size_t>(cur)];
        auto it = std::lower_bound(n.children.begin(), n.children.end(),
                                   std::make_pair(code, -1));
        if (it != n.children.end() && it->first == code) {
          cur = it->second;
        } else {
          int next = static_cast<int>(trie.nodes_.size());
          trie.nodes_[static_cast<size_t>(cur)].children.insert(
              trie.nodes_[static_cast<size_t>(cur)].children.begin() +
                  (it - trie.nodes_[static_cast<size_t>(cur)].children.begin()),
              {code, next});
          trie.nodes_.emplace_back();
          cur = next;
        }
      }
      Node& leaf = trie.nodes_[static_cast<size_t>(cur)];
      if (leaf.leaf != -1) raise("build_trie: duplicate docid for ", key);
      leaf.leaf = static_cast<int>(trie.doc_keys_.size());
      trie.doc_keys_.push_back(key);
    }
    return trie;
  }

  const Node& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
  int root() const { return 0; }
  int depth() const { return depth_; }
  size_t node_count() const { return nodes_.size(); }
  size_t leaf_count() const { return doc_keys_.size(); }
  const std::string& doc_key(int leaf) const { return doc_keys_[static_cast<size_t>(leaf)]; }

  size_t memory_bytes() const {
    size_t bytes = nodes_.size() * sizeof(Node);
    for (const auto& n : nodes_) bytes += n.children.size() * sizeof(std::pair<int, int>);
    return bytes;
  }

private:
  std::vector<Node> nodes_;
  std::vector<std::string> doc_keys_;
  int depth_ = 0;
};

inline PrefixTrie build_trie(const DocidTable& table) { return PrefixTrie::build(table); }

struct BeamSearchOptions {
  int beam = 20;
  // Renormalize step probabilities over the trie-allowed children (the
  // default) or keep the full-vocabulary log-softmax with invalid children
  // merely masked out. The choice affects which hypotheses survive pruning;
  // reported scores are raw sequence log-likelihoods either way.
  bool renormalize = true;
};

// Beam search over g steps, masked to the trie at every step. Always returns
// valid docids. Results carry log P(id|input) and are sorted by it, ties to
// the smaller code sequence.
inline RankedList constrained_beam_search(const ModelParams& params,
                                          const std::vector<int>& query_tokens,
                                          const PrefixTrie& trie,
                                          const BeamSearchOptions& opts = {}) {
  if (query_tokens.empty()) raise("beam search: empty query");
  if (opts.beam < 1) raise("beam search: beam width must be >= 1");
  if (trie.depth() != params.cfg.groups)
    raise("beam search: trie depth ", trie.depth(), " != model groups ", params.cfg.groups);

  struct Hyp {
    int node;
    DecodeState st;
    double raw;   // cumulative log P
    double prune; // cumulative pruning score (= raw when not renormalizing)
    std::vector<int> codes;
  };

  std::vector<Hyp> beam;
  beam.push_back({trie.root(), begin_decode(params, query_tokens), 0.0, 0.0, {}});

  struct Cand {
    int parent;
    int code;
    int node;
    double raw;
    double prune;
  };

  for (int t = 0; t < trie.depth(); ++t) {
    std::vector<Cand> cands;
    for (size_t b = 0; b < beam.size(); ++b) {
      const Hyp& h = beam[b];
      const Vec logits = step_logits(params, h.st);
      const double lse_all = log_sum_exp(logits);
      const auto& children = trie.node(h.node).children;
      double lse_allowed = 0.0;
      if (opts.renormalize) {
        Vec allowed;
        allowed.reserve(children.size());
        for (const auto& [code, child] : children) {
          (void)child;
          allowed.push_back(logits[static_cast<size_t>(code)]);
        }
        lse_allowed = log_sum_exp(allowed);
      }
      for (const auto& [code, child] : children) {
        const double raw_step = logits[static_cast<size_t>(code)] - lse_all;
        const double prune_step =
            opts.renormalize ? logits[static_cast<size_t>(code)] - lse_allowed : raw_step;
        cands.push_back({static_cast<int>(b), code, child, h.raw + raw_step, h.prune + prune_step});
      }
    }

    const size_t keep = std::min<size_t>(static_cast<size_t>(opts.beam), cands.size());
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.prune != b.prune) return a.prune > b.prune;
      const auto& ca = beam[static_cast<size_t>(a.parent)].codes;
      const auto& cb = beam[static_cast<size_t>(b.parent)].codes;
      if (ca != cb) return ca < cb;
      return a.code < b.code;
    });

    std::vector<Hyp> next;
    next.reserve(keep);
    for (size_t i = 0; i < keep; ++i) {
      const Cand& c = cands[i];
      const Hyp& parent = beam[static_cast<size_t>(c.parent)];
      Hyp h;
      h.node = c.node;
      h.raw = c.raw;
      h.prune = c.prune;
      h.codes = parent.codes;
      h.codes.push_back(c.code);
      if (t + 1 < trie.depth()) h.st = advance(params, parent.st, c.code);
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }

  std::sort(beam.begin(), beam.end(), [](const Hyp& a, const Hyp& b) {
    if (a.raw != b.raw) return a.raw > b.raw;
    return a.codes < b.codes;
  });

  RankedList out;
  out.reserve(beam.size());
  for (const Hyp& h : beam) {
    const int leaf = trie.node(h.node).leaf;
    if (leaf < 0) raise("beam search: non-leaf hypothesis at full depth");
    out.push_back({trie.doc_key(leaf), h.raw, h.codes});
  }
  return out;
}

constexpr size_t kExhaustiveRankGuard = 100000;

// Scores every docid in the table. Test oracle and small-corpus fallback.
inline RankedList exhaustive_rank(const ModelParams& params, const std::vector<int>& query_tokens,
                                  const DocidTable& table) {
  if (table.size() > kExhaustiveRankGuard)
    raise("exhaustive_rank: table has ", table.size(), " docids, guard is ", kExhaustiveRankGuard);
  if (query_tokens.empty()) raise("exhaustive_rank: empty query");
  const DecodeState start = begin_decode(params, query_tokens);
  RankedList out;
  out.reserve(table.size());
  for (const auto& [codes, key] : table.reverse)
    out.push_back({key, score_docid_from(params, start, codes).log_likelihood, codes});
  std::sort(out.begin(), out.end(), [](const RankedResult& a, const RankedResult& b) {
    if (a.log_likelihood != b.log_likelihood) return a.log_likelihood > b.log_likelihood;
    return a.codes < b.codes;
  });
  return out;
}

struct LatencyReport {
  double mean_ms = 0.0;
  size_t query_count = 0;
  size_t trie_nodes = 0;
  size_t trie_bytes = 0;
};

// Wall-clock mean per query after 3 warm-up decodes.
inline LatencyReport measure_latency(const ModelParams& params,
                                     const std::vector<std::vector<int>>& queries,
                                     const PrefixTrie& trie, const BeamSearchOptions& opts = {}) {
  if (queries.empty()) raise("measure_latency: need at least one query");
  for (size_t i = 0; i < 3; ++i)
    constrained_beam_search(params, queries[i % queries.size()], trie, opts);
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& q : queries) constrained_beam_search(params, q, trie, opts);
  const auto t1 = std::chrono::steady_clock::now();
  LatencyReport r;
  r.query_count = queries.size();
  r.mean_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
              static_cast<double>(queries.size());
  r.trie_nodes = trie.node_count();
  r.trie_bytes = trie.memory_bytes();
  return r;
}

} // namespace bootret
