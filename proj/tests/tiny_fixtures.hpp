#pragma once

#include <set>
#include <vector>

#include "bootret/objectives.hpp"

namespace bootret::testing {

struct TinyFixture {
  ModelParams params;
  IndexingBatch ib;
  RetrievalBatch rb;
};

// Small random model plus matching batches with distinct docids.
inline TinyFixture make_tiny_fixture(uint64_t seed, int n = 2, int x = 2, int h = 4,
                                     int clusters = 3) {
  ModelConfig cfg;
  cfg.text_vocab = 9;
  cfg.embed_dim = 4;
  cfg.model_dim = 8;
  cfg.groups = 2;
  cfg.clusters = clusters;
  TinyFixture f;
  f.params = init_params(cfg, seed);
  Rng rng(mix_seed(seed, 1));
  auto rand_tokens = [&](int len) {
    std::vector<int> t;
    for (int i = 0; i < len; ++i) t.push_back(static_cast<int>(rng.index(9)));
    return t;
  };
  std::set<std::vector<int>> used;
  for (int i = 0; i < n; ++i) {
    f.ib.doc_tokens.push_back(rand_tokens(3 + static_cast<int>(rng.index(3))));
    if (h > 0) {
      std::vector<std::vector<int>> noisy;
      for (int j = 0; j < h; ++j) noisy.push_back(rand_tokens(3 + static_cast<int>(rng.index(3))));
      f.ib.noisy_tokens.push_back(std::move(noisy));
    }
    std::vector<int> codes;
    do {
      codes = {static_cast<int>(rng.index(static_cast<size_t>(clusters))),
               static_cast<int>(rng.index(static_cast<size_t>(clusters)))};
    } while (used.count(codes) && used.size() < static_cast<size_t>(clusters) * clusters);
    used.insert(codes);
    f.ib.docids.push_back(Docid{codes});

    std::vector<std::vector<int>> qs;
    for (int q = 0; q < x; ++q) qs.push_back(rand_tokens(2 + static_cast<int>(rng.index(2))));
    f.rb.query_tokens.push_back(std::move(qs));
    f.rb.docids.push_back(Docid{codes});
  }
  return f;
}

} // namespace bootret::testing
