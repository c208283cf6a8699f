// Generates the bundled synthetic corpus plus train/test query sets.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "bootret/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate the toy corpus and query files"};
  std::string out_dir = "data";
  uint64_t seed = 7;
  int docs = 200;
  int train_queries = 100;
  int test_queries = 100;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--docs", docs, "number of documents");
  app.add_option("--train-queries", train_queries, "labeled training queries");
  app.add_option("--test-queries", test_queries, "labeled test queries");
  CLI11_PARSE(app, argc, argv);

  try {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    bootret::SynthSpec spec;
    spec.n_docs = docs;
    spec.seed = seed;
    bootret::SynthCorpus corpus = bootret::make_synth_corpus(spec);
    bootret::write_file(out_dir + "/toy_corpus.jsonl", corpus.to_jsonl());

    bootret::SynthQueries train =
        bootret::make_synth_queries(corpus, train_queries, "QT", bootret::mix_seed(seed, 1));
    bootret::write_file(out_dir + "/toy_queries_train.tsv", train.queries_tsv);
    bootret::write_file(out_dir + "/toy_qrels_train.tsv", train.qrels_tsv);

    bootret::SynthQueries test =
        bootret::make_synth_queries(corpus, test_queries, "QE", bootret::mix_seed(seed, 2));
    bootret::write_file(out_dir + "/toy_queries_test.tsv", test.queries_tsv);
    bootret::write_file(out_dir + "/toy_qrels_test.tsv", test.qrels_tsv);

    std::cout << "wrote " << docs << " documents, " << train_queries << "+" << test_queries
              << " queries to " << out_dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
