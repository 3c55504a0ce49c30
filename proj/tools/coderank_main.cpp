#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coderank/commands.hpp"
#include "coderank/error.hpp"

namespace {

using coderank::PipelineConfig;

// Flags shared by every subcommand; mirror the symbols used in the config
// file so either spelling works.
void add_common_options(CLI::App* app, PipelineConfig& config) {
  app->add_option("--corpus-dir", config.corpus_dir, "Corpus directory");
  app->add_option("--artifacts-dir", config.artifacts_dir, "Artifact directory");
  app->add_option("--eta", config.eta, "Auxiliary-stage conditional probability threshold");
  app->add_option("--theta", config.bm25.theta, "BM25 score threshold");
  app->add_option("--k1", config.bm25.k1, "BM25 k1");
  app->add_option("--b", config.bm25.b, "BM25 b");
  app->add_option("--lambda", config.lambda, "Co-occurrence binarization threshold");
  app->add_option("--tau", config.train.tau, "Contrastive temperature");
  app->add_option("--batch-size", config.train.batch_size, "Training batch size");
  app->add_option("--lr", config.train.learning_rate, "Initial learning rate");
  app->add_option("--epochs", config.train.epochs, "Training epochs");
  app->add_option("--warmup-ratio", config.train.warmup_ratio, "Warmup fraction of total steps");
  app->add_option("--optimizer", config.train.optimizer, "Optimizer: sgd or adam");
  app->add_flag("--conventional-tau", config.train.loss_flags.conventional_tau,
                "Put the temperature inside the exponents");
  app->add_flag("--per-positive", config.train.loss_flags.per_positive,
                "Average one loss term per positive");
  app->add_option("--hidden", config.train.hidden, "Embedding width");
  app->add_option("--layers", config.train.n_layers, "Graph attention layers");
  app->add_option("--heads", config.train.n_heads, "Attention heads");
  app->add_option("--policy", config.policy.kind, "Decision policy: checkpoint, threshold, top_k");
  app->add_option("--top-k", config.policy.k, "k for the top_k policy");
  app->add_option("--threshold", config.policy.threshold, "Score threshold policy value");
  app->add_option("--seed", config.seed, "Root random seed");
  app->add_flag("--fallback,!--no-fallback", config.fallback_full_vocab,
                "Full-vocabulary fallback for empty retrievals");
  app->add_flag("--aux,!--no-aux", config.use_aux, "Auxiliary retrieval stage");
  app->add_flag("--graphormer,!--no-graphormer", config.use_graphormer,
                "Graph attention over descriptor encodings");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage label retrieval with a contrastively trained re-ranker"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);

  PipelineConfig config;
  int n_docs = 2000;
  int n_labels = 200;
  std::string split = "test";
  std::vector<std::string> doc_ids;
  std::vector<int> ks = {5, 8, 15};

  coderank::SyntheticSpec spec;
  CLI::App* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic benchmark corpus");
  gen->add_option("--docs", n_docs, "Number of documents");
  gen->add_option("--labels", n_labels, "Number of labels");
  gen->add_option("--min-labels", spec.min_labels_per_doc, "Minimum gold labels per document");
  gen->add_option("--max-labels", spec.max_labels_per_doc, "Maximum gold labels per document");
  gen->add_option("--cue-repeats", spec.cue_repeats, "Cue token occurrences per gold label");
  gen->add_option("--background-tokens", spec.background_tokens, "Filler tokens per document");
  gen->add_option("--background-vocab", spec.background_vocab, "Filler vocabulary size");
  gen->add_option("--zipf", spec.zipf_exponent, "Label popularity power-law exponent");
  add_common_options(gen, config);

  CLI::App* build = app.add_subcommand("build-index", "Build retrieval indexes and label graph");
  add_common_options(build, config);

  CLI::App* retrieve = app.add_subcommand("retrieve", "Run both retrieval stages");
  retrieve->add_option("--split", split, "Document split: train, valid, test, all");
  retrieve->add_option("--doc-id", doc_ids, "Explicit document ids (overrides --split)");
  add_common_options(retrieve, config);

  CLI::App* train_cmd = app.add_subcommand("train", "Train the re-ranker");
  add_common_options(train_cmd, config);

  CLI::App* rerank = app.add_subcommand("rerank", "Rank candidates and write predictions");
  rerank->add_option("--split", split, "Document split: train, valid, test, all");
  add_common_options(rerank, config);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate predictions and write report.json");
  evaluate->add_option("--split", split, "Document split: train, valid, test, all");
  evaluate->add_option("--k", ks, "P@K cutoffs");
  add_common_options(evaluate, config);

  // Config file first, then flag overrides: parse once to capture --config,
  // load it, and parse again so explicit flags win.
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    if (!config_path.empty()) {
      config = coderank::load_config(config_path);
      app.clear();
      app.parse(argc, argv);
    }
    coderank::apply_env_overrides(config);
    coderank::validate_config(config);

    if (gen->parsed()) {
      coderank::cmd_gen_synthetic(config, n_docs, n_labels, spec, std::cout);
    } else if (build->parsed()) {
      coderank::cmd_build_index(config, std::cout);
    } else if (retrieve->parsed()) {
      coderank::cmd_retrieve(config, split, doc_ids, std::cout);
    } else if (train_cmd->parsed()) {
      coderank::cmd_train(config, std::cout);
    } else if (rerank->parsed()) {
      coderank::cmd_rerank(config, split, std::cout);
    } else if (evaluate->parsed()) {
      coderank::cmd_evaluate(config, split, ks, std::cout);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const coderank::Error& e) {
    std::cerr << "error [" << coderank::error_kind_name(e.kind()) << "]: " << e.what() << "\n";
    return coderank::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
