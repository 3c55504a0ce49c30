#include "coderank/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "coderank/bm25.hpp"
#include "coderank/error.hpp"
#include "coderank/label_graph.hpp"
#include "coderank/rng.hpp"
#include "json.hpp"

namespace coderank {

namespace {

Corpus load_configured_corpus(const PipelineConfig& config) {
  return load_corpus(config.documents_path(), config.labels_path(), config.splits_path());
}

std::vector<const Document*> select_documents(const Corpus& corpus, const std::string& split,
                                              const std::vector<std::string>& doc_ids) {
  if (!doc_ids.empty()) {
    std::vector<const Document*> docs;
    docs.reserve(doc_ids.size());
    for (const auto& id : doc_ids) docs.push_back(&corpus.document(id));
    return docs;
  }
  if (split == "train") return corpus.train_documents();
  if (split == "valid") return corpus.valid_documents();
  if (split == "test") return corpus.test_documents();
  if (split == "all") {
    std::vector<const Document*> docs;
    docs.reserve(corpus.documents.size());
    for (const auto& doc : corpus.documents) docs.push_back(&doc);
    return docs;
  }
  throw Error(ErrorKind::ConfigError, "unknown split: " + split);
}

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp_path = path + ".tmp";
  {
    std::ofstream out(tmp_path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp_path);
    out << content;
    if (!out) throw Error(ErrorKind::IoError, "failed while writing " + tmp_path);
  }
  if (std::rename(tmp_path.c_str(), path.c_str()) != 0) {
    throw Error(ErrorKind::IoError, "cannot rename " + tmp_path + " to " + path);
  }
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create directory " + path + ": " + ec.message());
}

std::set<LabelId> full_vocabulary(const Corpus& corpus) {
  std::set<LabelId> all;
  for (const auto& label : corpus.labels) all.insert(label.id);
  return all;
}

// Both retrieval stages for one document, honoring the ablation and fallback
// switches. The auxiliary stage admits the whole vocabulary when disabled;
// either stage falls back to the whole vocabulary when it comes back empty
// and the fallback is on.
struct StagePair {
  CandidateSet aux;
  CandidateSet bm25;
};

StagePair retrieve_both_stages(const Document& doc, const Corpus& corpus,
                               const CooccurrenceIndex& aux_index, const Bm25Index& bm25_index,
                               const PipelineConfig& config) {
  StagePair pair;
  if (config.use_aux) {
    pair.aux = retrieve_candidates_aux(doc, aux_index, config.eta);
    if (pair.aux.labels.empty() && config.fallback_full_vocab) {
      pair.aux.labels = full_vocabulary(corpus);
      pair.aux.fallback = true;
    }
  } else {
    pair.aux.doc_id = doc.id;
    pair.aux.labels = full_vocabulary(corpus);
    pair.aux.stage = Stage::auxiliary;
  }
  pair.bm25 = filter_bm25(doc, pair.aux, bm25_index, config.bm25);
  if (pair.bm25.labels.empty() && config.fallback_full_vocab) {
    pair.bm25.labels = full_vocabulary(corpus);
    pair.bm25.fallback = true;
  }
  return pair;
}

nlohmann::json candidate_stage_json(const CandidateSet& cands) {
  nlohmann::json j;
  j["labels"] = std::vector<LabelId>(cands.labels.begin(), cands.labels.end());
  j["size"] = cands.labels.size();
  j["fallback"] = cands.fallback;
  return j;
}

DecisionPolicy resolve_policy(const PipelineConfig& config, const Checkpoint& ckpt) {
  if (config.policy.kind == "checkpoint") return ckpt.policy;
  return config.policy;
}

std::map<LabelId, std::int64_t> training_label_frequencies(const Corpus& corpus) {
  std::map<LabelId, std::int64_t> freq;
  for (const auto& label : corpus.labels) freq.emplace(label.id, 0);
  for (const Document* doc : corpus.train_documents()) {
    for (const auto& label : doc->gold_labels) freq.at(label) += 1;
  }
  return freq;
}

}  // namespace

void cmd_gen_synthetic(const PipelineConfig& config, int n_docs, int n_labels,
                       const SyntheticSpec& spec, std::ostream& log) {
  const Corpus corpus =
      generate_synthetic_corpus(derive_seed(config.seed, "synthetic"), n_docs, n_labels, spec);
  ensure_directory(config.corpus_dir);
  save_corpus(corpus, config.documents_path(), config.labels_path(), config.splits_path());
  log << "wrote " << corpus.documents.size() << " documents, " << corpus.labels.size()
      << " labels to " << config.corpus_dir << "\n";
}

void cmd_build_index(const PipelineConfig& config, std::ostream& log) {
  const Corpus corpus = load_configured_corpus(config);
  const std::vector<const Document*> train_docs = corpus.train_documents();

  const CooccurrenceIndex aux_index = build_aux_index(train_docs);
  const Bm25Index bm25_index = build_bm25_index(corpus.labels);
  const LabelGraph graph = build_label_graph(train_docs, corpus.labels, config.lambda);

  ensure_directory(config.artifacts_dir);
  const std::string fingerprint = retrieval_fingerprint(config);
  save_aux_index(aux_index, config.aux_index_path(), fingerprint);
  save_bm25_index(bm25_index, config.bm25_index_path(), fingerprint);
  save_label_graph(graph, config.label_graph_path(), fingerprint);
  log << "indexed " << train_docs.size() << " training documents over " << corpus.labels.size()
      << " labels\n";
}

RetrieveOutcome cmd_retrieve(const PipelineConfig& config, const std::string& split,
                             const std::vector<std::string>& doc_ids, std::ostream& log) {
  const Corpus corpus = load_configured_corpus(config);
  const std::vector<const Document*> docs = select_documents(corpus, split, doc_ids);
  const std::string fingerprint = retrieval_fingerprint(config);
  const CooccurrenceIndex aux_index = load_aux_index(config.aux_index_path(), fingerprint);
  const Bm25Index bm25_index = load_bm25_index(config.bm25_index_path(), fingerprint);

  RetrieveOutcome outcome;
  std::vector<CandidateSet> aux_sets;
  std::vector<CandidateSet> bm25_sets;
  aux_sets.reserve(docs.size());
  bm25_sets.reserve(docs.size());
  std::string lines;
  for (const Document* doc : docs) {
    StagePair pair = retrieve_both_stages(*doc, corpus, aux_index, bm25_index, config);
    if (pair.aux.fallback || pair.bm25.fallback) ++outcome.fallbacks;
    nlohmann::json j;
    j["id"] = doc->id;
    j["auxiliary"] = candidate_stage_json(pair.aux);
    j["bm25"] = candidate_stage_json(pair.bm25);
    lines += j.dump();
    lines += "\n";
    aux_sets.push_back(std::move(pair.aux));
    bm25_sets.push_back(std::move(pair.bm25));
  }
  ensure_directory(config.artifacts_dir);
  atomic_write_text(config.candidates_path(), lines);

  outcome.aux = coverage_report(aux_sets, docs);
  outcome.bm25 = coverage_report(bm25_sets, docs);
  log << "retrieved candidates for " << docs.size() << " documents: auxiliary recall "
      << outcome.aux.recall << " (mean " << outcome.aux.mean_candidates << "), bm25 recall "
      << outcome.bm25.recall << " (mean " << outcome.bm25.mean_candidates << "), fallbacks "
      << outcome.fallbacks << "\n";
  return outcome;
}

TrainResult cmd_train(const PipelineConfig& config, std::ostream& log) {
  const Corpus corpus = load_configured_corpus(config);
  const LabelGraph graph =
      load_label_graph(config.label_graph_path(), retrieval_fingerprint(config));

  TrainConfig train_config = config.train;
  train_config.seed = derive_seed(config.seed, "train");
  train_config.use_graphormer = config.use_graphormer;

  TrainResult result = train(corpus, graph, train_config, [&log](const EpochStats& stats) {
    log << "epoch " << stats.epoch << ": loss " << stats.mean_loss << ", valid micro-F1 "
        << stats.valid_micro_f1 << ", threshold " << stats.calibrated_threshold;
    if (stats.skipped_batches > 0) log << ", skipped batches " << stats.skipped_batches;
    log << "\n";
  });

  ensure_directory(config.artifacts_dir);
  save_checkpoint(result.checkpoint, config.checkpoint_path(), retrieval_fingerprint(config));

  nlohmann::json log_json;
  log_json["epochs"] = nlohmann::json::array();
  for (const auto& stats : result.epochs) {
    log_json["epochs"].push_back({{"epoch", stats.epoch},
                                  {"loss", stats.mean_loss},
                                  {"valid_micro_f1", stats.valid_micro_f1},
                                  {"threshold", stats.calibrated_threshold},
                                  {"skipped_batches", stats.skipped_batches}});
  }
  log_json["best_epoch"] = result.checkpoint.best_epoch;
  log_json["best_valid_micro_f1"] = result.checkpoint.best_valid_micro_f1;
  atomic_write_text(config.training_log_path(), log_json.dump(2) + "\n");

  log << "best epoch " << result.checkpoint.best_epoch << " with valid micro-F1 "
      << result.checkpoint.best_valid_micro_f1 << "\n";
  return result;
}

namespace {

struct RankedSplit {
  std::vector<const Document*> docs;
  std::vector<CandidateSet> final_candidates;
  std::vector<RankedList> ranked;
  DecisionPolicy policy;
};

RankedSplit rank_split(const PipelineConfig& config, const Corpus& corpus,
                       const std::string& split, const std::vector<std::string>& doc_ids) {
  const std::string fingerprint = retrieval_fingerprint(config);
  const CooccurrenceIndex aux_index = load_aux_index(config.aux_index_path(), fingerprint);
  const Bm25Index bm25_index = load_bm25_index(config.bm25_index_path(), fingerprint);
  const LabelGraph graph = load_label_graph(config.label_graph_path(), fingerprint);
  const Checkpoint ckpt = load_checkpoint(config.checkpoint_path(), retrieval_fingerprint(config));
  const Ranker ranker = make_ranker(ckpt, graph, corpus.labels, config.use_graphormer);

  RankedSplit out;
  out.docs = select_documents(corpus, split, doc_ids);
  out.policy = resolve_policy(config, ckpt);
  out.final_candidates.reserve(out.docs.size());
  out.ranked.reserve(out.docs.size());
  for (const Document* doc : out.docs) {
    StagePair pair = retrieve_both_stages(*doc, corpus, aux_index, bm25_index, config);
    out.ranked.push_back(rank_candidates(*doc, pair.bm25, ranker));
    out.final_candidates.push_back(std::move(pair.bm25));
  }
  return out;
}

}  // namespace

void cmd_rerank(const PipelineConfig& config, const std::string& split, std::ostream& log) {
  const Corpus corpus = load_configured_corpus(config);
  RankedSplit ranked = rank_split(config, corpus, split, {});

  std::string lines;
  for (std::size_t d = 0; d < ranked.docs.size(); ++d) {
    nlohmann::json j;
    j["id"] = ranked.docs[d]->id;
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& entry : ranked.ranked[d].entries) {
      pairs.push_back({entry.label, entry.score});
    }
    j["ranked"] = std::move(pairs);
    const std::set<LabelId> predicted = predict_set(ranked.ranked[d], ranked.policy);
    j["predicted"] = std::vector<LabelId>(predicted.begin(), predicted.end());
    lines += j.dump();
    lines += "\n";
  }
  ensure_directory(config.artifacts_dir);
  atomic_write_text(config.predictions_path(), lines);
  log << "ranked " << ranked.docs.size() << " documents (" << split << " split)\n";
}

EvalOutcome cmd_evaluate(const PipelineConfig& config, const std::string& split,
                         const std::vector<int>& ks, std::ostream& log) {
  const Corpus corpus = load_configured_corpus(config);
  RankedSplit ranked = rank_split(config, corpus, split, {});

  std::vector<std::set<LabelId>> gold;
  std::vector<std::set<LabelId>> pred;
  std::vector<std::map<LabelId, double>> scores;
  gold.reserve(ranked.docs.size());
  pred.reserve(ranked.docs.size());
  scores.reserve(ranked.docs.size());
  for (std::size_t d = 0; d < ranked.docs.size(); ++d) {
    gold.push_back(ranked.docs[d]->gold_labels);
    pred.push_back(predict_set(ranked.ranked[d], ranked.policy));
    std::map<LabelId, double> doc_scores;
    for (const auto& entry : ranked.ranked[d].entries) doc_scores.emplace(entry.label, entry.score);
    scores.push_back(std::move(doc_scores));
  }

  std::vector<LabelId> vocabulary;
  vocabulary.reserve(corpus.labels.size());
  for (const auto& label : corpus.labels) vocabulary.push_back(label.id);

  EvalOutcome outcome;
  const F1Result f1 = f1_scores(gold, pred, vocabulary);
  const AucResult auc = auc_scores(gold, scores, vocabulary);
  outcome.report.macro_f1 = f1.macro_f1;
  outcome.report.micro_f1 = f1.micro_f1;
  outcome.report.macro_auc = auc.macro_auc;
  outcome.report.micro_auc = auc.micro_auc;
  outcome.report.per_label = f1.per_label;
  for (int k : ks) {
    const PrecisionAtK p = precision_at_k(gold, ranked.ranked, k);
    outcome.report.p_at_k[k] = p.value;
    outcome.report.short_ranked_lists = std::max(outcome.report.short_ranked_lists, p.short_lists);
  }
  outcome.coverage = coverage_report(ranked.final_candidates, ranked.docs);

  // Frequency buckets over training-split label counts.
  const std::map<LabelId, std::int64_t> freq = training_label_frequencies(corpus);
  outcome.buckets.resize(4);
  std::int64_t bucket_tp[4] = {0, 0, 0, 0};
  std::int64_t bucket_fp[4] = {0, 0, 0, 0};
  std::int64_t bucket_fn[4] = {0, 0, 0, 0};
  double bucket_f1_sum[4] = {0.0, 0.0, 0.0, 0.0};
  for (int bucket = 0; bucket < 4; ++bucket) {
    outcome.buckets[static_cast<std::size_t>(bucket)].range = kFrequencyBucketNames[bucket];
  }
  for (const auto& [label, counts] : f1.per_label) {
    const int bucket = frequency_bucket(freq.at(label));
    auto& report = outcome.buckets[static_cast<std::size_t>(bucket)];
    report.labels += 1;
    bucket_tp[bucket] += counts.tp;
    bucket_fp[bucket] += counts.fp;
    bucket_fn[bucket] += counts.fn;
    const std::int64_t denom = 2 * counts.tp + counts.fp + counts.fn;
    bucket_f1_sum[bucket] +=
        denom == 0 ? 0.0 : 2.0 * static_cast<double>(counts.tp) / static_cast<double>(denom);
  }
  for (int bucket = 0; bucket < 4; ++bucket) {
    auto& report = outcome.buckets[static_cast<std::size_t>(bucket)];
    const std::int64_t denom = 2 * bucket_tp[bucket] + bucket_fp[bucket] + bucket_fn[bucket];
    report.micro_f1 =
        denom == 0 ? 0.0 : 2.0 * static_cast<double>(bucket_tp[bucket]) / static_cast<double>(denom);
    report.macro_f1 =
        report.labels == 0 ? 0.0 : bucket_f1_sum[bucket] / static_cast<double>(report.labels);
  }

  nlohmann::json j;
  j["split"] = split;
  j["documents"] = ranked.docs.size();
  j["macro_f1"] = outcome.report.macro_f1;
  j["micro_f1"] = outcome.report.micro_f1;
  j["macro_auc"] = outcome.report.macro_auc;
  j["micro_auc"] = outcome.report.micro_auc;
  nlohmann::json p_at_k;
  for (const auto& [k, value] : outcome.report.p_at_k) p_at_k[std::to_string(k)] = value;
  j["p_at_k"] = std::move(p_at_k);
  j["short_ranked_lists"] = outcome.report.short_ranked_lists;
  j["policy"] = {{"kind", ranked.policy.kind},
                 {"k", ranked.policy.k},
                 {"threshold", ranked.policy.threshold}};
  j["candidates"] = {{"recall", outcome.coverage.recall},
                     {"mean_size", outcome.coverage.mean_candidates}};
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& report : outcome.buckets) {
    buckets.push_back({{"range", report.range},
                       {"labels", report.labels},
                       {"micro_f1", report.micro_f1},
                       {"macro_f1", report.macro_f1}});
  }
  j["buckets"] = std::move(buckets);
  nlohmann::json per_label;
  for (const auto& [label, counts] : outcome.report.per_label) {
    const std::int64_t denom = 2 * counts.tp + counts.fp + counts.fn;
    per_label[label] = {{"tp", counts.tp},
                        {"fp", counts.fp},
                        {"fn", counts.fn},
                        {"f1", denom == 0 ? 0.0
                                          : 2.0 * static_cast<double>(counts.tp) /
                                                static_cast<double>(denom)},
                        {"train_frequency", freq.at(label)}};
  }
  j["per_label"] = std::move(per_label);

  ensure_directory(config.artifacts_dir);
  atomic_write_text(config.report_path(), j.dump(2) + "\n");
  log << "evaluated " << ranked.docs.size() << " documents: micro-F1 " << outcome.report.micro_f1
      << ", macro-F1 " << outcome.report.macro_f1 << ", micro-AUC " << outcome.report.micro_auc
      << "\n";
  return outcome;
}

}  // namespace coderank
