#include "coderank/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "coderank/error.hpp"
#include "json.hpp"

namespace coderank {

namespace {

nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["corpus_dir"] = c.corpus_dir;
  j["artifacts_dir"] = c.artifacts_dir;
  j["eta"] = c.eta;
  j["k1"] = c.bm25.k1;
  j["b"] = c.bm25.b;
  j["theta"] = c.bm25.theta;
  j["lambda"] = c.lambda;
  j["tau"] = c.train.tau;
  j["batch_size"] = c.train.batch_size;
  j["learning_rate"] = c.train.learning_rate;
  j["epochs"] = c.train.epochs;
  j["warmup_ratio"] = c.train.warmup_ratio;
  j["optimizer"] = c.train.optimizer;
  j["conventional_tau"] = c.train.loss_flags.conventional_tau;
  j["per_positive"] = c.train.loss_flags.per_positive;
  j["hidden"] = c.train.hidden;
  j["n_layers"] = c.train.n_layers;
  j["n_heads"] = c.train.n_heads;
  j["policy"] = {{"kind", c.policy.kind}, {"k", c.policy.k}, {"threshold", c.policy.threshold}};
  j["seed"] = c.seed;
  j["fallback_full_vocab"] = c.fallback_full_vocab;
  j["use_aux"] = c.use_aux;
  j["use_graphormer"] = c.use_graphormer;
  return j;
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return;  // missing fields keep their defaults
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::ConfigError, path + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorKind::ConfigError, path + ": not a JSON object");
  }

  PipelineConfig c;
  read_field(j, "corpus_dir", c.corpus_dir, path);
  read_field(j, "artifacts_dir", c.artifacts_dir, path);
  read_field(j, "eta", c.eta, path);
  read_field(j, "k1", c.bm25.k1, path);
  read_field(j, "b", c.bm25.b, path);
  read_field(j, "theta", c.bm25.theta, path);
  read_field(j, "lambda", c.lambda, path);
  read_field(j, "tau", c.train.tau, path);
  read_field(j, "batch_size", c.train.batch_size, path);
  read_field(j, "learning_rate", c.train.learning_rate, path);
  read_field(j, "epochs", c.train.epochs, path);
  read_field(j, "warmup_ratio", c.train.warmup_ratio, path);
  read_field(j, "optimizer", c.train.optimizer, path);
  read_field(j, "conventional_tau", c.train.loss_flags.conventional_tau, path);
  read_field(j, "per_positive", c.train.loss_flags.per_positive, path);
  read_field(j, "hidden", c.train.hidden, path);
  read_field(j, "n_layers", c.train.n_layers, path);
  read_field(j, "n_heads", c.train.n_heads, path);
  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    read_field(p, "kind", c.policy.kind, path);
    read_field(p, "k", c.policy.k, path);
    read_field(p, "threshold", c.policy.threshold, path);
  }
  read_field(j, "seed", c.seed, path);
  read_field(j, "fallback_full_vocab", c.fallback_full_vocab, path);
  read_field(j, "use_aux", c.use_aux, path);
  read_field(j, "use_graphormer", c.use_graphormer, path);
  validate_config(c);
  return c;
}

void save_config(const PipelineConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << config_to_json(config).dump(2) << "\n";
}

void validate_config(const PipelineConfig& config) {
  if (!(config.eta >= 0.0 && config.eta <= 1.0)) {
    throw Error(ErrorKind::ConfigError, "eta must lie in [0, 1]");
  }
  if (!(config.bm25.k1 > 0.0)) throw Error(ErrorKind::ConfigError, "k1 must be positive");
  if (!(config.bm25.b >= 0.0 && config.bm25.b <= 1.0)) {
    throw Error(ErrorKind::ConfigError, "b must lie in [0, 1]");
  }
  if (!(config.bm25.theta >= 0.0)) throw Error(ErrorKind::ConfigError, "theta cannot be negative");
  if (!(config.lambda > 0.0 && config.lambda <= 1.0)) {
    throw Error(ErrorKind::ConfigError, "lambda must lie in (0, 1]");
  }
  if (config.policy.kind != "checkpoint" && config.policy.kind != "threshold" &&
      config.policy.kind != "top_k") {
    throw Error(ErrorKind::ConfigError, "unknown decision policy: " + config.policy.kind);
  }
  if (config.corpus_dir.empty() || config.artifacts_dir.empty()) {
    throw Error(ErrorKind::ConfigError, "corpus and artifact directories must be set");
  }
}

void apply_env_overrides(PipelineConfig& config) {
  const char* dir = std::getenv(kArtifactsDirEnvVar);
  if (dir != nullptr && dir[0] != '\0') config.artifacts_dir = dir;
}

namespace {

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace

// Artifacts are tied to the corpus they were built from and the graph
// threshold, nothing else: query-time knobs (eta, theta, policy) may vary
// freely, and a checkpoint carries its own hyperparameters.
std::string retrieval_fingerprint(const PipelineConfig& config) {
  nlohmann::json j;
  j["corpus_dir"] = config.corpus_dir;
  j["lambda"] = config.lambda;
  return fnv1a_hex(j.dump());
}

}  // namespace coderank
