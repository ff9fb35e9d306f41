#include "sandwich/config.h"

#include <sstream>

#include "sandwich/errors.h"
#include "sandwich/meta.h"
#include "sandwich/store.h"

namespace sandwich {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> all_values(const RunConfig& c) {
  std::map<std::string, std::string> m;
  for (auto&& kv : c.lcvae.to_meta()) m.insert(kv);
  for (auto&& kv : c.gvae.to_meta()) m.insert(kv);
  for (auto&& kv : c.gan.to_meta()) m.insert(kv);
  for (auto&& kv : c.fln_seq.to_meta()) m.insert(kv);
  m["metrics.bar_steps"] = meta_value(c.metrics.bar_steps);
  m["metrics.qn_min_steps"] = meta_value(c.metrics.qn_min_steps);
  m["metrics.upc_exclude_empty"] = meta_value(c.metrics.upc_exclude_empty);
  m["fln.min_count"] = meta_value(c.min_count);
  m["seed"] = c.seed ? meta_value(*c.seed) : std::string("unset");
  return m;
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::key_docs() {
  static const std::map<std::string, std::string> docs = {
      {"seed", "master seed for every model and sampler (required by train and generate)"},
      {"fln.min_count", "a pair joins the dictionary when it occurs more than this many times (20)"},
      {"lcvae.latent_dim", "phrase latent size (32)"},
      {"lcvae.intermediate_dim", "phrase LSTM width (256)"},
      {"lcvae.eps_var", "variance of the sampling noise (0.01)"},
      {"lcvae.batch_size", "phrases per batch (32)"},
      {"lcvae.learning_rate", "Adam learning rate (0.001)"},
      {"lcvae.clip_norm", "gradient norm clip (5)"},
      {"lcvae.epochs", "training epochs (40)"},
      {"lcvae.threshold", "binarization threshold for decoded cells (0.5)"},
      {"gvae.latent_dim", "song latent size (256)"},
      {"gvae.intermediate_dim", "song LSTM width (256)"},
      {"gvae.eps_var", "variance of the sampling noise (0.1)"},
      {"gvae.batch_size", "songs per batch (32)"},
      {"gvae.learning_rate", "Adam learning rate (0.001)"},
      {"gvae.clip_norm", "gradient norm clip (5)"},
      {"gvae.epochs", "training epochs (40)"},
      {"gvae.recon", "song (BCE through the frozen phrase decoder) or latent (MSE on phrase latents)"},
      {"gan.gp_weight", "gradient penalty weight (1)"},
      {"gan.critic_steps", "critic updates per generator update (5)"},
      {"gan.learning_rate", "Adam learning rate for both players (0.0001)"},
      {"gan.beta1", "Adam beta1 (0.5)"},
      {"gan.beta2", "Adam beta2 (0.9)"},
      {"gan.batch_size", "songs per batch (8)"},
      {"gan.steps", "generator updates (1000)"},
      {"gan.conv_channels", "critic convolution channels (64)"},
      {"gan.train_local_decoder", "let the generator update the phrase decoder too (false)"},
      {"gan.train_shared_encoder", "let the critic update its copy of the phrase encoder (true)"},
      {"fln_seq.embed_dim", "label embedding size (16)"},
      {"fln_seq.hidden_dim", "LSTM width (64)"},
      {"fln_seq.latent_dim", "latent size (32)"},
      {"fln_seq.batch_size", "sequences per batch (32)"},
      {"fln_seq.learning_rate", "Adam learning rate (0.001)"},
      {"fln_seq.clip_norm", "gradient norm clip (5)"},
      {"fln_seq.epochs", "training epochs (200)"},
      {"metrics.bar_steps", "steps per bar (25)"},
      {"metrics.qn_min_steps", "shortest qualified note in steps (2)"},
      {"metrics.upc_exclude_empty", "average pitch classes over non-empty bars only (false)"},
  };
  return docs;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key_docs().count(key) == 0) throw UsageError("unknown config key '" + key + "'");
  try {
    if (key == "seed") {
      std::uint64_t s = 0;
      parse_value(key, value, s);
      seed = s;
      lcvae.seed = gvae.seed = gan.seed = fln_seq.seed = s;
      return;
    }
    if (key == "fln.min_count") {
      parse_value(key, value, min_count);
      if (min_count < 1) throw UsageError("fln.min_count must be >= 1");
      return;
    }
    if (key == "metrics.bar_steps") return parse_value(key, value, metrics.bar_steps);
    if (key == "metrics.qn_min_steps") return parse_value(key, value, metrics.qn_min_steps);
    if (key == "metrics.upc_exclude_empty") return parse_value(key, value, metrics.upc_exclude_empty);
    if (key.starts_with("lcvae.")) lcvae = [&] {
        auto m = lcvae.to_meta();
        m[key] = value;
        return LcvaeConfig::from_meta(m);
      }();
    else if (key.starts_with("gvae.")) gvae = [&] {
        auto m = gvae.to_meta();
        m[key] = value;
        return GvaeConfig::from_meta(m);
      }();
    else if (key.starts_with("gan.")) gan = [&] {
        auto m = gan.to_meta();
        m[key] = value;
        return GanConfig::from_meta(m);
      }();
    else if (key.starts_with("fln_seq.")) fln_seq = [&] {
        auto m = fln_seq.to_meta();
        m[key] = value;
        return FlnSeqConfig::from_meta(m);
      }();
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError("bad value for '" + key + "': " + e.what());
  }
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string RunConfig::to_text() const {
  const auto values = all_values(*this);
  std::string out;
  for (const auto& [key, doc] : key_docs()) {
    out += "# " + doc + "\n";
    out += key + " = " + values.at(key) + "\n";
  }
  return out;
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw UsageError("a seed is required (config 'seed = N' or --set seed=N)");
  return *seed;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string::npos)
      throw UsageError("config line " + std::to_string(number) + ": expected key = value");
    if (trim(line.substr(0, line.find('='))) == "seed" && trim(line.substr(line.find('=') + 1)) == "unset") continue;
    c.set_assignment(line);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

}  // namespace sandwich
