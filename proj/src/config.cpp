// SPDX-License-Identifier: Apache-2.0
#include "msat/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "msat/errors.hpp"

namespace msat {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ContractError("config: bad value '" + value + "' for " + key);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size()) {
    throw ContractError("config: bad value '" + value + "' for " + key);
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ContractError("config: bad boolean '" + value + "' for " + key);
}

}  // namespace

RunConfig RunConfig::full_preset() {
  RunConfig c;
  c.width = 768;
  c.channel_dim = 768;
  c.heads = 8;
  c.encoder_layers = 6;
  c.decoder_layers = 6;
  c.memory_slots = 3;
  c.concepts = 768;
  c.lr = 5e-5;
  c.batch_size = 32;
  c.epochs = 60;
  c.weight_decay = 0.0;
  c.cosine_lr = false;
  c.beam = 3;
  c.lambda_ce = 1.0;
  c.lambda_mlc = 5.0;
  return c;
}

RunConfig RunConfig::desk_preset() { return RunConfig{}; }

RunConfig RunConfig::preset(const std::string& name) {
  if (name == "full") return full_preset();
  if (name == "desk") return desk_preset();
  throw ContractError("config: unknown preset '" + name + "' (expected full or desk)");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  using S = std::size_t;
  if (key == "width") width = parse_number<S>(key, value);
  else if (key == "channel_dim") channel_dim = parse_number<S>(key, value);
  else if (key == "heads") heads = parse_number<S>(key, value);
  else if (key == "encoder_layers") encoder_layers = parse_number<S>(key, value);
  else if (key == "decoder_layers") decoder_layers = parse_number<S>(key, value);
  else if (key == "memory_slots") memory_slots = parse_number<S>(key, value);
  else if (key == "concepts") concepts = parse_number<S>(key, value);
  else if (key == "tap_layer") tap_layer = parse_number<S>(key, value);
  else if (key == "attention") attention = parse_attention_mode(value);
  else if (key == "use_concepts") use_concepts = parse_bool(key, value);
  else if (key == "lr") lr = parse_double(key, value);
  else if (key == "batch_size") batch_size = parse_number<S>(key, value);
  else if (key == "epochs") epochs = parse_number<S>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "lambda_ce") lambda_ce = parse_double(key, value);
  else if (key == "lambda_mlc") lambda_mlc = parse_double(key, value);
  else if (key == "clip_norm") clip_norm = parse_double(key, value);
  else if (key == "weight_decay") weight_decay = parse_double(key, value);
  else if (key == "cosine_lr") cosine_lr = parse_bool(key, value);
  else if (key == "min_freq") min_freq = parse_number<S>(key, value);
  else if (key == "beam") beam = parse_number<S>(key, value);
  else if (key == "max_len") max_len = parse_number<S>(key, value);
  else if (key == "features") features = value;
  else if (key == "reports") reports = value;
  else if (key == "vocab") vocab = value;
  else if (key == "concept_vocab") concept_vocab = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "log") log = value;
  else throw ContractError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
  MsaDims::uniform(width, channel_dim, heads, memory_slots).validate();
  if (encoder_layers == 0) throw ContractError("config: encoder_layers must be at least 1");
  if (decoder_layers == 0) throw ContractError("config: decoder_layers must be at least 1");
  if (use_concepts && concepts == 0) throw ContractError("config: concepts must be positive");
  if (effective_tap() < 1 || effective_tap() > encoder_layers) {
    throw ContractError("config: tap_layer " + std::to_string(tap_layer) + " outside [1, encoder_layers]");
  }
  if (!(lr > 0.0)) throw ContractError("config: lr must be positive");
  if (weight_decay < 0.0 || lr * weight_decay >= 1.0) throw ContractError("config: weight_decay out of range");
  if (batch_size == 0) throw ContractError("config: batch_size must be positive");
  if (lambda_ce < 0.0 || lambda_mlc < 0.0) throw ContractError("config: loss weights must be nonnegative");
  if (beam == 0 || max_len == 0) throw ContractError("config: beam and max_len must be positive");
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  os.precision(17);
  os << "width = " << width << "\nchannel_dim = " << channel_dim << "\nheads = " << heads
     << "\nencoder_layers = " << encoder_layers << "\ndecoder_layers = " << decoder_layers
     << "\nmemory_slots = " << memory_slots << "\nconcepts = " << concepts << "\ntap_layer = " << tap_layer
     << "\nattention = " << to_string(attention) << "\nuse_concepts = " << (use_concepts ? "true" : "false")
     << "\nlr = " << lr << "\nbatch_size = " << batch_size << "\nepochs = " << epochs << "\nseed = " << seed
     << "\nlambda_ce = " << lambda_ce << "\nlambda_mlc = " << lambda_mlc << "\nclip_norm = " << clip_norm
     << "\nweight_decay = " << weight_decay << "\ncosine_lr = " << (cosine_lr ? "true" : "false")
     << "\nmin_freq = " << min_freq << "\nbeam = " << beam << "\nmax_len = " << max_len << '\n';
  for (const auto& [k, v] : {std::pair{"features", &features}, {"reports", &reports}, {"vocab", &vocab},
                             {"concept_vocab", &concept_vocab}, {"checkpoint", &checkpoint}, {"log", &log}}) {
    if (!v->empty()) os << k << " = " << *v << '\n';
  }
  return os.str();
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ContractError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_seed_env(RunConfig& config) {
  if (const char* s = std::getenv("MSA_SEED"); s != nullptr && *s != '\0') config.set("seed", s);
}

}  // namespace msat
