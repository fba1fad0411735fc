#include "plotforge/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "plotforge/errors.hpp"

namespace plotforge::train {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                            std::string(line) + "'");
    }
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ValidationError(key + ": '" + value + "' is not a number");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ValidationError(key + ": '" + value + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError(key + ": '" + value + "' is not a boolean");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void TrainingConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("training config: " + m); };
  if (!(lr >= 0)) fail("lr must be >= 0");
  if (!(dropout >= 0 && dropout < 1)) fail("dropout must be in [0, 1)");
  if (!(lambda1 >= 0)) fail("lambda1 must be >= 0");
  if (!(lambda2 >= 0)) fail("lambda2 must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (stage != "outline" && stage != "story") fail("stage must be outline or story");
  if (outline_mode != "keyword" && outline_mode != "abstract") fail("outline_mode must be keyword or abstract");
  if (!(tau >= 0 && tau <= 1)) fail("tau must be in [0, 1]");
  if (!(max_grad_norm >= 0)) fail("max_grad_norm must be >= 0");
  if (coref_normalizer != "tokens" && coref_normalizer != "mentions") fail("coref_normalizer must be tokens or mentions");
}

void TrainingConfig::set(const std::string& key, const std::string& value) {
  if (key == "lr") lr = parse_double(key, value);
  else if (key == "dropout") dropout = parse_double(key, value);
  else if (key == "lambda1") lambda1 = parse_double(key, value);
  else if (key == "lambda2") lambda2 = parse_double(key, value);
  else if (key == "batch_size") batch_size = parse_uint(key, value);
  else if (key == "max_steps") max_steps = parse_uint(key, value);
  else if (key == "seed") seed = parse_uint(key, value);
  else if (key == "eval_interval") eval_interval = parse_uint(key, value);
  else if (key == "stage") stage = value;
  else if (key == "outline_mode") outline_mode = value;
  else if (key == "tau") tau = parse_double(key, value);
  else if (key == "max_grad_norm") max_grad_norm = parse_double(key, value);
  else if (key == "coref_normalizer") coref_normalizer = value;
  else if (key == "checkpoint_interval") checkpoint_interval = parse_uint(key, value);
  else throw ValidationError("training config: unknown key '" + key + "'");
}

KeyValues TrainingConfig::to_key_values() const {
  return {{"lr", format_double(lr)},
          {"dropout", format_double(dropout)},
          {"lambda1", format_double(lambda1)},
          {"lambda2", format_double(lambda2)},
          {"batch_size", std::to_string(batch_size)},
          {"max_steps", std::to_string(max_steps)},
          {"seed", std::to_string(seed)},
          {"eval_interval", std::to_string(eval_interval)},
          {"stage", stage},
          {"outline_mode", outline_mode},
          {"tau", format_double(tau)},
          {"max_grad_norm", format_double(max_grad_norm)},
          {"coref_normalizer", coref_normalizer},
          {"checkpoint_interval", std::to_string(checkpoint_interval)}};
}

TrainingConfig TrainingConfig::from_key_values(const KeyValues& kv) {
  TrainingConfig c;
  for (const auto& [k, v] : kv) c.set(k, v);
  c.validate();
  return c;
}

void set_model_field(lm::ModelConfig& m, const std::string& key, const std::string& value) {
  if (key == "n_layers") m.n_layers = parse_uint(key, value);
  else if (key == "n_heads") m.n_heads = parse_uint(key, value);
  else if (key == "d_model") m.d_model = parse_uint(key, value);
  else if (key == "d_ff") m.d_ff = parse_uint(key, value);
  else if (key == "max_positions") m.max_positions = parse_uint(key, value);
  else if (key == "vocab_size") m.vocab_size = parse_uint(key, value);
  else if (key == "dropout") m.dropout = parse_double(key, value);
  else if (key == "pre_norm") m.pre_norm = parse_bool(key, value);
  else if (key == "tie_embeddings") m.tie_embeddings = parse_bool(key, value);
  else if (key == "init_std") m.init_std = parse_double(key, value);
  else throw ValidationError("model config: unknown key '" + key + "'");
}

KeyValues model_to_key_values(const lm::ModelConfig& m) {
  return {{"n_layers", std::to_string(m.n_layers)},
          {"n_heads", std::to_string(m.n_heads)},
          {"d_model", std::to_string(m.d_model)},
          {"d_ff", std::to_string(m.d_ff)},
          {"max_positions", std::to_string(m.max_positions)},
          {"vocab_size", std::to_string(m.vocab_size)},
          {"dropout", format_double(m.dropout)},
          {"pre_norm", m.pre_norm ? "true" : "false"},
          {"tie_embeddings", m.tie_embeddings ? "true" : "false"},
          {"init_std", format_double(m.init_std)}};
}

lm::ModelConfig model_from_key_values(const KeyValues& kv) {
  lm::ModelConfig m;
  for (const auto& [k, v] : kv) set_model_field(m, k, v);
  return m;
}

TrainingConfig load_training_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return TrainingConfig::from_key_values(parse_key_values(ss.str()));
}

}  // namespace plotforge::train
