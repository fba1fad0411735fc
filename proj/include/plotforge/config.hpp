#pragma once

// Flat key=value configuration text. Blank lines and lines starting with '#'
// are ignored; keys match the struct field names.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "plotforge/transformer.hpp"

namespace plotforge::train {

using KeyValues = std::map<std::string, std::string>;

// Throws ValidationError with the line number on a line without '='.
KeyValues parse_key_values(std::string_view text);
std::string format_key_values(const KeyValues& kv);

struct TrainingConfig {
  double lr = 0.0005;
  double dropout = 0.3;
  double lambda1 = 0.1;
  double lambda2 = 0.3;
  std::size_t batch_size = 16;
  std::size_t max_steps = 20000;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 500;
  std::string stage = "story";  // outline | story
  std::string outline_mode = "abstract";
  double tau = 0.7;
  double max_grad_norm = 0.0;
  // tokens: 1/M over supervised mention tokens; mentions: 1/(pq) over all mention tokens.
  std::string coref_normalizer = "tokens";
  std::size_t checkpoint_interval = 0;

  // Throws ValidationError naming the offending field.
  void validate() const;
  // Unknown keys and unparsable values throw ValidationError.
  void set(const std::string& key, const std::string& value);
  KeyValues to_key_values() const;
  static TrainingConfig from_key_values(const KeyValues& kv);

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

KeyValues model_to_key_values(const lm::ModelConfig& m);
lm::ModelConfig model_from_key_values(const KeyValues& kv);
void set_model_field(lm::ModelConfig& m, const std::string& key, const std::string& value);

TrainingConfig load_training_config(const std::string& path);

// Strict numeric parsing shared by config and CLI code.
double parse_double(const std::string& key, const std::string& value);
std::uint64_t parse_uint(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
// Shortest text that reads back to the same double.
std::string format_double(double v);

}  // namespace plotforge::train
