#pragma once

// Single-file binary checkpoint, little-endian throughout:
//
//   "PLTF1"  u32 version
//   str kind, str training config, str model config, str vocab path,
//   str merges path, u64 step, str rng state
//   u64 n, then n x (str name, u32 rank, rank x u64 dim, f32 values)
//   u64 adam t, u64 n, then n x (f32 m values, f32 v values)
//
// where str is a u64 byte count followed by the bytes. Writing is canonical,
// so save -> load -> save reproduces the file byte for byte.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "plotforge/adam.hpp"
#include "plotforge/tensor.hpp"

namespace plotforge::train {

inline constexpr char kCheckpointMagic[] = "PLTF1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
  friend bool operator==(const StoredTensor&, const StoredTensor&) = default;
};

struct Checkpoint {
  std::string kind;             // outline | story | tagger
  std::string training_config;  // key=value text
  std::string model_config;     // key=value text
  std::string vocab_path;
  std::string merges_path;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<StoredTensor> params;
  std::uint64_t adam_t = 0;
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
// Throws LoadError on a bad magic, an unsupported version or a short file.
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::vector<StoredTensor> store_parameters(const ad::ParameterList<float>& params);
// Copies stored values into the live parameters, matching by name and shape.
// Throws LoadError on any mismatch.
void restore_parameters(const std::vector<StoredTensor>& stored, const ad::ParameterList<float>& params);
void store_adam(const ad::AdamState<float>& state, Checkpoint& ckpt);
void restore_adam(const Checkpoint& ckpt, ad::AdamState<float>& state);

}  // namespace plotforge::train
