#include "plotforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "plotforge/errors.hpp"

namespace plotforge::train {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void floats(const std::vector<float>& v) { raw(v.data(), v.size() * sizeof(float)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  void raw(void* p, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw LoadError(std::string("checkpoint truncated while reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    raw(&v, sizeof v, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    raw(&v, sizeof v, what);
    return v;
  }
  std::string str(const char* what) {
    const auto n = bounded(u64(what), what);
    std::string s(n, '\0');
    raw(s.data(), n, what);
    return s;
  }
  std::vector<float> floats(std::size_t n, const char* what) {
    std::vector<float> v(bounded(n, what));
    raw(v.data(), n * sizeof(float), what);
    return v;
  }

 private:
  // Rejects sizes a corrupt header could produce before allocating.
  static std::size_t bounded(std::uint64_t n, const char* what) {
    if (n > (std::uint64_t{1} << 34)) throw LoadError(std::string("checkpoint has an implausible size for ") + what);
    return static_cast<std::size_t>(n);
  }
  std::istream& in_;
};

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  Writer w(out);
  w.raw(kCheckpointMagic, 5);
  w.u32(kCheckpointVersion);
  w.str(c.kind);
  w.str(c.training_config);
  w.str(c.model_config);
  w.str(c.vocab_path);
  w.str(c.merges_path);
  w.u64(c.step);
  w.str(c.rng_state);
  w.u64(c.params.size());
  for (const auto& p : c.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u64(d);
    w.floats(p.values);
  }
  w.u64(c.adam_t);
  w.u64(c.adam_m.size());
  for (std::size_t i = 0; i < c.adam_m.size(); ++i) {
    w.floats(c.adam_m[i]);
    w.floats(c.adam_v[i]);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[5];
  r.raw(magic, 5, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 5) != 0) throw LoadError("not a plotforge checkpoint (bad magic bytes)");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.kind = r.str("kind");
  c.training_config = r.str("training config");
  c.model_config = r.str("model config");
  c.vocab_path = r.str("vocab path");
  c.merges_path = r.str("merges path");
  c.step = r.u64("step");
  c.rng_state = r.str("rng state");
  const auto n = r.u64("parameter count");
  for (std::uint64_t i = 0; i < n; ++i) {
    StoredTensor t;
    t.name = r.str("parameter name");
    const auto rank = r.u32("parameter rank");
    if (rank > 8) throw LoadError("checkpoint parameter '" + t.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.u64("parameter shape"));
    t.values = r.floats(ad::numel(t.shape), "parameter values");
    c.params.push_back(std::move(t));
  }
  c.adam_t = r.u64("optimizer step");
  const auto moments = r.u64("optimizer moment count");
  if (moments != 0 && moments != c.params.size()) throw LoadError("checkpoint optimizer state does not match its parameters");
  for (std::uint64_t i = 0; i < moments; ++i) {
    c.adam_m.push_back(r.floats(c.params[i].values.size(), "optimizer first moment"));
    c.adam_v.push_back(r.floats(c.params[i].values.size(), "optimizer second moment"));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw LoadError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  // Write to a sibling file first so an interrupted save leaves the old one intact.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write checkpoint " + tmp);
    write_checkpoint(out, ckpt);
    if (!out) throw LoadError("failed while writing checkpoint " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw LoadError("cannot move checkpoint into place at " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path);
  try {
    return read_checkpoint(in);
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

std::vector<StoredTensor> store_parameters(const ad::ParameterList<float>& params) {
  std::vector<StoredTensor> out;
  for (const auto& p : params) {
    const auto d = p.tensor.data();
    out.push_back({p.name, p.tensor.shape(), std::vector<float>(d.begin(), d.end())});
  }
  return out;
}

void restore_parameters(const std::vector<StoredTensor>& stored, const ad::ParameterList<float>& params) {
  if (stored.size() != params.size()) {
    throw LoadError("checkpoint holds " + std::to_string(stored.size()) + " parameters, model expects " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (stored[i].name != params[i].name || stored[i].shape != params[i].tensor.shape()) {
      throw LoadError("checkpoint parameter '" + stored[i].name + "' " + ad::to_string(stored[i].shape) +
                      " does not match model parameter '" + params[i].name + "' " +
                      ad::to_string(params[i].tensor.shape()));
    }
    auto t = params[i].tensor;
    std::copy(stored[i].values.begin(), stored[i].values.end(), t.data().begin());
  }
}

void store_adam(const ad::AdamState<float>& state, Checkpoint& ckpt) {
  ckpt.adam_t = state.t;
  ckpt.adam_m = state.m;
  ckpt.adam_v = state.v;
}

void restore_adam(const Checkpoint& ckpt, ad::AdamState<float>& state) {
  if (ckpt.adam_m.empty()) {
    state.t = 0;
    return;
  }
  if (ckpt.adam_m.size() != state.m.size()) throw LoadError("checkpoint optimizer state does not match the model");
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    if (ckpt.adam_m[i].size() != state.m[i].size()) throw LoadError("checkpoint optimizer moment has the wrong size");
  }
  state.t = ckpt.adam_t;
  state.m = ckpt.adam_m;
  state.v = ckpt.adam_v;
}

}  // namespace plotforge::train
