#include "flk/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "flk/random.hpp"

namespace flk {

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.channels = {8, 16, 24};
  cfg.window = 4;
  return cfg;
}

void ModelConfig::validate() const {
  const std::size_t n = channels.size();
  if (n == 0) throw Error("model config: at least one level is required");
  if (blocks.size() != n || heads.size() != n) {
    throw Error("model config: channels, blocks and heads must have the same length (" + std::to_string(n) + ", " +
                std::to_string(blocks.size()) + ", " + std::to_string(heads.size()) + ")");
  }
  if (window == 0) throw Error("model config: window must be positive");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error("model config: expansion factor must be positive");
  for (std::size_t l = 0; l < n; ++l) {
    if (channels[l] == 0 || heads[l] == 0) throw Error("model config: channels and heads must be positive");
    if (channels[l] % heads[l] != 0) {
      throw Error("model config: level " + std::to_string(l) + " has " + std::to_string(channels[l]) +
                  " channels, not divisible by " + std::to_string(heads[l]) + " heads");
    }
  }
}

ConvSpec embed_spec(const ModelConfig& cfg) { return ConvSpec::same(3, 9, 3 * cfg.channels.at(0), 3); }
ConvSpec attn_projection_spec(std::string_view name, std::size_t channels) {
  const ConvSpec spec = ConvSpec::same(1, channels, channels);
  return name == "k" ? spec.without_bias() : spec;
}

ConvSpec head_spec(const ModelConfig& cfg) { return ConvSpec::same(3, cfg.channels.at(0), 3); }

// ---------------------------------------------------------------------------

void ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw Error("parameter '" + name + "' registered twice");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

const Tensor& ParamStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

Tensor& ParamStore::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(name);
  return out;
}

ParamStore build_model(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore store;
  for_each_param(cfg, [&](const std::string& name, const Shape& shape, ParamRole role) {
    switch (role) {
      case ParamRole::kConvWeight: {
        // weight layout [Cout, k, k, Cin/groups]
        const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
        const double bound = 1.0 / std::sqrt(fan_in);
        store.add(name, rng.uniform_tensor(shape, -bound, bound));
        break;
      }
      case ParamRole::kOne:
        store.add(name, Tensor(shape, 1.0));
        break;
      case ParamRole::kZero:
      case ParamRole::kHeadWeight:
        store.add(name, Tensor(shape, 0.0));
        break;
    }
  });
  return store;
}

// ---------------------------------------------------------------------------

void check_burst(const Burst& frames) {
  require_hwc(frames.i1, "forward");
  if (frames.i0.shape() != frames.i1.shape() || frames.i2.shape() != frames.i1.shape()) {
    throw ShapeError("forward: frames must share one shape, got " + to_string(frames.i0.shape()) + ", " +
                     to_string(frames.i1.shape()) + ", " + to_string(frames.i2.shape()));
  }
  if (frames.i1.shape()[2] != 3) {
    throw ShapeError("forward: frames must have 3 channels, got " + to_string(frames.i1.shape()));
  }
  for (const Tensor* f : {&frames.i0, &frames.i1, &frames.i2}) {
    if (!f->all_finite()) throw NumericError("forward: input frame contains non-finite values");
  }
}

namespace {

std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

}  // namespace

Burst pad_burst(const Burst& frames, const ModelConfig& cfg) {
  const std::size_t h = frames.i1.shape()[0], w = frames.i1.shape()[1];
  const std::size_t ph = round_up(h, cfg.size_multiple()), pw = round_up(w, cfg.size_multiple());
  if (ph == h && pw == w) return frames;
  return {reflect_pad(frames.i0, ph, pw), reflect_pad(frames.i1, ph, pw), reflect_pad(frames.i2, ph, pw)};
}

namespace {

Model<Tensor> bind_eager(const ParamStore& params, const ModelConfig& cfg) {
  return bind_model<Tensor>(cfg, [&](const std::string& name) -> Tensor {
    const Tensor& t = params.at(name);
    return t;
  });
}

}  // namespace

Tensor forward_residual(const Burst& frames, const ParamStore& params, const ModelConfig& cfg) {
  check_burst(frames);
  const Model<Tensor> model = bind_eager(params, cfg);
  const Burst padded = pad_burst(frames, cfg);
  const Tensor r = forward_residual_core(model, cfg, padded.i0, padded.i1, padded.i2);
  const std::size_t h = frames.i1.shape()[0], w = frames.i1.shape()[1];
  if (r.shape()[0] == h && r.shape()[1] == w) return r;
  return crop(r, h, w);
}

Tensor forward(const Burst& frames, const ParamStore& params, const ModelConfig& cfg) {
  return frames.i1 + forward_residual(frames, params, cfg);
}

std::vector<Tensor> fusion_similarity_maps(const Burst& frames, const ParamStore& params, const ModelConfig& cfg) {
  check_burst(frames);
  const Model<Tensor> model = bind_eager(params, cfg);
  const Burst padded = pad_burst(frames, cfg);
  std::vector<Tensor> maps;
  forward_residual_core(model, cfg, padded.i0, padded.i1, padded.i2, &maps);
  return maps;
}

Tensor clamp01(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format, little-endian:
//   "FLKR" u32 version u32 count
//   per tensor: u16 name_len, name, u8 ndim, ndim x u32 dims, prod(dims) x f32

namespace {

constexpr char kMagic[4] = {'F', 'L', 'K', 'R'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <class U>
  U get() {
    U v;
    need(sizeof(U));
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::kTruncated, "unexpected end of checkpoint at byte " +
                                                                    std::to_string(bytes_.size()));
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw CheckpointError(CheckpointError::Kind::kShapeOverflow, "parameter name too long: " + name);
    }
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw CheckpointError(CheckpointError::Kind::kShapeOverflow, "too many dimensions in " + name);
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (const auto d : t.shape()) {
      if (d > std::numeric_limits<std::uint32_t>::max()) {
        throw CheckpointError(CheckpointError::Kind::kShapeOverflow, "dimension too large in " + name);
      }
      put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    for (const double v : t.data()) put<float>(out, static_cast<float>(v));
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open " + path.string() + " for writing");
  const std::string bytes = out.str();
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw CheckpointError(CheckpointError::Kind::kIo, "write failed for " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open checkpoint " + path.string());
  Reader in(std::string(std::istreambuf_iterator<char>(file), {}));

  if (in.remaining() < 4 || in.get_string(4) != std::string(kMagic, 4)) {
    throw CheckpointError(CheckpointError::Kind::kBadMagic, path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointError(CheckpointError::Kind::kBadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint16_t>();
    std::string name = in.get_string(name_len);
    const auto ndim = in.get<std::uint8_t>();
    Shape shape(ndim);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = in.get<std::uint32_t>();
      if (d == 0) throw CheckpointError(CheckpointError::Kind::kShapeOverflow, "zero dimension in " + name);
      if (total > std::numeric_limits<std::size_t>::max() / sizeof(float) / d) {
        throw CheckpointError(CheckpointError::Kind::kShapeOverflow, "shape of " + name + " overflows");
      }
      total *= d;
    }
    if (total > in.remaining() / sizeof(float)) {
      in.need(total * sizeof(float));
    }
    std::vector<double> data(total);
    for (auto& v : data) v = static_cast<double>(in.get<float>());
    if (store.contains(name)) {
      throw CheckpointError(CheckpointError::Kind::kUnexpectedNames, "duplicate tensor name: " + name);
    }
    store.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return store;
}

ParamStore load_model_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg) {
  ParamStore loaded = load_checkpoint(path);
  std::vector<std::string> missing, mismatched;
  std::set<std::string> expected;
  ParamStore ordered;
  for_each_param(cfg, [&](const std::string& name, const Shape& shape, ParamRole) {
    expected.insert(name);
    if (!loaded.contains(name)) {
      missing.push_back(name);
    } else if (loaded.at(name).shape() != shape) {
      mismatched.push_back(name + " " + to_string(loaded.at(name).shape()) + " vs " + to_string(shape));
    } else {
      ordered.add(name, loaded.at(name));
    }
  });
  std::vector<std::string> unexpected;
  for (const auto& [name, t] : loaded) {
    if (!expected.contains(name)) unexpected.push_back(name);
  }
  if (!unexpected.empty()) {
    throw CheckpointError(CheckpointError::Kind::kUnexpectedNames, "unexpected tensors: " + join(unexpected));
  }
  if (!missing.empty()) {
    throw CheckpointError(CheckpointError::Kind::kMissingNames, "missing tensors: " + join(missing));
  }
  if (!mismatched.empty()) {
    throw CheckpointError(CheckpointError::Kind::kShapeMismatch, "shape mismatch: " + join(mismatched));
  }
  return ordered;
}

ModelConfig infer_config(const ParamStore& params) {
  auto shape_of = [&](const std::string& name) -> const Shape& {
    if (!params.contains(name)) {
      throw CheckpointError(CheckpointError::Kind::kMissingNames, "cannot infer model config: missing " + name);
    }
    return params.at(name).shape();
  };

  ModelConfig cfg;
  cfg.channels.clear();
  cfg.blocks.clear();
  cfg.heads.clear();
  std::vector<std::size_t> hidden;
  for (std::size_t l = 0; params.contains("enc" + std::to_string(l) + ".down.weight"); ++l) {
    const std::string stage = "enc" + std::to_string(l);
    cfg.channels.push_back(shape_of(stage + ".down.weight")[3]);
    std::size_t b = 0;
    while (params.contains(stage + ".block" + std::to_string(b) + ".norm1.weight")) ++b;
    if (b == 0) {
      throw CheckpointError(CheckpointError::Kind::kMissingNames, "cannot infer model config: " + stage + " has no blocks");
    }
    cfg.blocks.push_back(b);
    const Shape& table = shape_of(stage + ".block0.attn.rel_bias");
    cfg.heads.push_back(table.at(0));
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(table.at(1)))));
    if (side * side != table[1] || side % 2 == 0) {
      throw CheckpointError(CheckpointError::Kind::kShapeMismatch, "cannot infer window from bias table " + to_string(table));
    }
    cfg.window = (side + 1) / 2;
    hidden.push_back(shape_of(stage + ".block0.ffn.project.weight")[3]);
  }
  if (cfg.channels.empty()) {
    throw CheckpointError(CheckpointError::Kind::kMissingNames, "cannot infer model config: no encoder levels");
  }

  // ceil(gamma * C_l) = hidden_l  <=>  (hidden_l - 1) / C_l < gamma <= hidden_l / C_l
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const double c = static_cast<double>(cfg.channels[l]);
    lo = std::max(lo, (static_cast<double>(hidden[l]) - 1.0) / c);
    hi = std::min(hi, static_cast<double>(hidden[l]) / c);
  }
  if (!(lo < hi)) throw CheckpointError(CheckpointError::Kind::kShapeMismatch, "inconsistent feed-forward widths");
  cfg.gamma = 0.5 * (lo + hi);
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    if (cfg.hidden(l) != hidden[l]) {
      throw CheckpointError(CheckpointError::Kind::kShapeMismatch, "inconsistent feed-forward widths");
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace flk
