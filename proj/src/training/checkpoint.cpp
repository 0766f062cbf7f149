#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "peerstyle/config.hpp"
#include "peerstyle/training.hpp"

// Layout: "PSTYCKPT" | u32 version | u64 payload bytes | u32 crc32(payload) | payload.
// Payload: config YAML, step, parameters (name, shape, f64 values), then for
// each optimizer its step count and moments, then the RNG states.

namespace peerstyle {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'S', 'T', 'Y', 'C', 'K', 'P', 'T'};
using Kind = CheckpointError::Kind;

class Writer {
 public:
  template <class T>
  void put(T v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put(const std::string& s) {
    put<std::uint64_t>(s.size());
    buf_ += s;
  }
  void put(std::span<const double> v) {
    put<std::uint64_t>(v.size());
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  template <class T>
  T get() {
    T v;
    need(sizeof v);
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > buf_.size() - pos_) throw CheckpointError(Kind::corrupt, "checkpoint: payload ends early");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

void write_params(Writer& w, const ParameterList& params) {
  w.put<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.put(p.name);
    w.put<std::uint64_t>(p.tensor.dim());
    for (std::size_t d : p.tensor.shape()) w.put<std::uint64_t>(d);
    w.put(p.tensor.data());
  }
}

void read_params(Reader& r, const ParameterList& params, const std::string& where) {
  const auto n = r.get<std::uint64_t>();
  if (n != params.size()) {
    throw CheckpointError(Kind::config_mismatch, where + ": holds " + std::to_string(n) + " parameters, model has " +
                                                     std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const std::string name = r.get_string();
    if (name != p.name) throw CheckpointError(Kind::config_mismatch, where + ": expected '" + p.name + "', found '" + name + "'");
    Shape shape(r.get<std::uint64_t>());
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (shape != p.tensor.shape()) {
      throw CheckpointError(Kind::config_mismatch, where + ": '" + name + "' has shape " + to_string(shape) +
                                                       ", model expects " + to_string(p.tensor.shape()));
    }
    const std::vector<double> values = r.get_doubles();
    if (values.size() != p.tensor.numel()) throw CheckpointError(Kind::corrupt, where + ": '" + name + "' size mismatch");
    Tensor t = p.tensor;
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
}

void write_adam(Writer& w, const Adam& opt) {
  w.put<std::uint64_t>(opt.step_count());
  w.put<std::uint64_t>(opt.first_moments().size());
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    w.put(std::span<const double>(opt.first_moments()[i]));
    w.put(std::span<const double>(opt.second_moments()[i]));
  }
}

void read_adam(Reader& r, Adam& opt, const std::string& where) {
  opt.set_step_count(r.get<std::uint64_t>());
  const auto n = r.get<std::uint64_t>();
  if (n != opt.first_moments().size()) throw CheckpointError(Kind::config_mismatch, where + ": optimizer size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    auto m = r.get_doubles(), v = r.get_doubles();
    if (m.size() != opt.first_moments()[i].size() || v.size() != m.size()) {
      throw CheckpointError(Kind::corrupt, where + ": optimizer moment size mismatch");
    }
    opt.first_moments()[i] = std::move(m);
    opt.second_moments()[i] = std::move(v);
  }
}

std::uint32_t crc(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

// Reads and verifies the envelope; returns the payload.
std::string read_payload(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, path.string() + ": cannot open checkpoint");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string file = ss.str();
  const std::string where = path.string();
  constexpr std::size_t header = sizeof kMagic + 4 + 8 + 4;
  if (file.size() < header || std::memcmp(file.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(Kind::corrupt, where + ": not a checkpoint file");
  }
  Reader r(file);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::version, where + ": checkpoint format version " + std::to_string(version) +
                                             " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto length = r.get<std::uint64_t>();
  const auto expected_crc = r.get<std::uint32_t>();
  if (file.size() - header != length) throw CheckpointError(Kind::corrupt, where + ": truncated checkpoint");
  std::string payload = file.substr(header);
  if (crc(payload) != expected_crc) throw CheckpointError(Kind::corrupt, where + ": checksum mismatch");
  return payload;
}

TrainConfig read_config(Reader& r, const std::string& where) {
  try {
    return parse_train_config(r.get_string());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::corrupt, where + ": stored configuration is invalid: " + e.what());
  }
}

// Fields that may differ between a checkpoint and the run resuming it.
TrainConfig comparable(TrainConfig c) {
  c.max_steps = 0;
  c.log_every = 1;
  c.checkpoint_every = 0;
  return c;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Writer w;
  w.put(to_yaml(config_));
  w.put<std::uint64_t>(step_);
  write_params(w, model_.all_parameters());
  write_adam(w, aux_opt_);
  write_adam(w, main_opt_);
  write_adam(w, disc_opt_);
  w.put(rng_.serialize());

  Writer head;
  for (char c : kMagic) head.put(c);
  head.put<std::uint32_t>(kCheckpointVersion);
  head.put<std::uint64_t>(w.bytes().size());
  head.put<std::uint32_t>(crc(w.bytes()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << head.bytes() << w.bytes();
    if (!out) throw CheckpointError(Kind::io, tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  const std::string payload = read_payload(path);
  const std::string where = path.string();
  Reader r(payload);
  const TrainConfig stored = read_config(r, where);
  if (comparable(stored) != comparable(config_)) {
    throw CheckpointError(Kind::config_mismatch, where + ": checkpoint was written with a different configuration");
  }
  const auto step = r.get<std::uint64_t>();
  read_params(r, model_.all_parameters(), where);
  read_adam(r, aux_opt_, where);
  read_adam(r, main_opt_, where);
  read_adam(r, disc_opt_, where);
  try {
    rng_.deserialize(r.get_string());
  } catch (const std::invalid_argument&) {
    throw CheckpointError(Kind::corrupt, where + ": malformed RNG state");
  }
  if (!r.done()) throw CheckpointError(Kind::corrupt, where + ": trailing bytes");
  step_ = step;
}

LoadedModel load_model(const std::filesystem::path& path) {
  const std::string payload = read_payload(path);
  const std::string where = path.string();
  Reader r(payload);
  LoadedModel out;
  out.config = read_config(r, where);
  out.step = r.get<std::uint64_t>();
  std::mt19937_64 unused;
  out.model = Model(out.config.net, unused);
  read_params(r, out.model.all_parameters(), where);
  return out;
}

}  // namespace peerstyle
