#include "protflow/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "protflow/error.hpp"

namespace protflow {

using nlohmann::json;

void Checkpoint::put(const std::string& name, const Matrix& value) {
  for (auto& [n, m] : tensors) {
    if (n == name) {
      m = value;
      return;
    }
  }
  tensors.emplace_back(name, value);
}

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
  for (const auto& t : tensors)
    if (t.first.rfind(prefix, 0) == 0) return true;
  return false;
}

namespace {

constexpr char kMagic[4] = {'P', 'F', 'L', 'W'};

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <class T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  json header;
  header["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : ckpt.tensors) {
    if (!m.all_finite()) throw Error(Errc::kNonFiniteValue, "tensor '" + name + "' is not finite");
    header["tensors"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"dtype", "f32"}, {"offset", offset}});
    offset += 4 * m.size();
  }
  header["config"] = ckpt.config;
  header["metadata"] = ckpt.metadata;
  header["rng"] = {{"key", ckpt.rng.key}, {"counter", ckpt.rng.counter}};
  header["step"] = ckpt.step;
  header["lineage"] = {{"parent", ckpt.parent_hash}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : ckpt.tensors) {
    for (double v : t.second.values()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_le<std::uint32_t>(out, bits);
    }
  }
  return out;
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(Errc::kBadMagic, "not a PFLW checkpoint");
  }
  if (bytes.size() < 16) throw Error(Errc::kCorruptOffset, "truncated preamble");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw Error(Errc::kVersionUnsupported, "file version " + std::to_string(version) +
                                               ", supported version " + std::to_string(kCheckpointVersion));
  }
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw Error(Errc::kCorruptOffset, "header extends past end of file");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw Error(Errc::kCorruptOffset, std::string("unreadable header: ") + e.what());
  }
  const std::size_t payload = 16 + header_len;
  const std::size_t payload_size = bytes.size() - payload;

  Checkpoint ckpt;
  try {
    ckpt.config = header.at("config");
    ckpt.metadata = header.at("metadata");
    ckpt.rng.key = header.at("rng").at("key").get<std::uint64_t>();
    ckpt.rng.counter = header.at("rng").at("counter").get<std::uint64_t>();
    ckpt.step = header.at("step").get<std::uint64_t>();
    ckpt.parent_hash = header.at("lineage").at("parent").get<std::string>();
    std::uint64_t expected = 0;
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto rows = t.at("shape").at(0).get<std::uint64_t>();
      const auto cols = t.at("shape").at(1).get<std::uint64_t>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      if (t.at("dtype").get<std::string>() != "f32") throw Error(Errc::kCorruptOffset, "tensor '" + name + "' dtype");
      if (offset != expected) throw Error(Errc::kCorruptOffset, "tensor '" + name + "' offset out of order");
      const std::uint64_t nbytes = 4 * rows * cols;
      if (offset + nbytes > payload_size) {
        throw Error(Errc::kCorruptOffset, "tensor '" + name + "' extends past end of file");
      }
      Matrix m(rows, cols);
      const std::uint8_t* p = bytes.data() + payload + offset;
      for (std::size_t i = 0; i < m.size(); ++i) {
        const std::uint32_t bits = get_le<std::uint32_t>(p + 4 * i);
        float f;
        std::memcpy(&f, &bits, 4);
        m.data()[i] = f;
      }
      ckpt.tensors.emplace_back(name, std::move(m));
      expected = offset + nbytes;
    }
    if (expected != payload_size) throw Error(Errc::kCorruptOffset, "trailing bytes after last tensor");
  } catch (const json::exception& e) {
    throw Error(Errc::kCorruptOffset, std::string("malformed header: ") + e.what());
  }
  return ckpt;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kDataError, "cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(Errc::kDataError, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::kDataError, "cannot rename " + tmp + " to " + path + ": " + ec.message());
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kDataError, "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_bytes(path)); }

std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::string& path) { return fnv1a_hex(read_bytes(path)); }

// ---------------------------------------------------------------------------

void put_params(Checkpoint& ckpt, const std::string& prefix, const nn::ParamList& params) {
  nn::round_to_float(params);
  for (const nn::Param* p : params) ckpt.put(prefix + p->name, p->value);
}

void get_params(const Checkpoint& ckpt, const std::string& prefix, const nn::ParamList& params) {
  for (nn::Param* p : params) {
    const Matrix* m = ckpt.find(prefix + p->name);
    if (!m) throw Error(Errc::kIncompatibleCheckpoint, "missing tensor '" + prefix + p->name + "'");
    if (!m->same_shape(p->value)) {
      throw Error(Errc::kIncompatibleCheckpoint, "tensor '" + prefix + p->name + "' has the wrong shape");
    }
    p->value = *m;
    p->zero_grad();
  }
}

namespace {

const json& meta(const Checkpoint& ckpt, const std::string& key) {
  if (!ckpt.metadata.contains(key)) throw Error(Errc::kIncompatibleCheckpoint, "checkpoint has no " + key);
  return ckpt.metadata.at(key);
}

Matrix row_of(const std::vector<double>& v) { return Matrix(1, v.size(), v); }

std::vector<double> vec_of(const Checkpoint& ckpt, const std::string& name) {
  const Matrix* m = ckpt.find(name);
  if (!m || m->rows() != 1) throw Error(Errc::kIncompatibleCheckpoint, "missing tensor '" + name + "'");
  return {m->values().begin(), m->values().end()};
}

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void round_stats_to_float(SmoothingStats& stats) {
  for (auto* v : {&stats.mean, &stats.stddev, &stats.zmin, &stats.zmax})
    for (double& x : *v) x = to_float(x);
  stats.clamp_k = to_float(stats.clamp_k);
}

void put_encoder(Checkpoint& ckpt, const std::string& prefix, Encoder& encoder) {
  ckpt.metadata[prefix + "encoder"] = {{"dim", encoder.dim()}, {"max_length", encoder.max_length()}};
  put_params(ckpt, prefix, encoder.params());
}

Encoder get_encoder(const Checkpoint& ckpt, const std::string& prefix) {
  const json& m = meta(ckpt, prefix + "encoder");
  Rng rng(0);
  Encoder enc(m.at("dim").get<std::size_t>(), m.at("max_length").get<std::size_t>(), rng);
  get_params(ckpt, prefix, enc.params());
  return enc;
}

void put_decoder(Checkpoint& ckpt, const std::string& prefix, Decoder& decoder) {
  ckpt.metadata[prefix + "decoder"] = {{"dim", decoder.dim()}};
  put_params(ckpt, prefix, decoder.params());
}

Decoder get_decoder(const Checkpoint& ckpt, const std::string& prefix, std::size_t dim) {
  meta(ckpt, prefix + "decoder");
  Rng rng(0);
  Decoder dec(dim, rng);
  get_params(ckpt, prefix, dec.params());
  return dec;
}

void put_stats(Checkpoint& ckpt, const std::string& prefix, const SmoothingStats& stats) {
  ckpt.metadata[prefix + "stats"] = {{"clamp_k", stats.clamp_k}, {"dim", stats.dim()}};
  std::vector<double> constant(stats.dim());
  for (std::size_t i = 0; i < stats.dim(); ++i) constant[i] = stats.constant[i] ? 1.0 : 0.0;
  ckpt.put(prefix + "stats.mean", row_of(stats.mean));
  ckpt.put(prefix + "stats.stddev", row_of(stats.stddev));
  ckpt.put(prefix + "stats.constant", row_of(constant));
  ckpt.put(prefix + "stats.zmin", row_of(stats.zmin));
  ckpt.put(prefix + "stats.zmax", row_of(stats.zmax));
}

SmoothingStats get_stats(const Checkpoint& ckpt, const std::string& prefix) {
  const json& m = meta(ckpt, prefix + "stats");
  SmoothingStats s;
  s.clamp_k = m.at("clamp_k").get<double>();
  s.mean = vec_of(ckpt, prefix + "stats.mean");
  s.stddev = vec_of(ckpt, prefix + "stats.stddev");
  for (double c : vec_of(ckpt, prefix + "stats.constant")) s.constant.push_back(c != 0.0);
  s.zmin = vec_of(ckpt, prefix + "stats.zmin");
  s.zmax = vec_of(ckpt, prefix + "stats.zmax");
  const std::size_t d = s.mean.size();
  if (s.stddev.size() != d || s.constant.size() != d || s.zmin.size() != d || s.zmax.size() != d) {
    throw Error(Errc::kIncompatibleCheckpoint, "smoothing statistics disagree in dimension");
  }
  return s;
}

void put_compressor(Checkpoint& ckpt, const std::string& prefix, Compressor& compressor) {
  ckpt.metadata[prefix + "compressor"] = {
      {"dim", compressor.dim()}, {"ratio", compressor.ratio()}, {"max_length", compressor.max_length()}};
  put_params(ckpt, prefix, compressor.params());
}

Compressor get_compressor(const Checkpoint& ckpt, const std::string& prefix) {
  const json& m = meta(ckpt, prefix + "compressor");
  Rng rng(0);
  Compressor c(m.at("dim").get<std::size_t>(), m.at("ratio").get<std::size_t>(),
               m.at("max_length").get<std::size_t>(), rng);
  get_params(ckpt, prefix, c.params());
  return c;
}

void put_field(Checkpoint& ckpt, const std::string& prefix, VectorField& field) {
  const VectorFieldConfig& c = field.config();
  ckpt.metadata[prefix + "flow"] = {{"latent_width", c.latent_width}, {"width", c.width}, {"depth", c.depth},
                                    {"seq_len", c.seq_len},           {"attention", c.attention}};
  put_params(ckpt, prefix, field.params());
}

VectorField get_field(const Checkpoint& ckpt, const std::string& prefix) {
  const json& m = meta(ckpt, prefix + "flow");
  VectorFieldConfig c;
  c.latent_width = m.at("latent_width").get<std::size_t>();
  c.width = m.at("width").get<std::size_t>();
  c.depth = m.at("depth").get<std::size_t>();
  c.seq_len = m.at("seq_len").get<std::size_t>();
  c.attention = m.at("attention").get<bool>();
  Rng rng(0);
  VectorField field(c, rng);
  get_params(ckpt, prefix, field.params());
  return field;
}

json lengths_to_json(const LengthDistribution& dist) {
  json j = json::object();
  for (const auto& [len, count] : dist.counts()) j[std::to_string(len)] = count;
  return j;
}

LengthDistribution lengths_from_json(const json& j) {
  std::map<std::size_t, std::uint64_t> counts;
  try {
    for (const auto& [key, value] : j.items()) counts[std::stoul(key)] = value.get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw Error(Errc::kIncompatibleCheckpoint, std::string("bad length distribution: ") + e.what());
  }
  return LengthDistribution(std::move(counts));
}

}  // namespace protflow
