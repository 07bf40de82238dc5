#include "stairnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "stairnet/errors.hpp"

namespace stairnet {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'I', 'R', 'C', 'K', 'P'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void record(const TensorRecord& r) {
    str(r.name);
    const Shape4& s = r.value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) u32(static_cast<std::uint32_t>(d));
    for (float f : r.value.vec()) u32(std::bit_cast<std::uint32_t>(f));
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}

  void need(std::size_t n) const {
    if (buf.size() - pos < n)
      throw ParseError("checkpoint truncated at byte " + std::to_string(pos) + " (need " + std::to_string(n) +
                       " more)");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  TensorRecord record() {
    TensorRecord r;
    r.name = str();
    const std::size_t at = pos;
    int d[4];
    for (int& v : d) {
      const std::uint32_t x = u32();
      if (x == 0 || x > (1u << 24)) throw ParseError("checkpoint: bad tensor extent at byte " + std::to_string(at));
      v = static_cast<int>(x);
    }
    const Shape4 s{d[0], d[1], d[2], d[3]};
    need(s.numel() * 4);
    Tensor<float> t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(u32());
    r.value = std::move(t);
    return r;
  }

  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u64(ckpt.iteration);
  w.str(ckpt.config);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& r : ckpt.params) w.record(r);
  w.u32(static_cast<std::uint32_t>(ckpt.momentum.size()));
  for (const auto& r : ckpt.momentum) w.record(r);
  return std::move(w.out);
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw ParseError("checkpoint: bad magic at byte 0");
  r.pos = sizeof kMagic;
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version) + " at byte 8");
  Checkpoint c;
  c.iteration = r.u64();
  c.config = r.str();
  const std::uint32_t np = r.u32();
  for (std::uint32_t i = 0; i < np; ++i) c.params.push_back(r.record());
  const std::uint32_t nm = r.u32();
  for (std::uint32_t i = 0; i < nm; ++i) c.momentum.push_back(r.record());
  if (r.pos != bytes.size()) throw ParseError("checkpoint: trailing data at byte " + std::to_string(r.pos));
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void load_params(const std::vector<TensorRecord>& records, ParamStore<float>& store) {
  std::vector<bool> seen(store.size(), false);
  for (const auto& r : records) {
    const int id = store.find(r.name);
    if (id < 0) throw ParseError("checkpoint parameter '" + r.name + "' is not part of the model");
    if (r.value.shape() != store.value(id).shape())
      throw DimensionError("checkpoint parameter '" + r.name + "' has shape " + r.value.shape().str() +
                           ", model expects " + store.value(id).shape().str());
    store.value(id) = r.value;
    seen[id] = true;
  }
  for (int i = 0; i < store.size(); ++i)
    if (!seen[i]) throw ParseError("checkpoint is missing parameter '" + store.name(i) + "'");
}

std::vector<TensorRecord> param_records(const ParamStore<float>& store) {
  std::vector<TensorRecord> out;
  out.reserve(store.size());
  for (int i = 0; i < store.size(); ++i) out.push_back({store.name(i), store.value(i)});
  return out;
}

}  // namespace stairnet
