#include "scenecap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace scenecap {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'C', 'P'};

void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}

void put_u8(std::string& out, uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u16(std::string& out, uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& out, int32_t v) { put_u32(out, static_cast<uint32_t>(v)); }

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  const std::string source;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw Error(source + ": truncated checkpoint");
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void put_config(std::string& out, const ModelConfig& cfg) {
  put_i32(out, cfg.appearance_dim);
  put_i32(out, cfg.unit_dim);
  put_i32(out, cfg.attention_dim);
  put_i32(out, cfg.lstm_dim);
  put_i32(out, cfg.word_dim);
  put_i32(out, cfg.label_dim);
  put_i32(out, cfg.n_attrs);
  put_f64(out, cfg.dropout);
  put_u8(out, cfg.use_gate ? 1 : 0);
  put_u8(out, cfg.appearance_only_objects ? 1 : 0);
  uint8_t bits = 0;
  for (int c = 0; c < kNumUnitCategories; ++c)
    if (cfg.units.active[static_cast<size_t>(c)]) bits |= static_cast<uint8_t>(1 << c);
  put_u8(out, bits);
  put_i32(out, cfg.vocab_size);
  put_i32(out, cfg.n_object_labels);
  put_i32(out, cfg.n_attribute_labels);
  put_i32(out, cfg.n_relation_labels);
}

ModelConfig read_config(Reader& r) {
  ModelConfig cfg;
  cfg.appearance_dim = r.i32();
  cfg.unit_dim = r.i32();
  cfg.attention_dim = r.i32();
  cfg.lstm_dim = r.i32();
  cfg.word_dim = r.i32();
  cfg.label_dim = r.i32();
  cfg.n_attrs = r.i32();
  cfg.dropout = r.f64();
  cfg.use_gate = r.u8() != 0;
  cfg.appearance_only_objects = r.u8() != 0;
  uint8_t bits = r.u8();
  for (int c = 0; c < kNumUnitCategories; ++c)
    cfg.units.active[static_cast<size_t>(c)] = (bits & (1 << c)) != 0;
  cfg.vocab_size = r.i32();
  cfg.n_object_labels = r.i32();
  cfg.n_attribute_labels = r.i32();
  cfg.n_relation_labels = r.i32();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointMeta& meta) {
  std::string out;
  put_bytes(out, kMagic, 4);
  put_u32(out, meta.version);
  put_config(out, meta.config);
  put_u64(out, meta.vocab_hash);
  put_u64(out, meta.seed);

  auto entries = params.entries();
  put_u32(out, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u16(out, static_cast<uint16_t>(e.name.size()));
    put_bytes(out, e.name.data(), e.name.size());
    put_u8(out, 2);
    put_i32(out, e.tensor->rows());
    put_i32(out, e.tensor->cols());
    for (double v : e.tensor->data) put_f32(out, static_cast<float>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf, 0, path.string()};

  if (r.str(4) != std::string(kMagic, 4)) throw Error(path.string() + ": not a checkpoint file");
  Checkpoint ckpt;
  ckpt.meta.version = r.u32();
  if (ckpt.meta.version != 1)
    throw Error(path.string() + ": unsupported checkpoint version " +
                std::to_string(ckpt.meta.version));
  ckpt.meta.config = read_config(r);
  ckpt.meta.vocab_hash = r.u64();
  ckpt.meta.seed = r.u64();

  ckpt.params = ModelParams::zeros(ckpt.meta.config);
  auto expected = ckpt.params.entries();
  uint32_t n = r.u32();
  if (n != expected.size())
    throw Error(path.string() + ": has " + std::to_string(n) + " parameter arrays, config needs " +
                std::to_string(expected.size()));
  for (const auto& e : expected) {
    std::string name = r.str(r.u16());
    if (name != e.name)
      throw Error(path.string() + ": parameter '" + name + "' where '" + e.name + "' expected");
    uint8_t ndims = r.u8();
    if (ndims != 2) throw Error(path.string() + ": parameter '" + name + "' is not rank 2");
    int rows = r.i32();
    int cols = r.i32();
    if (rows != e.tensor->rows() || cols != e.tensor->cols())
      throw Error(path.string() + ": parameter '" + name + "' has shape [" +
                  std::to_string(rows) + "x" + std::to_string(cols) + "], config requires [" +
                  std::to_string(e.tensor->rows()) + "x" + std::to_string(e.tensor->cols()) + "]");
    for (double& v : e.tensor->data) v = static_cast<double>(r.f32());
  }
  if (r.pos != buf.size()) throw Error(path.string() + ": trailing bytes after parameters");
  return ckpt;
}

}  // namespace scenecap
