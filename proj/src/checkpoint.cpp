#include "hintnart/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hintnart/errors.hpp"

namespace hintnart {

namespace {

constexpr char kMagic[4] = {'H', 'N', 'R', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw CheckpointTruncatedError("checkpoint: unexpected end of file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string build_metadata(const Checkpoint& c) {
  // std::map keeps keys sorted, which makes the block canonical.
  std::map<std::string, std::string> kv;
  kv["kind"] = c.kind;
  kv["model.encoder_layers"] = std::to_string(c.model.encoder_layers);
  kv["model.decoder_layers"] = std::to_string(c.model.decoder_layers);
  kv["model.heads"] = std::to_string(c.model.heads);
  kv["model.d_model"] = std::to_string(c.model.d_model);
  kv["model.d_k"] = std::to_string(c.model.d_k);
  kv["model.d_v"] = std::to_string(c.model.d_v);
  kv["model.d_ff"] = std::to_string(c.model.d_ff);
  kv["model.vocab_src"] = std::to_string(c.model.vocab_src);
  kv["model.vocab_tgt"] = std::to_string(c.model.vocab_tgt);
  kv["model.max_len"] = std::to_string(c.model.max_len);
  kv["model.scale_by_d_model"] = c.model.scale_by_d_model ? "1" : "0";
  kv["step"] = std::to_string(c.step);
  kv["rng_state"] = std::to_string(c.rng_state);
  kv["vocab"] = join_tokens(c.vocab);
  for (const auto& [k, v] : c.extra) kv["extra." + k] = v;

  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

void parse_metadata(const std::string& text, Checkpoint& c) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::size_t sep = line.find(" = ");
    if (sep == std::string::npos) throw CheckpointError("checkpoint: malformed metadata line");
    const std::string key = line.substr(0, sep);
    const std::string value = line.substr(sep + 3);
    if (key == "kind") c.kind = value;
    else if (key == "model.encoder_layers") c.model.encoder_layers = std::stoull(value);
    else if (key == "model.decoder_layers") c.model.decoder_layers = std::stoull(value);
    else if (key == "model.heads") c.model.heads = std::stoull(value);
    else if (key == "model.d_model") c.model.d_model = std::stoull(value);
    else if (key == "model.d_k") c.model.d_k = std::stoull(value);
    else if (key == "model.d_v") c.model.d_v = std::stoull(value);
    else if (key == "model.d_ff") c.model.d_ff = std::stoull(value);
    else if (key == "model.vocab_src") c.model.vocab_src = std::stoull(value);
    else if (key == "model.vocab_tgt") c.model.vocab_tgt = std::stoull(value);
    else if (key == "model.max_len") c.model.max_len = std::stoull(value);
    else if (key == "model.scale_by_d_model") c.model.scale_by_d_model = (value == "1");
    else if (key == "step") c.step = std::stoull(value);
    else if (key == "rng_state") c.rng_state = std::stoull(value);
    else if (key == "vocab") c.vocab = split_tokens(value);
    else if (key.rfind("extra.", 0) == 0) c.extra[key.substr(6)] = value;
    else throw CheckpointError("checkpoint: unknown metadata key " + key);
  }
}

void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot open for writing: " + tmp);
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw InputError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw InputError("rename failed: " + path);
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, Checkpoint::kVersion);

  const std::string meta = build_metadata(ckpt);
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;

  // entries: value, then moments, per parameter in name order
  struct Entry {
    std::string name;
    const std::vector<std::size_t>* shape;
    const std::vector<float>* data;
  };
  std::vector<Entry> entries;
  for (const auto& [name, t] : ckpt.params.tensors()) {
    entries.push_back({name, &t.shape, &t.value});
    entries.push_back({"m:" + name, &t.shape, &t.adam_m});
    entries.push_back({"v:" + name, &t.shape, &t.adam_v});
  }

  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  std::uint64_t offset = 0;
  for (const Entry& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.shape->size()));
    for (std::size_t ext : *e.shape) put_u64(out, ext);
    put_u64(out, offset);
    offset += e.data->size() * 4;
  }
  for (const Entry& e : entries) {
    for (float v : *e.data) put_f32(out, v);
  }
  atomic_write(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string buf = ss.str();
  Reader r{buf};

  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw CheckpointMagicError("checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw CheckpointVersionError("checkpoint: unsupported version " + std::to_string(version));
  }

  Checkpoint c;
  const std::uint32_t meta_len = r.u32();
  parse_metadata(r.bytes(meta_len), c);

  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t offset;
  };
  const std::uint32_t count = r.u32();
  std::vector<Entry> entries(count);
  for (auto& e : entries) {
    const std::uint32_t name_len = r.u32();
    e.name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    e.shape.resize(rank);
    for (auto& ext : e.shape) {
      ext = r.u64();
      if (ext == 0) throw CheckpointShapeError("checkpoint: zero extent in " + e.name);
    }
    e.offset = r.u64();
  }

  const std::size_t data_start = r.pos;
  const std::size_t data_bytes = buf.size() - data_start;
  std::uint64_t expected = 0;
  for (const Entry& e : entries) {
    const std::size_t n = shape_numel(e.shape);
    if (e.offset != expected) {
      throw CheckpointShapeError("checkpoint: offset table inconsistent at " + e.name);
    }
    expected += n * 4;
  }
  if (expected != data_bytes) {
    if (expected > data_bytes) throw CheckpointTruncatedError("checkpoint: data section truncated");
    throw CheckpointShapeError("checkpoint: data section larger than shape table");
  }

  for (const Entry& e : entries) {
    const std::size_t n = shape_numel(e.shape);
    const bool is_m = e.name.rfind("m:", 0) == 0;
    const bool is_v = e.name.rfind("v:", 0) == 0;
    const std::string base = (is_m || is_v) ? e.name.substr(2) : e.name;
    ParamTensor& t = c.params.has(base) ? c.params.require(base)
                                        : c.params.define(base, e.shape);
    if (t.shape != e.shape) {
      throw CheckpointShapeError("checkpoint: shape mismatch between value and moments of " + base);
    }
    std::vector<float>& dst = is_m ? t.adam_m : (is_v ? t.adam_v : t.value);
    Reader dr{buf};
    dr.pos = data_start + e.offset;
    for (std::size_t i = 0; i < n; ++i) dst[i] = dr.f32();
  }
  return c;
}

}  // namespace hintnart
