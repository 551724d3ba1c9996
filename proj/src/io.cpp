// Binary particle-set and checkpoint formats, CSV/text helpers.

#include "ogpp/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ogpp::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are defined little-endian; this build targets "
              "little-endian hosts only");

namespace {

constexpr uint32_t kParticleVersion = 1;
constexpr uint32_t kCheckpointVersion = 1;

// --- byte-buffer writer/reader -------------------------------------------

struct Writer {
  std::vector<uint8_t> out;

  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) { raw(s.data(), s.size()); }
};

struct Reader {
  const std::vector<uint8_t>& in;
  size_t pos = 0;
  std::string what;  // format name for error messages

  Reader(const std::vector<uint8_t>& bytes, std::string name)
      : in(bytes), what(std::move(name)) {}

  void need(size_t n, const char* field) {
    if (pos + n > in.size())
      throw IoError(what + ": truncated while reading " + field +
                    " at byte offset " + std::to_string(pos) + " (need " +
                    std::to_string(n) + " more bytes, file has " +
                    std::to_string(in.size() - pos) + ")");
  }
  void raw(void* p, size_t n, const char* field) {
    need(n, field);
    std::memcpy(p, in.data() + pos, n);
    pos += n;
  }
  uint32_t u32(const char* field) {
    uint32_t v;
    raw(&v, 4, field);
    return v;
  }
  uint64_t u64(const char* field) {
    uint64_t v;
    raw(&v, 8, field);
    return v;
  }
  float f32(const char* field) {
    float v;
    raw(&v, 4, field);
    return v;
  }
  double f64(const char* field) {
    double v;
    raw(&v, 8, field);
    return v;
  }
  std::string str(size_t n, const char* field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
    pos += n;
    return s;
  }
  void expect_end() {
    if (pos != in.size())
      throw IoError(what + ": " + std::to_string(in.size() - pos) +
                    " trailing bytes after byte offset " + std::to_string(pos));
  }
};

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open file for reading: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

void spill(const std::string& path, const void* data, size_t n) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open file for writing: " + path);
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!f) throw IoError("short write to " + path);
}

}  // namespace

// --- task tags ------------------------------------------------------------

std::string task_name(Task t) {
  switch (t) {
    case Task::generic: return "generic";
    case Task::bluenoise: return "bluenoise";
    case Task::dla: return "dla";
    case Task::thomson: return "thomson";
    case Task::minsurf: return "minsurf";
  }
  throw ConfigError("unknown task tag " +
                    std::to_string(static_cast<uint32_t>(t)));
}

Task task_from_name(const std::string& name) {
  for (Task t : {Task::generic, Task::bluenoise, Task::dla, Task::thomson,
                 Task::minsurf})
    if (task_name(t) == name) return t;
  throw ConfigError("unknown task name '" + name + "'");
}

// --- particle sets --------------------------------------------------------

void ParticleSet::validate() const {
  if (n < 0 || d <= 0 || a < 0)
    throw ConfigError("particle set: need n >= 0, d > 0, a >= 0 (got n=" +
                      std::to_string(n) + " d=" + std::to_string(d) +
                      " a=" + std::to_string(a) + ")");
  if (bounds.rows() != 2 || bounds.cols() != d)
    throw ConfigError("particle set: bounds must be 2 x d");
  if (a == 0) {
    if (!attrs.empty())
      throw ConfigError("particle set: a == 0 but attribute matrices present");
  } else if (attrs.size() != configs.size()) {
    throw ConfigError("particle set: " + std::to_string(configs.size()) +
                      " configurations but " + std::to_string(attrs.size()) +
                      " attribute matrices");
  }
  for (size_t s = 0; s < configs.size(); ++s) {
    if (configs[s].rows() != n || configs[s].cols() != d)
      throw ConfigError("particle set: configuration " + std::to_string(s) +
                        " is not n x d");
    if (a > 0 && (attrs[s].rows() != n || attrs[s].cols() != a))
      throw ConfigError("particle set: attribute matrix " + std::to_string(s) +
                        " is not n x a");
  }
}

std::vector<uint8_t> particles_to_bytes(const ParticleSet& set) {
  set.validate();
  const uint32_t S = static_cast<uint32_t>(set.configs.size());
  Writer w;
  w.str("OGPP");
  w.u32(kParticleVersion);
  w.u32(static_cast<uint32_t>(set.task));
  w.u32(S);
  w.u32(static_cast<uint32_t>(set.n));
  w.u32(static_cast<uint32_t>(set.d));
  w.u32(static_cast<uint32_t>(set.a));
  w.u32(0);  // reserved; pads the header to 40 bytes and 8-aligns the seed
  w.u64(set.seed);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < set.d; ++c) w.f64(set.bounds(r, c));
  for (uint32_t s = 0; s < S; ++s)
    for (int i = 0; i < set.n; ++i)
      for (int c = 0; c < set.d; ++c)
        w.f32(static_cast<float>(set.configs[s](i, c)));
  if (set.a > 0)
    for (uint32_t s = 0; s < S; ++s)
      for (int i = 0; i < set.n; ++i)
        for (int c = 0; c < set.a; ++c)
          w.f32(static_cast<float>(set.attrs[s](i, c)));
  return std::move(w.out);
}

ParticleSet particles_from_bytes(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "particle set");
  const std::string magic = r.str(4, "magic");
  if (magic != "OGPP")
    throw IoError("particle set: bad magic at byte offset 0 (expected "
                  "\"OGPP\", got \"" + magic + "\")");
  const uint32_t version = r.u32("version");
  if (version != kParticleVersion)
    throw IoError("particle set: unsupported version " +
                  std::to_string(version) + " at byte offset 4 (expected " +
                  std::to_string(kParticleVersion) + ")");
  ParticleSet set;
  const uint32_t task = r.u32("task tag");
  set.task = static_cast<Task>(task);
  task_name(set.task);  // rejects unknown tags
  const uint32_t S = r.u32("sample count");
  set.n = static_cast<int>(r.u32("particle count"));
  set.d = static_cast<int>(r.u32("spatial dimension"));
  set.a = static_cast<int>(r.u32("attribute dimension"));
  r.u32("reserved field");
  set.seed = r.u64("seed");
  if (set.d <= 0) throw IoError("particle set: header has d == 0");

  const uint64_t expect = 40ull + 16ull * set.d +
                          4ull * S * set.n * (set.d + set.a);
  if (bytes.size() != expect)
    throw IoError("particle set: file length " + std::to_string(bytes.size()) +
                  " but header (S=" + std::to_string(S) + ", N=" +
                  std::to_string(set.n) + ", D=" + std::to_string(set.d) +
                  ", A=" + std::to_string(set.a) + ") requires " +
                  std::to_string(expect) + " bytes");

  set.bounds.resize(2, set.d);
  for (int row = 0; row < 2; ++row)
    for (int c = 0; c < set.d; ++c) set.bounds(row, c) = r.f64("bounds");
  set.configs.resize(S);
  for (uint32_t s = 0; s < S; ++s) {
    set.configs[s].resize(set.n, set.d);
    for (int i = 0; i < set.n; ++i)
      for (int c = 0; c < set.d; ++c)
        set.configs[s](i, c) = r.f32("positions");
  }
  if (set.a > 0) {
    set.attrs.resize(S);
    for (uint32_t s = 0; s < S; ++s) {
      set.attrs[s].resize(set.n, set.a);
      for (int i = 0; i < set.n; ++i)
        for (int c = 0; c < set.a; ++c) set.attrs[s](i, c) = r.f32("attributes");
    }
  }
  r.expect_end();
  set.validate();
  return set;
}

void write_particles(const ParticleSet& set, const std::string& path) {
  const std::vector<uint8_t> bytes = particles_to_bytes(set);
  spill(path, bytes.data(), bytes.size());
}

ParticleSet read_particles(const std::string& path) {
  return particles_from_bytes(slurp(path));
}

// --- checkpoints ----------------------------------------------------------

std::vector<uint8_t> checkpoint_to_bytes(const Checkpoint& ckpt) {
  Writer w;
  w.str("OGPN");
  w.u32(kCheckpointVersion);
  w.u64(ckpt.config_json.size());
  w.str(ckpt.config_json);
  w.u32(static_cast<uint32_t>(ckpt.blobs.size()));
  for (const auto& [name, blob] : ckpt.blobs) {
    uint64_t count = 1;
    for (uint32_t s : blob.shape) count *= s;
    if (count != blob.data.size())
      throw ConfigError("checkpoint blob '" + name + "': shape product " +
                        std::to_string(count) + " != data length " +
                        std::to_string(blob.data.size()));
    w.u32(static_cast<uint32_t>(name.size()));
    w.str(name);
    w.u32(static_cast<uint32_t>(blob.shape.size()));
    for (uint32_t s : blob.shape) w.u32(s);
    w.raw(blob.data.data(), 4 * blob.data.size());
  }
  return std::move(w.out);
}

Checkpoint checkpoint_from_bytes(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "checkpoint");
  const std::string magic = r.str(4, "magic");
  if (magic != "OGPN")
    throw IoError("checkpoint: bad magic at byte offset 0 (expected \"OGPN\", "
                  "got \"" + magic + "\")");
  const uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version) +
                  " at byte offset 4 (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  const uint64_t json_len = r.u64("configuration length");
  const size_t json_at = r.pos;
  ckpt.config_json = r.str(json_len, "configuration JSON");
  if (!nlohmann::json::accept(ckpt.config_json))
    throw IoError("checkpoint: configuration at byte offset " +
                  std::to_string(json_at) + " is not valid JSON");
  const uint32_t count = r.u32("blob count");
  ckpt.blobs.reserve(count);
  for (uint32_t b = 0; b < count; ++b) {
    const uint32_t name_len = r.u32("blob name length");
    std::string name = r.str(name_len, "blob name");
    Blob blob;
    const uint32_t ndim = r.u32("blob rank");
    blob.shape.resize(ndim);
    uint64_t n = 1;
    for (uint32_t k = 0; k < ndim; ++k) {
      blob.shape[k] = r.u32("blob shape");
      n *= blob.shape[k];
    }
    blob.data.resize(n);
    r.raw(blob.data.data(), 4 * n, "blob data");
    ckpt.blobs.emplace_back(std::move(name), std::move(blob));
  }
  r.expect_end();
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::vector<uint8_t> bytes = checkpoint_to_bytes(ckpt);
  spill(path, bytes.data(), bytes.size());
}

Checkpoint read_checkpoint(const std::string& path) {
  return checkpoint_from_bytes(slurp(path));
}

// --- CSV and text ---------------------------------------------------------

std::string csv_to_string(const std::vector<std::string>& header,
                          const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  for (size_t c = 0; c < header.size(); ++c) {
    if (c) out << ',';
    out << header[c];
  }
  out << '\n';
  char buf[64];
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw ConfigError("csv: row with " + std::to_string(row.size()) +
                        " fields under a " + std::to_string(header.size()) +
                        "-column header");
    for (size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      std::snprintf(buf, sizeof buf, "%.9g", row[c]);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  const std::string text = csv_to_string(header, rows);
  spill(path, text.data(), text.size());
}

void write_text(const std::string& path, const std::string& text) {
  spill(path, text.data(), text.size());
}

std::string read_text(const std::string& path) {
  const std::vector<uint8_t> bytes = slurp(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace ogpp::io
