// Persistence: particle-set files, network checkpoints, CSV/JSON exports.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ogpp/common.hpp"

namespace ogpp::io {

// Task tags stored in particle-set headers.
enum class Task : uint32_t {
  generic = 0,
  bluenoise = 1,
  dla = 2,
  thomson = 3,
  minsurf = 4,
};

std::string task_name(Task t);
Task task_from_name(const std::string& name);

// A dataset of S particle configurations, each N particles in D spatial
// dimensions with A per-particle attribute channels (A may be 0).  Values are
// held as doubles in memory; the on-disk payload is float32, so a round trip
// is bit-exact exactly when every value is float32-representable (true for
// anything previously read from disk).
struct ParticleSet {
  Task task = Task::generic;
  uint64_t seed = 0;
  int n = 0;  // particles per configuration
  int d = 0;  // spatial dimensions
  int a = 0;  // attribute channels
  Mat bounds;                // 2 x D: row 0 = lower corner, row 1 = upper
  std::vector<Mat> configs;  // S matrices, each N x D
  std::vector<Mat> attrs;    // S matrices, each N x A; empty when a == 0

  int samples() const { return static_cast<int>(configs.size()); }
  void validate() const;  // shape consistency; throws ConfigError
};

// Binary particle-set format, version 1 (all integers and floats
// little-endian):
//   "OGPP" | u32 version=1 | u32 task | u32 S | u32 N | u32 D | u32 A |
//   u32 reserved=0 | u64 seed | 2*D f64 bounds | S*N*D f32 positions |
//   S*N*A f32 attributes
// Total length: 40 + 16*D + 4*S*N*(D+A) bytes (40-byte header).
void write_particles(const ParticleSet& set, const std::string& path);
ParticleSet read_particles(const std::string& path);

// Serialize to / parse from an in-memory byte buffer (the file operations
// are thin wrappers; the buffer forms are what the format tests pin down).
std::vector<uint8_t> particles_to_bytes(const ParticleSet& set);
ParticleSet particles_from_bytes(const std::vector<uint8_t>& bytes);

// Named float32 tensor used by checkpoints.
struct Blob {
  std::vector<uint32_t> shape;
  std::vector<float> data;  // row-major, size = product(shape)
};

// Checkpoint payload: a JSON configuration string plus ordered named blobs.
struct Checkpoint {
  std::string config_json;
  std::vector<std::pair<std::string, Blob>> blobs;
};

// Binary checkpoint format, version 1 (little-endian):
//   "OGPN" | u32 version=1 | u64 json_len | json bytes | u32 blob_count |
//   per blob: u32 name_len | name | u32 ndim | ndim*u32 shape | f32 data
// The JSON header must parse; blob data length must match its shape.
void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);
std::vector<uint8_t> checkpoint_to_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::vector<uint8_t>& bytes);

// CSV export: header row then one row per entry, %.9g formatting, comma
// separator.  Row lengths must match the header.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
std::string csv_to_string(const std::vector<std::string>& header,
                          const std::vector<std::vector<double>>& rows);

// Whole-file text helpers (used for JSON manifests and reports).
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace ogpp::io
