#pragma once
// Orbit-space canonicalization: a deterministic, permutation-invariant choice
// of particle ordering. Orderings come from space-filling curves (Hilbert,
// Morton/Z-order, Moore) over quantized coordinates, or from counterclockwise
// traversal for polygon boundaries. Optionally the ordering is computed in a
// PCA-normalized pose so it is also stable under rigid motions.

#include "ogpp/common.hpp"

#include <cstdint>
#include <optional>
#include <utility>

namespace ogpp::canon {

enum class Curve { none, hilbert, morton, moore, polygon_ccw };

const char* curve_name(Curve c);
Curve curve_from_name(const std::string& name);

struct CanonSpec {
  Curve curve = Curve::hilbert;
  int bits = 16;   // quantization bits per axis; bits * dims must fit 63 bits
  int dims = 2;    // 2 or 3 = positions only; 6 = positions + normals jointly
  bool pose_normalize = false;

  void validate() const;
};

// A bijection on {0..N-1}. Applying it to a row matrix X yields a matrix
// whose row k is X.row(map[k]).
struct Permutation {
  std::vector<std::uint32_t> map;

  Permutation() = default;
  explicit Permutation(std::size_t n);  // identity
  std::size_t size() const { return map.size(); }
  bool is_valid() const;
  Permutation inverse() const;
  Mat apply(const Mat& rows) const;
};

// Rigid frame removed by pose normalization: x' = (x - center)^T * rotation.
struct PoseFrame {
  Vec center;
  Mat rotation;  // orthogonal, det +1, columns ordered by descending variance
};

// Cell index along the chosen curve at resolution 2^bits per axis.
// Point coordinates must lie in [0,1) up to a 1e-9 clamping tolerance.
std::uint64_t sfc_index(const Vec& point, const CanonSpec& spec);

// Low-level cell indexers (exposed for the exhaustive adjacency tests).
std::uint64_t hilbert_cell_index(std::vector<std::uint32_t> cell, int bits);
std::uint64_t morton_cell_index(const std::vector<std::uint32_t>& cell,
                                int bits);
std::uint64_t moore_cell_index(std::uint32_t x, std::uint32_t y, int bits);

struct CanonResult {
  Mat config;        // input rows, reordered
  Mat attrs;         // attrs rows under the same permutation (0x0 if absent)
  Permutation perm;  // config.row(k) == input.row(perm.map[k])
};

// Sorts rows by ascending SFC index of the per-axis min-max rescaled
// coordinates (positions alone for dims=2/3; positions and attrs concatenated
// for dims=6). Ties are broken by lexicographic comparison of the raw rows, so
// the result is an exact function of the row multiset: permuting the input
// never changes the output. curve=none returns the input unchanged;
// curve=polygon_ccw dispatches to polygon_ccw_canon with anchors taken from
// rows whose attrs column 0 is > 0.5.
CanonResult canonicalize(const Mat& config, const Mat* attrs,
                         const CanonSpec& spec);

// Centers the configuration and rotates it into its PCA eigenbasis (columns by
// descending eigenvalue). Sign convention: along each principal axis the data
// projection of largest magnitude is made positive (a rigid-motion-invariant
// choice); determinant is forced to +1 by flipping the last axis if necessary.
// Accumulations run in lexicographic row order so the frame is an exact
// function of the row multiset.
std::pair<Mat, PoseFrame> pose_normalize(const Mat& config);

// Reorders a simple closed polyline so that index 0 is the vertex nearest the
// left-bottom anchor (lexicographic min among anchors) and traversal is
// counterclockwise (positive signed area).
std::pair<Mat, Permutation> polygon_ccw_canon(const Mat& boundary,
                                              const Mat& anchors);

// Signed polygon area (shoelace) of a closed polyline in row order.
double polygon_signed_area(const Mat& boundary);

}  // namespace ogpp::canon
