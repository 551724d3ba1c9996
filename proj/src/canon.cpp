// Canonicalization maps: space-filling-curve orderings, PCA pose
// normalization, and counterclockwise polygon ordering.
//
// Exactness note: G-invariance is required *exactly* (bit-for-bit), so every
// quantity that feeds an ordering decision is computed as a function of the
// row multiset only. Per-axis min/max are order-free reductions, per-row
// rescaling involves no cross-row arithmetic, and the sort comparator is a
// total order (index, then raw coordinates). Pose normalization accumulates
// its centroid and covariance in lexicographic row order for the same reason.

#include "ogpp/canon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ogpp::canon {

namespace {

bool lex_less_row(const Mat& a, int i, const Mat& b, int j) {
  for (int c = 0; c < a.cols(); ++c) {
    if (a(i, c) < b(j, c)) return true;
    if (a(i, c) > b(j, c)) return false;
  }
  return false;
}

}  // namespace

const char* curve_name(Curve c) {
  switch (c) {
    case Curve::none: return "none";
    case Curve::hilbert: return "hilbert";
    case Curve::morton: return "morton";
    case Curve::moore: return "moore";
    case Curve::polygon_ccw: return "polygon_ccw";
  }
  return "?";
}

Curve curve_from_name(const std::string& name) {
  if (name == "none") return Curve::none;
  if (name == "hilbert") return Curve::hilbert;
  if (name == "morton") return Curve::morton;
  if (name == "moore") return Curve::moore;
  if (name == "polygon_ccw") return Curve::polygon_ccw;
  throw ConfigError("unknown canonicalization curve: " + name);
}

void CanonSpec::validate() const {
  if (bits < 1) throw ConfigError("CanonSpec.bits must be >= 1");
  if (dims != 2 && dims != 3 && dims != 6)
    throw ConfigError("CanonSpec.dims must be 2, 3, or 6");
  if (static_cast<long long>(bits) * dims > 63)
    throw ConfigError("CanonSpec: bits * dims must be <= 63");
  if (curve == Curve::polygon_ccw && dims != 2)
    throw ConfigError("polygon_ccw requires dims = 2");
  if (curve == Curve::moore && dims != 2)
    throw ConfigError("moore curve is implemented for dims = 2 only");
}

Permutation::Permutation(std::size_t n) : map(n) {
  std::iota(map.begin(), map.end(), 0u);
}

bool Permutation::is_valid() const {
  std::vector<bool> seen(map.size(), false);
  for (std::uint32_t v : map) {
    if (v >= map.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

Permutation Permutation::inverse() const {
  Permutation inv;
  inv.map.resize(map.size());
  for (std::size_t k = 0; k < map.size(); ++k) inv.map[map[k]] = k;
  return inv;
}

Mat Permutation::apply(const Mat& rows) const {
  if (static_cast<std::size_t>(rows.rows()) != map.size())
    throw DomainError("Permutation.apply: row count mismatch");
  Mat out(rows.rows(), rows.cols());
  for (std::size_t k = 0; k < map.size(); ++k)
    out.row(k) = rows.row(map[k]);
  return out;
}

// --- space-filling curves ---------------------------------------------------

// Skilling's transpose construction ("Programming the Hilbert curve"):
// converts axis coordinates to the transposed Hilbert index in place, then
// interleaves bits with axis 0 contributing the most significant bit of each
// group. At bits=1, dims=2 the cell order is (0,0),(0,1),(1,1),(1,0).
std::uint64_t hilbert_cell_index(std::vector<std::uint32_t> X, int bits) {
  const int n = static_cast<int>(X.size());
  for (std::uint32_t Q = 1u << (bits - 1); Q > 1; Q >>= 1) {
    const std::uint32_t P = Q - 1;
    for (int i = 0; i < n; ++i) {
      if (X[i] & Q) {
        X[0] ^= P;  // invert low bits of axis 0
      } else {
        const std::uint32_t t = (X[0] ^ X[i]) & P;
        X[0] ^= t;
        X[i] ^= t;  // exchange low bits with axis 0
      }
    }
  }
  for (int i = 1; i < n; ++i) X[i] ^= X[i - 1];  // Gray encode
  std::uint32_t t = 0;
  for (std::uint32_t Q = 1u << (bits - 1); Q > 1; Q >>= 1)
    if (X[n - 1] & Q) t ^= Q - 1;
  for (int i = 0; i < n; ++i) X[i] ^= t;

  std::uint64_t h = 0;
  for (int j = bits - 1; j >= 0; --j)
    for (int i = 0; i < n; ++i)
      h = (h << 1) | ((X[i] >> j) & 1u);
  return h;
}

std::uint64_t morton_cell_index(const std::vector<std::uint32_t>& cell,
                                int bits) {
  const int n = static_cast<int>(cell.size());
  std::uint64_t h = 0;
  for (int j = bits - 1; j >= 0; --j)
    for (int i = 0; i < n; ++i)
      h = (h << 1) | ((cell[i] >> j) & 1u);
  return h;
}

// Moore curve: the closed-loop Hilbert variant (2D). Four order-(bits-1)
// Hilbert sub-curves fill the quadrants in the order bottom-left, top-left,
// top-right, bottom-right; left-half sub-curves are rotated 90 degrees
// counterclockwise and right-half ones clockwise, which makes the traversal a
// single closed loop entering at (2^(bits-1)-1, 0).
std::uint64_t moore_cell_index(std::uint32_t x, std::uint32_t y, int bits) {
  if (bits == 1) return hilbert_cell_index({x, y}, 1);
  const std::uint32_t half = 1u << (bits - 1);
  const bool qx = x >= half, qy = y >= half;
  const std::uint64_t quadrant = qx ? (qy ? 2 : 3) : (qy ? 1 : 0);
  const std::uint32_t u = x & (half - 1), v = y & (half - 1);
  std::uint32_t su, sv;
  if (!qx) {
    su = v;
    sv = half - 1 - u;
  } else {
    su = half - 1 - v;
    sv = u;
  }
  return quadrant * (static_cast<std::uint64_t>(half) * half) +
         hilbert_cell_index({su, sv}, bits - 1);
}

namespace {

std::uint64_t cell_index(const std::vector<std::uint32_t>& cell,
                         const CanonSpec& spec) {
  switch (spec.curve) {
    case Curve::hilbert: return hilbert_cell_index(cell, spec.bits);
    case Curve::morton: return morton_cell_index(cell, spec.bits);
    case Curve::moore: return moore_cell_index(cell[0], cell[1], spec.bits);
    default:
      throw ConfigError("sfc_index requires a space-filling curve");
  }
}

}  // namespace

std::uint64_t sfc_index(const Vec& point, const CanonSpec& spec) {
  spec.validate();
  if (spec.curve == Curve::none || spec.curve == Curve::polygon_ccw)
    throw ConfigError("sfc_index requires curve in {hilbert, morton, moore}");
  if (point.size() != spec.dims)
    throw ConfigError("sfc_index: point dimension does not match spec.dims");

  const std::uint32_t cells = 1u << spec.bits;
  std::vector<std::uint32_t> cell(spec.dims);
  for (int d = 0; d < spec.dims; ++d) {
    double p = point[d];
    if (p < 0.0) {
      if (p < -1e-9) throw DomainError("sfc_index: coordinate below 0");
      p = 0.0;
    }
    if (p >= 1.0) {
      if (p >= 1.0 + 1e-9) throw DomainError("sfc_index: coordinate >= 1");
      p = std::nextafter(1.0, 0.0);
    }
    cell[d] = std::min<std::uint32_t>(
        static_cast<std::uint32_t>(p * static_cast<double>(cells)),
        cells - 1);
  }
  return cell_index(cell, spec);
}

// --- canonicalize -----------------------------------------------------------

CanonResult canonicalize(const Mat& config, const Mat* attrs,
                         const CanonSpec& spec) {
  spec.validate();
  if (!config.allFinite())
    throw DomainError("canonicalize: non-finite coordinates");
  if (attrs && attrs->rows() != config.rows())
    throw DomainError("canonicalize: attrs row count mismatch");

  const int n = static_cast<int>(config.rows());
  CanonResult result;
  if (spec.curve == Curve::none) {
    result.config = config;
    result.attrs = attrs ? *attrs : Mat(0, 0);
    result.perm = Permutation(n);
    return result;
  }

  if (spec.curve == Curve::polygon_ccw) {
    if (!attrs || attrs->cols() < 1)
      throw ConfigError(
          "canonicalize: polygon_ccw needs an anchor-flag attrs column");
    std::vector<int> anchor_rows;
    for (int i = 0; i < n; ++i)
      if ((*attrs)(i, 0) > 0.5) anchor_rows.push_back(i);
    if (anchor_rows.empty())
      throw DomainError("canonicalize: polygon_ccw found no anchor rows");
    Mat anchors(static_cast<int>(anchor_rows.size()), 2);
    for (std::size_t k = 0; k < anchor_rows.size(); ++k)
      anchors.row(static_cast<int>(k)) = config.row(anchor_rows[k]);
    auto [boundary, perm] = polygon_ccw_canon(config, anchors);
    result.config = std::move(boundary);
    result.attrs = perm.apply(*attrs);
    result.perm = std::move(perm);
    return result;
  }

  // Build the matrix whose rows are SFC-indexed. dims=6 concatenates
  // positions (3) and attrs (3); otherwise positions alone must match dims.
  Mat key;
  if (spec.dims == 6) {
    if (config.cols() != 3 || !attrs || attrs->cols() != 3)
      throw ConfigError(
          "canonicalize: dims=6 requires 3-D positions and 3-D attrs");
    key.resize(n, 6);
    key.leftCols(3) = config;
    key.rightCols(3) = *attrs;
  } else {
    if (config.cols() != spec.dims)
      throw ConfigError("canonicalize: config dimension != spec.dims");
    key = config;
  }

  if (spec.pose_normalize) {
    // The ordering (not the output rows) is decided in the normalized pose;
    // direction-valued attrs rotate with the positions.
    auto [posed, frame] = pose_normalize(config);
    if (spec.dims == 6) {
      key.leftCols(3) = posed;
      key.rightCols(3) = *attrs * frame.rotation;
    } else {
      key = posed;
    }
  }

  // Per-axis min-max rescale into cell coordinates. min/max are order-free,
  // so the cells are an exact function of the row multiset.
  const int kd = static_cast<int>(key.cols());
  const std::uint32_t cells = 1u << spec.bits;
  Vec lo = key.colwise().minCoeff();
  Vec hi = key.colwise().maxCoeff();
  std::vector<std::uint64_t> index(n);
  std::vector<std::uint32_t> cell(kd);
  bool warned = false;
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < kd; ++d) {
      const double extent = hi[d] - lo[d];
      double s;
      if (extent == 0.0) {
        s = 0.5;  // degenerate axis: every row maps to the middle cell
        if (!warned) {
          warn("canonicalize: zero-extent axis " + std::to_string(d) +
               " mapped to 0.5");
          warned = true;
        }
      } else {
        s = (key(i, d) - lo[d]) / extent;
      }
      cell[d] = std::min<std::uint32_t>(
          static_cast<std::uint32_t>(s * static_cast<double>(cells)),
          cells - 1);
    }
    index[i] = cell_index(cell, spec);
  }

  // Sort by (index, raw position row, raw attrs row): a total order on
  // distinct rows, so the sorted sequence is permutation-invariant.
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              if (index[a] != index[b]) return index[a] < index[b];
              if (lex_less_row(config, a, config, b)) return true;
              if (lex_less_row(config, b, config, a)) return false;
              if (attrs) {
                if (lex_less_row(*attrs, a, *attrs, b)) return true;
                if (lex_less_row(*attrs, b, *attrs, a)) return false;
              }
              return false;
            });

  result.perm.map = std::move(order);
  result.config = result.perm.apply(config);
  result.attrs = attrs ? result.perm.apply(*attrs) : Mat(0, 0);
  return result;
}

// --- pose normalization -----------------------------------------------------

std::pair<Mat, PoseFrame> pose_normalize(const Mat& config) {
  const int n = static_cast<int>(config.rows());
  const int d = static_cast<int>(config.cols());
  if (n < d) throw DomainError("pose_normalize requires N >= D");
  if (!config.allFinite())
    throw DomainError("pose_normalize: non-finite coordinates");

  // Lexicographic accumulation order makes centroid and covariance exact
  // functions of the row multiset (fp addition is not associative).
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return lex_less_row(config, a, config, b);
  });

  Vec center = Vec::Zero(d);
  for (int i : order) center += config.row(i).transpose();
  center /= static_cast<double>(n);

  Mat cov = Mat::Zero(d, d);
  for (int i : order) {
    const Vec r = config.row(i).transpose() - center;
    cov += r * r.transpose();
  }
  cov /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.info() != Eigen::Success)
    throw ConvergenceError("pose_normalize: eigendecomposition failed");

  // Eigen returns ascending eigenvalues; we want descending.
  Mat rotation(d, d);
  for (int c = 0; c < d; ++c) rotation.col(c) = eig.eigenvectors().col(d - 1 - c);
  Vec values(d);
  for (int c = 0; c < d; ++c) values[c] = eig.eigenvalues()[d - 1 - c];
  for (int c = 0; c + 1 < d; ++c) {
    if (values[c] - values[c + 1] < 1e-8)
      warn("pose_normalize: eigenvalue gap below 1e-8 (axes " +
           std::to_string(c) + "," + std::to_string(c + 1) + ")");
  }

  // Sign convention: the data projection of largest magnitude along each
  // axis is made positive. Projections are invariant under rigid motions of
  // the input (unlike the eigenvector entries themselves), which is what
  // makes the normalized pose rotation-invariant. The scan runs in
  // lexicographic row order so it is also an exact function of the row
  // multiset. det = +1 is then forced by flipping the last axis if needed.
  for (int c = 0; c < d; ++c) {
    double extreme = 0.0;
    for (int i : order) {
      const double p =
          (config.row(i).transpose() - center).dot(rotation.col(c));
      if (std::abs(p) > std::abs(extreme)) extreme = p;
    }
    if (extreme < 0.0) rotation.col(c) = -rotation.col(c);
  }
  if (rotation.determinant() < 0.0) rotation.col(d - 1) = -rotation.col(d - 1);

  PoseFrame frame{center, rotation};
  Mat out = (config.rowwise() - center.transpose()) * rotation;
  return {std::move(out), std::move(frame)};
}

// --- polygon canonicalization ----------------------------------------------

double polygon_signed_area(const Mat& boundary) {
  const int n = static_cast<int>(boundary.rows());
  double area2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    area2 += boundary(i, 0) * boundary(j, 1) - boundary(j, 0) * boundary(i, 1);
  }
  return 0.5 * area2;
}

std::pair<Mat, Permutation> polygon_ccw_canon(const Mat& boundary,
                                              const Mat& anchors) {
  const int n = static_cast<int>(boundary.rows());
  if (n < 3 || boundary.cols() != 2)
    throw DomainError("polygon_ccw_canon: boundary must be N x 2 with N >= 3");
  if (anchors.rows() < 1 || anchors.cols() != 2)
    throw DomainError("polygon_ccw_canon: anchors must be M x 2 with M >= 1");

  const double area = polygon_signed_area(boundary);
  if (std::abs(area) < 1e-12)
    throw DomainError("polygon_ccw_canon: degenerate polygon (zero area)");

  // Left-bottom anchor: lexicographic min on (x, y). Each anchor must sit on
  // the boundary within 1e-6.
  int lb = 0;
  for (int m = 1; m < anchors.rows(); ++m)
    if (lex_less_row(anchors, m, anchors, lb)) lb = m;
  for (int m = 0; m < anchors.rows(); ++m) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      best = std::min(best,
                      (boundary.row(i) - anchors.row(m)).squaredNorm());
    if (best > 1e-6 * 1e-6)
      throw DomainError("polygon_ccw_canon: anchor not on the boundary");
  }

  // Start vertex: boundary point nearest the left-bottom anchor; distance
  // ties break on the point value so cyclic relabelings cannot change the
  // canonical result.
  int start = 0;
  double start_d2 = (boundary.row(0) - anchors.row(lb)).squaredNorm();
  for (int i = 1; i < n; ++i) {
    const double d2 = (boundary.row(i) - anchors.row(lb)).squaredNorm();
    if (d2 < start_d2 ||
        (d2 == start_d2 && lex_less_row(boundary, i, boundary, start))) {
      start = i;
      start_d2 = d2;
    }
  }

  const int step = area > 0.0 ? 1 : -1;
  Permutation perm;
  perm.map.resize(n);
  for (int k = 0; k < n; ++k)
    perm.map[k] = static_cast<std::uint32_t>(((start + step * k) % n + n) % n);
  return {perm.apply(boundary), std::move(perm)};
}

}  // namespace ogpp::canon
