#include "tabdpt/contam_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "tabdpt/digest.hpp"

namespace tabdpt {

namespace {

// Values of a column, with categorical cells replaced by their sorted-category code.
std::vector<double> column_values(const RawColumn& col) {
  if (col.kind == ColumnKind::numeric) return col.numbers;
  std::vector<std::string> cats;
  for (const auto& c : col.cells)
    if (c) cats.push_back(*c);
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  std::vector<double> out;
  out.reserve(col.cells.size());
  for (const auto& c : col.cells) {
    if (!c) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.push_back(static_cast<double>(std::lower_bound(cats.begin(), cats.end(), *c) - cats.begin()));
  }
  return out;
}

std::vector<double> present(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v)
    if (!std::isnan(x)) out.push_back(x);
  return out;
}

UnivariateFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  double n = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isnan(x[i]) && !std::isnan(y[i])) {
      n += 1.0;
      sx += x[i];
      sy += y[i];
    }
  if (n == 0.0) return {};
  const double mx = sx / n, my = sy / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isnan(x[i]) && !std::isnan(y[i])) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
    }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return {slope, my - slope * mx};
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <std::size_t Dim>
std::size_t count_matches(const std::vector<std::array<double, Dim>>& train_pts,
                          const std::vector<std::array<double, Dim>>& eval_pts, double tol) {
  if (train_pts.empty()) return 0;
  const KdTree<Dim> tree(train_pts);
  std::size_t n = 0;
  for (const auto& q : eval_pts) n += tree.any_within_relative(q, tol);
  return n;
}

template <std::size_t Dim>
std::vector<std::array<double, Dim>> stat_points(const DatasetFingerprint& fp, bool with_fit) {
  std::vector<std::array<double, Dim>> out;
  for (std::size_t f = 0; f < fp.features.size(); ++f) {
    const auto& s = fp.features[f];
    std::array<double, Dim> p{};
    if constexpr (Dim == 2) {
      p = {s.skewness, s.kurtosis};
    } else {
      p[0] = s.mean;
      p[1] = s.variance;
      p[2] = s.skewness;
      p[3] = s.kurtosis;
      if constexpr (Dim == 6) {
        if (with_fit) {
          p[4] = (*fp.fits)[f].slope;
          p[5] = (*fp.fits)[f].intercept;
        }
      }
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace

FeatureStats feature_stats(const std::vector<double>& values) {
  const auto v = present(values);
  FeatureStats s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.variance = m2;
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2);
  }
  return s;
}

std::string canonical_serialization(const RawTable& raw) {
  std::vector<std::size_t> order(raw.n_cols());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return raw.columns[a].name < raw.columns[b].name; });
  std::string out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k) out += ',';
    out += raw.columns[order[k]].name;
  }
  out += '\n';
  for (std::size_t r = 0; r < raw.n_rows; ++r) {
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k) out += ',';
      const auto& col = raw.columns[order[k]];
      if (!col.cells[r]) continue;
      out += col.kind == ColumnKind::numeric ? format_number(col.numbers[r]) : *col.cells[r];
    }
    out += '\n';
  }
  return out;
}

DatasetFingerprint fingerprint(const RawTable& raw) {
  DatasetFingerprint fp;
  fp.name = raw.name;
  fp.content_hash = sha256_hex(canonical_serialization(raw));
  fp.n_rows = raw.n_rows;
  fp.n_cols = raw.n_cols();
  std::vector<double> target;
  if (raw.target) {
    target = column_values(raw.columns[*raw.target]);
    const auto ts = feature_stats(target);
    fp.target_mean = ts.mean;
    fp.target_var = ts.variance;
    fp.fits.emplace();
  }
  for (std::size_t c = 0; c < raw.n_cols(); ++c) {
    if (raw.target && c == *raw.target) continue;
    const auto values = column_values(raw.columns[c]);
    fp.feature_names.push_back(raw.columns[c].name);
    fp.features.push_back(feature_stats(values));
    if (fp.fits) fp.fits->push_back(least_squares(values, target));
  }
  return fp;
}

std::vector<DatasetFingerprint> fingerprint_all(const std::vector<RawTable>& tables, std::size_t workers) {
  std::vector<DatasetFingerprint> out(tables.size());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(tables.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < tables.size(); i += workers) out[i] = fingerprint(tables[i]);
      });
  }
  return out;
}

bool within_relative(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

template <std::size_t Dim>
KdTree<Dim>::KdTree(std::vector<Point> points) : points_(std::move(points)) {
  std::vector<std::size_t> ids(points_.size());
  std::iota(ids.begin(), ids.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(ids, 0, ids.size(), 0);
}

template <std::size_t Dim>
std::ptrdiff_t KdTree<Dim>::build(std::vector<std::size_t>& ids, std::size_t lo, std::size_t hi, std::size_t depth) {
  if (lo >= hi) return -1;
  const std::size_t axis = depth % Dim;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(ids.begin() + static_cast<std::ptrdiff_t>(lo), ids.begin() + static_cast<std::ptrdiff_t>(mid),
                   ids.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
                   });
  const auto self = static_cast<std::ptrdiff_t>(nodes_.size());
  nodes_.push_back({ids[mid], axis, -1, -1});
  const auto left = build(ids, lo, mid, depth + 1);
  const auto right = build(ids, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(self)].left = left;
  nodes_[static_cast<std::size_t>(self)].right = right;
  return self;
}

template <std::size_t Dim>
void KdTree<Dim>::nearest_rec(std::ptrdiff_t node, const Point& q, std::size_t& best, double& best_d2) const {
  if (node < 0) return;
  const Node& nd = nodes_[static_cast<std::size_t>(node)];
  const Point& p = points_[nd.point];
  double d2 = 0.0;
  for (std::size_t k = 0; k < Dim; ++k) d2 += (p[k] - q[k]) * (p[k] - q[k]);
  if (d2 < best_d2 || (d2 == best_d2 && nd.point < best)) {
    best_d2 = d2;
    best = nd.point;
  }
  const double diff = q[nd.axis] - p[nd.axis];
  const auto near = diff < 0.0 ? nd.left : nd.right;
  const auto far = diff < 0.0 ? nd.right : nd.left;
  nearest_rec(near, q, best, best_d2);
  if (diff * diff <= best_d2) nearest_rec(far, q, best, best_d2);
}

template <std::size_t Dim>
std::optional<std::size_t> KdTree<Dim>::nearest(const Point& q) const {
  if (root_ < 0) return std::nullopt;
  std::size_t best = points_.size();
  double best_d2 = std::numeric_limits<double>::infinity();
  nearest_rec(root_, q, best, best_d2);
  return best;
}

template <std::size_t Dim>
bool KdTree<Dim>::box_rec(std::ptrdiff_t node, const Point& lo, const Point& hi, const Point& q, double tol) const {
  if (node < 0) return false;
  const Node& nd = nodes_[static_cast<std::size_t>(node)];
  const Point& p = points_[nd.point];
  bool inside = true;
  for (std::size_t k = 0; k < Dim && inside; ++k) inside = within_relative(p[k], q[k], tol);
  if (inside) return true;
  // Points equal to the split value may sit on either side.
  if (lo[nd.axis] <= p[nd.axis] && box_rec(nd.left, lo, hi, q, tol)) return true;
  if (hi[nd.axis] >= p[nd.axis] && box_rec(nd.right, lo, hi, q, tol)) return true;
  return false;
}

template <std::size_t Dim>
bool KdTree<Dim>::any_within_relative(const Point& q, double tol) const {
  if (root_ < 0) return false;
  // |p - q| <= tol max(|p|, |q|) implies |p - q| <= tol |q| / (1 - tol).
  Point lo, hi;
  for (std::size_t k = 0; k < Dim; ++k) {
    const double h = tol * std::abs(q[k]) / (1.0 - tol) * (1.0 + 1e-12);
    lo[k] = q[k] - h;
    hi[k] = q[k] + h;
  }
  return box_rec(root_, lo, hi, q, tol);
}

template class KdTree<2>;
template class KdTree<4>;
template class KdTree<6>;

std::vector<SimilarityReport> compare_all(const std::vector<DatasetFingerprint>& train,
                                          const std::vector<DatasetFingerprint>& eval, const CompareOptions& opts) {
  if (train.empty() || eval.empty()) throw data_error("compare_all: fingerprint lists must be non-empty");
  if (!(opts.tolerance > 0.0 && opts.tolerance < 1.0)) throw config_error("compare_all: tolerance must be in (0, 1)");
  std::vector<SimilarityReport> out;
  for (const auto& a : train)
    for (const auto& b : eval) {
      SimilarityReport r;
      r.train_name = a.name;
      r.eval_name = b.name;
      r.hash_match = a.content_hash == b.content_hash;
      r.name_match = a.name == b.name;
      r.shape_match = a.n_rows == b.n_rows && a.n_cols == b.n_cols;
      r.eval_features = b.features.size();
      const bool fits = a.fits.has_value() && b.fits.has_value();
      if (fits)
        r.stat_matches = count_matches<6>(stat_points<6>(a, true), stat_points<6>(b, true), opts.tolerance);
      else
        r.stat_matches = count_matches<4>(stat_points<4>(a, false), stat_points<4>(b, false), opts.tolerance);
      r.scaled_matches = count_matches<2>(stat_points<2>(a, false), stat_points<2>(b, false), opts.tolerance);
      if (r.eval_features) {
        const double n = static_cast<double>(r.eval_features);
        r.match_fraction = std::max(static_cast<double>(r.stat_matches), static_cast<double>(r.scaled_matches)) / n;
      }
      if (r.hash_match) r.reasons.push_back("hash");
      if (r.name_match) r.reasons.push_back("name");
      if (r.shape_match) r.reasons.push_back("shape");
      if (r.eval_features && static_cast<double>(r.stat_matches) / static_cast<double>(r.eval_features) > opts.flag_fraction)
        r.reasons.push_back("stats");
      if (r.eval_features &&
          static_cast<double>(r.scaled_matches) / static_cast<double>(r.eval_features) > opts.flag_fraction)
        r.reasons.push_back("scale_invariant_stats");
      r.flagged = !r.reasons.empty();
      out.push_back(std::move(r));
    }
  return out;
}

std::string format_report_csv(const std::vector<SimilarityReport>& reports) {
  std::ostringstream os;
  os.precision(6);
  os << "train_ds,eval_ds,flag_reason,match_fraction\n";
  for (const auto& r : reports) {
    os << r.train_name << ',' << r.eval_name << ',';
    if (r.reasons.empty()) os << "none";
    for (std::size_t i = 0; i < r.reasons.size(); ++i) os << (i ? "+" : "") << r.reasons[i];
    os << ',' << r.match_fraction << '\n';
  }
  return os.str();
}

}  // namespace tabdpt
