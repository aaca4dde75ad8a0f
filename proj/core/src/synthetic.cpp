#include "tabdpt/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace tabdpt::synthetic {

namespace {

std::vector<std::string> names(std::size_t f, const std::string& prefix = "x") {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < f; ++j) out.push_back(prefix + std::to_string(j));
  return out;
}

MatrixXdR gaussian(std::size_t n, std::size_t f, Rng& rng) {
  std::normal_distribution<double> z;
  MatrixXdR X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = z(rng);
  return X;
}

Eigen::VectorXd unit_direction(std::size_t f, Rng& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd d(static_cast<Eigen::Index>(f));
  do {
    for (auto& v : d) v = z(rng);
  } while (d.norm() < 1e-9);
  return d.normalized();
}

}  // namespace

void make_categorical(RawTable& table, std::size_t col) {
  auto& c = table.columns.at(col);
  c.kind = ColumnKind::categorical;
  for (std::size_t i = 0; i < table.n_rows; ++i)
    if (c.cells[i]) c.cells[i] = "c" + std::to_string(static_cast<long long>(std::llround(c.numbers[i])));
  c.numbers.clear();
}

RawTable two_gaussian(std::size_t n, std::size_t f, std::uint64_t seed, double separation) {
  Rng rng(seed);
  const Eigen::VectorXd dir = unit_direction(f, rng);
  MatrixXdR X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f + 1));
  X.leftCols(static_cast<Eigen::Index>(f)) = gaussian(n, f, rng);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double label = static_cast<double>(i % 2);
    X.row(i).head(static_cast<Eigen::Index>(f)) += ((label - 0.5) * separation) * dir.transpose();
    X(i, static_cast<Eigen::Index>(f)) = label;
  }
  auto cols = names(f);
  cols.push_back("label");
  auto t = RawTable::from_matrix("two_gaussian_" + std::to_string(seed), cols, X, f);
  make_categorical(t, f);
  return t;
}

RawTable linear_regression(std::size_t n, std::size_t f, std::uint64_t seed, double noise) {
  Rng rng(seed);
  const Eigen::VectorXd w = unit_direction(f, rng);
  std::normal_distribution<double> z;
  MatrixXdR X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f + 1));
  X.leftCols(static_cast<Eigen::Index>(f)) = gaussian(n, f, rng);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    X(i, static_cast<Eigen::Index>(f)) = X.row(i).head(static_cast<Eigen::Index>(f)).dot(w) + noise * z(rng);
  auto cols = names(f);
  cols.push_back("y");
  return RawTable::from_matrix("linear_" + std::to_string(seed), cols, X, f);
}

RawTable latent_factor(std::size_t n, std::size_t f, std::size_t factors, std::uint64_t seed, double noise) {
  Rng rng(seed);
  const MatrixXdR Z = gaussian(n, factors, rng);
  const MatrixXdR W = gaussian(factors, f, rng) / std::sqrt(static_cast<double>(factors));
  MatrixXdR X = Z * W + noise * gaussian(n, f, rng);
  return RawTable::from_matrix("latent_" + std::to_string(seed), names(f), X);
}

RawTable clusters(std::size_t n, std::size_t f, std::size_t k, std::uint64_t seed, double spread) {
  Rng rng(seed);
  const MatrixXdR centers = spread * gaussian(k, f, rng);
  MatrixXdR X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f + 1));
  X.leftCols(static_cast<Eigen::Index>(f)) = gaussian(n, f, rng);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto c = uniform_int<Eigen::Index>(rng, 0, static_cast<Eigen::Index>(k) - 1);
    X.row(i).head(static_cast<Eigen::Index>(f)) += centers.row(c);
    X(i, static_cast<Eigen::Index>(f)) = static_cast<double>(c);
  }
  auto cols = names(f);
  cols.push_back("cluster");
  auto t = RawTable::from_matrix("clusters_" + std::to_string(seed), cols, X, f);
  make_categorical(t, f);
  return t;
}

RawTable nonlinear(std::size_t n, std::size_t f, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t m = std::max<std::size_t>(2, f / 2);
  std::normal_distribution<double> z;
  MatrixXdR X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  X.leftCols(static_cast<Eigen::Index>(std::min(m, f))) = gaussian(n, std::min(m, f), rng);
  for (std::size_t j = m; j < f; ++j) {
    const auto a = static_cast<Eigen::Index>(uniform_int<std::size_t>(rng, 0, m - 1));
    const auto b = static_cast<Eigen::Index>(uniform_int<std::size_t>(rng, 0, m - 1));
    const int form = uniform_int<int>(rng, 0, 3);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double xa = X(i, a), xb = X(i, b);
      double v = 0.0;
      switch (form) {
        case 0: v = xa * xb; break;
        case 1: v = std::sin(2.0 * xa) + 0.5 * xb; break;
        case 2: v = xa > 0.0 ? xb : -xb; break;
        default: v = xa * xa - xb; break;
      }
      X(i, static_cast<Eigen::Index>(j)) = v + 0.1 * z(rng);
    }
  }
  return RawTable::from_matrix("nonlinear_" + std::to_string(seed), names(f), X);
}

RawTable random_table(std::size_t n, std::size_t f, std::uint64_t seed) {
  Rng rng(seed);
  return RawTable::from_matrix("random_" + std::to_string(seed), names(f), gaussian(n, f, rng));
}

RawTable interaction(std::size_t n, std::size_t f, std::uint64_t seed, int form) {
  if (f < 2) throw config_error("interaction: need at least 2 features");
  Rng rng(seed);
  std::normal_distribution<double> z;
  MatrixXdR X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f + 1));
  X.leftCols(static_cast<Eigen::Index>(f)) = gaussian(n, f, rng);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double a = X(i, 0), b = X(i, 1);
    double y = 0.0;
    switch (form) {
      case 0: y = a * b > 0.0 ? 1.0 : 0.0; break;
      case 1: y = std::abs(a) + 0.5 * b + 0.1 * z(rng); break;
      default: y = std::tanh(2.0 * a) - b * b + 0.1 * z(rng); break;
    }
    X(i, static_cast<Eigen::Index>(f)) = y;
  }
  auto cols = names(f);
  cols.push_back("y");
  auto t = RawTable::from_matrix("interaction" + std::to_string(form) + "_" + std::to_string(seed), cols, X, f);
  if (form == 0) make_categorical(t, f);
  return t;
}

RawTable bin_target(RawTable table, std::size_t classes) {
  if (!table.target) throw config_error("bin_target: table has no target");
  auto& col = table.columns[*table.target];
  if (col.kind != ColumnKind::numeric) throw config_error("bin_target: target is not numeric");
  std::vector<double> sorted;
  for (double v : col.numbers)
    if (!std::isnan(v)) sorted.push_back(v);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (std::size_t q = 1; q < classes; ++q) cuts.push_back(sorted[q * sorted.size() / classes]);
  for (auto& v : col.numbers)
    if (!std::isnan(v)) v = static_cast<double>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
  make_categorical(table, *table.target);
  return table;
}

std::vector<RawTable> desk_corpus(std::uint64_t seed, std::size_t rows) {
  std::vector<RawTable> out;
  out.push_back(latent_factor(rows, 8, 2, seed + 1));
  out.push_back(clusters(rows, 6, 2, seed + 2));
  out.push_back(linear_regression(rows, 6, seed + 3));
  out.push_back(nonlinear(rows, 8, seed + 4));
  out.push_back(clusters(rows, 5, 4, seed + 5));
  out.push_back(latent_factor(rows, 10, 3, seed + 6));
  return out;
}

std::string to_csv(const RawTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.n_cols(); ++c) out += (c ? "," : "") + table.columns[c].name;
  out += '\n';
  for (std::size_t r = 0; r < table.n_rows; ++r) {
    for (std::size_t c = 0; c < table.n_cols(); ++c) {
      if (c) out += ',';
      if (table.columns[c].cells[r]) out += *table.columns[c].cells[r];
    }
    out += '\n';
  }
  return out;
}

}  // namespace tabdpt::synthetic
