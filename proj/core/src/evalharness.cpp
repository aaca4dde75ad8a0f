#include "tabdpt/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>

namespace tabdpt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Average ranks (1-based) of `values`, ties sharing the mean rank.
std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

// 1 = i better, 0.5 tie, 0 = j better.
double duel(double si, double sj, bool higher_is_better) {
  if (si == sj) return 0.5;
  return (si > sj) == higher_is_better ? 1.0 : 0.0;
}

struct Duel {
  std::size_t i = 0, j = 0;
  double score_i = 0.0;
};

std::vector<Duel> all_duels(const ScoreTable& t) {
  std::vector<Duel> out;
  for (std::size_t d = 0; d < t.datasets.size(); ++d)
    for (std::size_t i = 0; i < t.methods.size(); ++i)
      for (std::size_t j = i + 1; j < t.methods.size(); ++j) {
        const double si = t.at(i, d), sj = t.at(j, d);
        if (std::isnan(si) || std::isnan(sj)) continue;
        out.push_back({i, j, duel(si, sj, t.higher_is_better)});
      }
  return out;
}

constexpr double kGlickoScale = 173.7178;

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n == 0) throw data_error("pearson: length mismatch");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw data_error("auc: length mismatch");
  const auto ranks = midranks(scores);
  double n_pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (positive[i]) {
      n_pos += 1.0;
      rank_sum += ranks[i];
    }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

Metrics classification_metrics(const MatrixXdR& probs, std::span<const std::size_t> targets) {
  if (static_cast<std::size_t>(probs.rows()) != targets.size()) throw data_error("metrics: length mismatch");
  if (targets.empty()) throw data_error("metrics: no predictions");
  Metrics m;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Eigen::Index best = 0;
    probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    hits += static_cast<std::size_t>(best) == targets[i];
  }
  m.accuracy = static_cast<double>(hits) / static_cast<double>(targets.size());

  double auc_sum = 0.0;
  std::size_t classes = 0;
  std::vector<double> col(targets.size());
  auto pos = std::make_unique<bool[]>(targets.size());
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      col[i] = probs(static_cast<Eigen::Index>(i), c);
      pos[i] = targets[i] == static_cast<std::size_t>(c);
    }
    if (auto a = binary_auc(col, std::span<const bool>(pos.get(), targets.size()))) {
      auc_sum += *a;
      ++classes;
    }
  }
  if (classes > 0) m.auc = auc_sum / static_cast<double>(classes);
  return m;
}

Metrics regression_metrics(std::span<const double> pred, std::span<const double> targets) {
  if (pred.size() != targets.size() || pred.empty()) throw data_error("metrics: length mismatch");
  Metrics m;
  m.correlation = pearson(pred, targets);
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (targets[i] - pred[i]) * (targets[i] - pred[i]);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  if (ss_tot > 0.0) m.r2 = 1.0 - ss_res / ss_tot;
  return m;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw data_error("percentile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

bool default_higher_is_better(const std::string& metric) {
  for (const char* low : {"loss", "error", "rmse", "mse", "mae", "time", "rank"})
    if (metric.find(low) != std::string::npos) return false;
  return true;
}

std::map<std::string, ScoreTable> parse_score_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw data_error("score csv: missing header");
  struct Row {
    std::string method, dataset, metric;
    double value;
  };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 4) throw data_error("score csv: line " + std::to_string(lineno) + " needs 4 fields");
    try {
      rows.push_back({f[0], f[1], f[2], f[3].empty() ? kNaN : std::stod(f[3])});
    } catch (const std::exception&) {
      throw data_error("score csv: bad value on line " + std::to_string(lineno));
    }
  }
  std::map<std::string, ScoreTable> out;
  for (const auto& r : rows) {
    auto& t = out[r.metric];
    t.metric = r.metric;
    if (std::find(t.methods.begin(), t.methods.end(), r.method) == t.methods.end()) t.methods.push_back(r.method);
    if (std::find(t.datasets.begin(), t.datasets.end(), r.dataset) == t.datasets.end()) t.datasets.push_back(r.dataset);
  }
  for (auto& [metric, t] : out) {
    t.higher_is_better = default_higher_is_better(metric);
    t.scores = MatrixXdR::Constant(static_cast<Eigen::Index>(t.methods.size()),
                                   static_cast<Eigen::Index>(t.datasets.size()), kNaN);
  }
  for (const auto& r : rows) {
    auto& t = out[r.metric];
    const auto mi = std::find(t.methods.begin(), t.methods.end(), r.method) - t.methods.begin();
    const auto di = std::find(t.datasets.begin(), t.datasets.end(), r.dataset) - t.datasets.begin();
    t.scores(mi, di) = r.value;
  }
  return out;
}

std::string format_score_csv(const std::vector<ScoreTable>& tables) {
  std::ostringstream os;
  os.precision(17);
  os << "method,dataset,metric,value\n";
  for (const auto& t : tables)
    for (std::size_t m = 0; m < t.methods.size(); ++m)
      for (std::size_t d = 0; d < t.datasets.size(); ++d) {
        if (std::isnan(t.at(m, d))) continue;
        os << t.methods[m] << ',' << t.datasets[d] << ',' << t.metric << ',' << t.at(m, d) << '\n';
      }
  return os.str();
}

std::vector<IntervalEstimate> average_ranks(const ScoreTable& table, std::size_t bootstrap_iters, std::uint64_t seed) {
  const std::size_t nm = table.methods.size();
  if (nm < 2) throw data_error("average_ranks: need at least 2 methods");
  // ranks[d][m] over datasets where every method has a score
  std::vector<std::vector<double>> ranks;
  for (std::size_t d = 0; d < table.datasets.size(); ++d) {
    std::vector<double> col(nm);
    bool complete = true;
    for (std::size_t m = 0; m < nm; ++m) {
      col[m] = table.at(m, d);
      complete = complete && !std::isnan(col[m]);
      if (table.higher_is_better) col[m] = -col[m];
    }
    if (complete) ranks.push_back(midranks(col));
  }
  if (ranks.empty()) throw data_error("average_ranks: no dataset is scored by every method");

  auto mean_over = [&](const std::vector<std::size_t>& sample, std::size_t m) {
    double s = 0.0;
    for (auto d : sample) s += ranks[d][m];
    return s / static_cast<double>(sample.size());
  };
  std::vector<std::size_t> all(ranks.size());
  std::iota(all.begin(), all.end(), 0);

  std::vector<std::vector<double>> boot(nm);
  Rng rng(seed);
  std::vector<std::size_t> sample(ranks.size());
  for (std::size_t b = 0; b < bootstrap_iters; ++b) {
    for (auto& s : sample) s = uniform_int<std::size_t>(rng, 0, ranks.size() - 1);
    for (std::size_t m = 0; m < nm; ++m) boot[m].push_back(mean_over(sample, m));
  }
  std::vector<IntervalEstimate> out;
  for (std::size_t m = 0; m < nm; ++m) {
    const double est = mean_over(all, m);
    IntervalEstimate e{table.methods[m], est, est, est};
    if (!boot[m].empty()) {
      e.lo = percentile(boot[m], 2.5);
      e.hi = percentile(boot[m], 97.5);
    }
    out.push_back(std::move(e));
  }
  return out;
}

double iqm_point(std::span<const double> scores) {
  if (scores.size() < 4) throw data_error("iqm: need at least 4 values");
  std::vector<double> v(scores.begin(), scores.end());
  const double q1 = percentile(v, 25.0);
  const double q3 = percentile(v, 75.0);
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (x >= q1 && x <= q3) {
      s += x;
      ++n;
    }
  return s / static_cast<double>(n);
}

IntervalEstimate iqm(std::span<const double> scores, std::size_t bootstrap_iters, std::uint64_t seed) {
  IntervalEstimate e{"iqm", iqm_point(scores), 0.0, 0.0};
  e.lo = e.hi = e.estimate;
  if (bootstrap_iters == 0) return e;
  Rng rng(seed);
  std::vector<double> sample(scores.size());
  std::vector<double> boot;
  boot.reserve(bootstrap_iters);
  for (std::size_t b = 0; b < bootstrap_iters; ++b) {
    for (auto& s : sample) s = scores[uniform_int<std::size_t>(rng, 0, scores.size() - 1)];
    boot.push_back(iqm_point(sample));
  }
  e.lo = percentile(boot, 2.5);
  e.hi = percentile(boot, 97.5);
  return e;
}

MatrixXdR win_rate_matrix(const ScoreTable& table) {
  const std::size_t nm = table.methods.size();
  if (nm < 2) throw data_error("win_rate_matrix: need at least 2 methods");
  MatrixXdR w = MatrixXdR::Constant(static_cast<Eigen::Index>(nm), static_cast<Eigen::Index>(nm), kNaN);
  for (std::size_t i = 0; i < nm; ++i)
    for (std::size_t j = 0; j < nm; ++j) {
      double wins = 0.0;
      std::size_t shared = 0;
      for (std::size_t d = 0; d < table.datasets.size(); ++d) {
        const double si = table.at(i, d), sj = table.at(j, d);
        if (std::isnan(si) || std::isnan(sj)) continue;
        ++shared;
        wins += duel(si, sj, table.higher_is_better);
      }
      if (shared) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = wins / static_cast<double>(shared);
    }
  return w;
}

std::vector<IntervalEstimate> elo_ratings(const ScoreTable& table, std::size_t permutations, std::uint64_t seed,
                                          const EloOptions& opts) {
  const std::size_t nm = table.methods.size();
  if (nm < 2) throw data_error("elo: need at least 2 methods");
  if (permutations == 0) throw config_error("elo: need at least one permutation");
  std::vector<Duel> duels = all_duels(table);
  std::vector<std::vector<double>> finals(nm);
  Rng rng(seed);
  for (std::size_t p = 0; p < permutations; ++p) {
    std::shuffle(duels.begin(), duels.end(), rng);
    std::vector<double> r(nm, opts.initial);
    for (const auto& du : duels) {
      const double expected_i = 1.0 / (1.0 + std::pow(10.0, (r[du.j] - r[du.i]) / 400.0));
      const double delta = opts.k_factor * (du.score_i - expected_i);
      r[du.i] += delta;
      r[du.j] -= delta;
    }
    for (std::size_t m = 0; m < nm; ++m) finals[m].push_back(r[m]);
  }
  std::vector<IntervalEstimate> out;
  for (std::size_t m = 0; m < nm; ++m) {
    const double mean = std::accumulate(finals[m].begin(), finals[m].end(), 0.0) / static_cast<double>(permutations);
    out.push_back({table.methods[m], mean, percentile(finals[m], 2.5), percentile(finals[m], 97.5)});
  }
  return out;
}

RatingState glicko2_update(const RatingState& player, std::span<const GlickoGame> games, double tau) {
  const double mu = (player.rating - 1500.0) / kGlickoScale;
  const double phi = player.rd / kGlickoScale;
  const double sigma = player.volatility;
  if (games.empty()) return {player.rating, kGlickoScale * std::sqrt(phi * phi + sigma * sigma), sigma};

  auto g = [](double p) { return 1.0 / std::sqrt(1.0 + 3.0 * p * p / (std::numbers::pi * std::numbers::pi)); };
  double v_inv = 0.0, delta_sum = 0.0;
  for (const auto& game : games) {
    const double mu_j = (game.opponent.rating - 1500.0) / kGlickoScale;
    const double phi_j = game.opponent.rd / kGlickoScale;
    const double gj = g(phi_j);
    const double e = 1.0 / (1.0 + std::exp(-gj * (mu - mu_j)));
    v_inv += gj * gj * e * (1.0 - e);
    delta_sum += gj * (game.score - e);
  }
  const double v = 1.0 / v_inv;
  const double delta = v * delta_sum;

  // Volatility via the Illinois variant of regula falsi.
  const double a = std::log(sigma * sigma);
  auto f = [&](double x) {
    const double ex = std::exp(x);
    const double den = phi * phi + v + ex;
    return ex * (delta * delta - phi * phi - v - ex) / (2.0 * den * den) - (x - a) / (tau * tau);
  };
  constexpr double kEps = 1e-6;
  double A = a;
  double B = 0.0;
  if (delta * delta > phi * phi + v) {
    B = std::log(delta * delta - phi * phi - v);
  } else {
    double k = 1.0;
    while (f(a - k * tau) < 0.0) k += 1.0;
    B = a - k * tau;
  }
  double fa = f(A), fb = f(B);
  while (std::abs(B - A) > kEps) {
    const double C = A + (A - B) * fa / (fb - fa);
    const double fc = f(C);
    if (fc * fb <= 0.0) {
      A = B;
      fa = fb;
    } else {
      fa /= 2.0;
    }
    B = C;
    fb = fc;
  }
  const double sigma_new = std::exp(A / 2.0);
  const double phi_star = std::sqrt(phi * phi + sigma_new * sigma_new);
  const double phi_new = 1.0 / std::sqrt(1.0 / (phi_star * phi_star) + 1.0 / v);
  const double mu_new = mu + phi_new * phi_new * delta_sum;
  return {1500.0 + kGlickoScale * mu_new, kGlickoScale * phi_new, sigma_new};
}

std::vector<RatingState> glicko2_ratings(const ScoreTable& table, double tau) {
  const std::size_t nm = table.methods.size();
  if (nm < 2) throw data_error("glicko2: need at least 2 methods");
  const std::vector<RatingState> start(nm);
  std::vector<std::vector<GlickoGame>> games(nm);
  for (const auto& du : all_duels(table)) {
    games[du.i].push_back({start[du.j], du.score_i});
    games[du.j].push_back({start[du.i], 1.0 - du.score_i});
  }
  std::vector<RatingState> out;
  for (std::size_t m = 0; m < nm; ++m) out.push_back(glicko2_update(start[m], games[m], tau));
  return out;
}

std::string format_intervals_csv(const std::string& metric, const std::string& kind,
                                 const std::vector<IntervalEstimate>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "metric,kind,method,estimate,ci_lo,ci_hi\n";
  for (const auto& r : rows) os << metric << ',' << kind << ',' << r.name << ',' << r.estimate << ',' << r.lo << ',' << r.hi << '\n';
  return os.str();
}

std::string format_win_rate_csv(const ScoreTable& table, const MatrixXdR& w) {
  std::ostringstream os;
  os.precision(10);
  os << "metric,method,opponent,win_rate\n";
  for (std::size_t i = 0; i < table.methods.size(); ++i)
    for (std::size_t j = 0; j < table.methods.size(); ++j) {
      const double v = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (i == j || std::isnan(v)) continue;
      os << table.metric << ',' << table.methods[i] << ',' << table.methods[j] << ',' << v << '\n';
    }
  return os.str();
}

std::string format_glicko_csv(const ScoreTable& table, const std::vector<RatingState>& states) {
  std::ostringstream os;
  os.precision(10);
  os << "metric,method,rating,rd,volatility\n";
  for (std::size_t m = 0; m < states.size(); ++m)
    os << table.metric << ',' << table.methods[m] << ',' << states[m].rating << ',' << states[m].rd << ','
       << states[m].volatility << '\n';
  return os.str();
}

}  // namespace tabdpt
