#include "tabdpt/scalefit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "tabdpt/common.hpp"

namespace tabdpt {

namespace {

using Theta = Eigen::Matrix<double, 5, 1>;  // log A, log B, log E, alpha, beta

struct Prepared {
  std::vector<double> log_p, log_d, log_loss;
};

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_grad(double r, double delta) { return std::clamp(r, -delta, delta); }

double objective(const Theta& t, const Prepared& pp, double delta, Theta* grad) {
  double f = 0.0;
  if (grad) grad->setZero();
  for (std::size_t i = 0; i < pp.log_p.size(); ++i) {
    const std::array<double, 3> u = {t(0) - t(3) * pp.log_p[i], t(1) - t(4) * pp.log_d[i], t(2)};
    const double mx = std::max({u[0], u[1], u[2]});
    std::array<double, 3> w{};
    double z = 0.0;
    for (int k = 0; k < 3; ++k) {
      w[static_cast<std::size_t>(k)] = std::exp(u[static_cast<std::size_t>(k)] - mx);
      z += w[static_cast<std::size_t>(k)];
    }
    const double r = mx + std::log(z) - pp.log_loss[i];
    f += huber(r, delta);
    if (grad) {
      const double h = huber_grad(r, delta);
      for (auto& wk : w) wk /= z;
      (*grad)(0) += h * w[0];
      (*grad)(1) += h * w[1];
      (*grad)(2) += h * w[2];
      (*grad)(3) -= h * w[0] * pp.log_p[i];
      (*grad)(4) -= h * w[1] * pp.log_d[i];
    }
  }
  return f;
}

// BFGS with Armijo backtracking.
Theta minimize(Theta x, const Prepared& pp, const PowerLawOptions& opts, double& f_out) {
  Eigen::Matrix<double, 5, 5> h_inv = Eigen::Matrix<double, 5, 5>::Identity();
  Theta g;
  double f = objective(x, pp, opts.huber_delta, &g);
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    if (g.squaredNorm() < opts.gradient_tolerance * opts.gradient_tolerance) break;
    Theta dir = -h_inv * g;
    if (dir.dot(g) >= 0.0) {
      h_inv.setIdentity();
      dir = -g;
    }
    double step = 1.0;
    Theta x_new, g_new;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      f_new = objective(x_new, pp, opts.huber_delta, &g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * dir.dot(g)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Theta s = x_new - x;
    const Theta y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-300) {
      const double rho = 1.0 / sy;
      const Eigen::Matrix<double, 5, 5> I = Eigen::Matrix<double, 5, 5>::Identity();
      h_inv = (I - rho * s * y.transpose()) * h_inv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    const bool stalled = std::abs(f - f_new) <= 1e-18 * std::max(1.0, std::abs(f));
    x = x_new;
    g = g_new;
    f = f_new;
    if (stalled && s.norm() < 1e-14) break;
  }
  f_out = f;
  return x;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

constexpr std::array<double, 4> kExponentGrid = {0.0, 0.5, 1.0, 1.5};
constexpr std::array<double, 2> kTermOffsets = {-1.0, 0.0};       // relative to log(min loss), log(max loss)
constexpr std::array<double, 3> kFloorOffsets = {-2.0, -0.5, 0.0};  // relative to log(min loss)

}  // namespace

double predict_loss(const ScalingFit& fit, double P, double D) {
  return fit.A * std::pow(P, -fit.alpha) + fit.B_coef * std::pow(D, -fit.beta) + fit.E_irr;
}

std::size_t power_law_grid_size() {
  return kExponentGrid.size() * kExponentGrid.size() * kTermOffsets.size() * kTermOffsets.size() *
         kFloorOffsets.size();
}

ScalingFit fit_power_law(const std::vector<ScalingPoint>& points, const PowerLawOptions& opts) {
  if (points.size() < 6) throw data_error("fit_power_law: need at least 6 points");
  std::set<double> ps, ds;
  Prepared pp;
  for (const auto& pt : points) {
    if (!(pt.P >= 1.0) || !(pt.D >= 1.0) || !(pt.loss > 0.0) || !std::isfinite(pt.loss))
      throw data_error("fit_power_law: points need P >= 1, D >= 1 and a positive finite loss");
    ps.insert(pt.P);
    ds.insert(pt.D);
    pp.log_p.push_back(std::log(pt.P));
    pp.log_d.push_back(std::log(pt.D));
    pp.log_loss.push_back(std::log(pt.loss));
  }
  if (ps.size() < 2 || ds.size() < 2)
    throw data_error("fit_power_law: degenerate design, need >= 2 distinct P and >= 2 distinct D values");

  const double lo = *std::min_element(pp.log_loss.begin(), pp.log_loss.end());
  const double hi = *std::max_element(pp.log_loss.begin(), pp.log_loss.end());
  const double mid_p = median(pp.log_p);
  const double mid_d = median(pp.log_d);
  const std::array<double, 2> term_levels = {lo + kTermOffsets[0], hi + kTermOffsets[1]};

  Theta best = Theta::Zero();
  double best_f = std::numeric_limits<double>::infinity();
  for (double alpha : kExponentGrid)
    for (double beta : kExponentGrid)
      for (double ua : term_levels)
        for (double ub : term_levels)
          for (double ue : kFloorOffsets) {
            // Each term starts at magnitude exp(u) at the median design point.
            Theta t;
            t << ua + alpha * mid_p, ub + beta * mid_d, lo + ue, alpha, beta;
            double f = 0.0;
            const Theta x = minimize(t, pp, opts, f);
            if (f < best_f) {
              best_f = f;
              best = x;
            }
          }
  if (!std::isfinite(best_f)) throw numeric_error("fit_power_law: optimization failed");
  return {std::exp(best(0)), std::exp(best(1)), std::exp(best(2)), best(3), best(4), best_f};
}

std::vector<double> excess_loss(const ScalingFit& fit, const std::vector<ScalingPoint>& points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& pt : points) out.push_back(pt.loss - fit.E_irr);
  return out;
}

std::vector<ScalingPoint> parse_scaling_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw data_error("scaling csv: missing header");
  std::vector<ScalingPoint> pts;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    ScalingPoint p;
    char c1 = 0, c2 = 0;
    if (!(ls >> p.P >> c1 >> p.D >> c2 >> p.loss) || c1 != ',' || c2 != ',')
      throw data_error("scaling csv: malformed line " + std::to_string(lineno));
    pts.push_back(p);
  }
  return pts;
}

std::string format_fit_csv(const ScalingFit& fit) {
  std::ostringstream os;
  os.precision(17);
  os << "A,B_coef,E_irr,alpha,beta,objective\n"
     << fit.A << ',' << fit.B_coef << ',' << fit.E_irr << ',' << fit.alpha << ',' << fit.beta << ',' << fit.objective
     << '\n';
  return os.str();
}

std::string format_excess_csv(const ScalingFit& fit, const std::vector<ScalingPoint>& points) {
  std::ostringstream os;
  os.precision(17);
  os << "P,D,loss,predicted,excess,predicted_excess\n";
  const auto ex = excess_loss(fit, points);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double pred = predict_loss(fit, points[i].P, points[i].D);
    os << points[i].P << ',' << points[i].D << ',' << points[i].loss << ',' << pred << ',' << ex[i] << ','
       << pred - fit.E_irr << '\n';
  }
  return os.str();
}

}  // namespace tabdpt
