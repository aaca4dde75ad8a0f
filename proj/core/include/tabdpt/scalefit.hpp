#pragma once

#include <string>
#include <vector>

namespace tabdpt {

struct ScalingPoint {
  double P = 1.0;  // parameter count
  double D = 1.0;  // training cells
  double loss = 0.0;
};

/// loss(P, D) = A * P^-alpha + B_coef * D^-beta + E_irr
struct ScalingFit {
  double A = 0.0;
  double B_coef = 0.0;
  double E_irr = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double objective = 0.0;  // Huber objective at the optimum
};

double predict_loss(const ScalingFit& fit, double P, double D);

struct PowerLawOptions {
  double huber_delta = 1e-3;
  std::size_t max_iterations = 3000;
  double gradient_tolerance = 1e-14;
};

/// Minimizes sum Huber(log predicted - log observed) over (log A, log B_coef, log E_irr, alpha, beta)
/// with the prediction written as a log-sum-exp of the three terms, restarting BFGS from a fixed grid
/// of initializations and keeping the best optimum.
ScalingFit fit_power_law(const std::vector<ScalingPoint>& points, const PowerLawOptions& opts = {});

/// Number of grid initializations used by fit_power_law.
std::size_t power_law_grid_size();

/// Observed loss minus the irreducible term, per point.
std::vector<double> excess_loss(const ScalingFit& fit, const std::vector<ScalingPoint>& points);

/// `P,D,loss` CSV with header.
std::vector<ScalingPoint> parse_scaling_csv(const std::string& text);
std::string format_fit_csv(const ScalingFit& fit);
/// `P,D,loss,predicted,excess,predicted_excess` rows for plotting.
std::string format_excess_csv(const ScalingFit& fit, const std::vector<ScalingPoint>& points);

}  // namespace tabdpt
