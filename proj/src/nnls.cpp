#include "forge/nnls.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "forge/errors.hpp"

namespace forge {

double projected_gradient_norm(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& x) {
  const Eigen::VectorXd g = a.transpose() * (a * x - b);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double pg = x[i] > 0.0 ? std::abs(g[i]) : std::max(0.0, -g[i]);
    worst = std::max(worst, pg);
  }
  return worst;
}

namespace {

// Unconstrained least squares on the passive columns.
Eigen::VectorXd solve_passive(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const std::vector<bool>& passive) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (passive[j]) cols.push_back(j);
  }
  Eigen::VectorXd z = Eigen::VectorXd::Zero(a.cols());
  if (cols.empty()) return z;
  Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = a.col(cols[i]);
  const Eigen::VectorXd s = sub.completeOrthogonalDecomposition().solve(b);
  for (std::size_t i = 0; i < cols.size(); ++i) z[cols[i]] = s[static_cast<Eigen::Index>(i)];
  return z;
}

}  // namespace

NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const NnlsOptions& options) {
  if (a.rows() != b.size()) throw ShapeError("nnls: A has " + std::to_string(a.rows()) + " rows, b has " + std::to_string(b.size()));
  const Eigen::Index n = a.cols();
  NnlsResult out;
  out.x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);

  while (out.iterations < options.max_iterations) {
    const Eigen::VectorXd w = a.transpose() * (b - a * out.x);
    Eigen::Index best = -1;
    double best_w = options.tolerance;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    }
    if (best < 0) {
      out.converged = true;
      break;
    }
    passive[best] = true;
    ++out.iterations;

    // Inner loop: step back toward feasibility until the passive solve is positive.
    while (true) {
      Eigen::VectorXd z = solve_passive(a, b, passive);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && z[j] <= 0.0) feasible = false;
      }
      if (feasible) {
        out.x = z;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && z[j] <= 0.0) alpha = std::min(alpha, out.x[j] / (out.x[j] - z[j]));
      }
      out.x += alpha * (z - out.x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && out.x[j] <= 1e-15) {
          passive[j] = false;
          out.x[j] = 0.0;
        }
      }
      if (++out.iterations >= options.max_iterations) break;
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) out.x[j] = std::max(0.0, out.x[j]);
  if (!out.converged) out.converged = projected_gradient_norm(a, b, out.x) < options.tolerance;
  out.residual = (a * out.x - b).norm();
  return out;
}

}  // namespace forge
