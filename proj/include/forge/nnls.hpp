#pragma once

#include <Eigen/Dense>

namespace forge {

struct NnlsOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;  // projected-gradient infinity norm
};

struct NnlsResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;  // ||A x - b||_2
};

/// min ||A x - b||_2 subject to x >= 0 (Lawson-Hanson active set).
NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const NnlsOptions& options = {});

/// Infinity norm of the projected gradient of 0.5||Ax-b||^2 at x.
double projected_gradient_norm(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& x);

}  // namespace forge
