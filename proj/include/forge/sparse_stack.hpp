#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

namespace forge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Reads an "SAEMAT1" file: u64 rows, u64 cols, row-major f32 payload.
Matrix load_matrix(const std::filesystem::path& path);
/// Writes the canonical f32 encoding (values are narrowed to float).
void save_matrix(const Matrix& m, const std::filesystem::path& path);

struct ShapeReport {
  Eigen::Index d_model = 0;
  Eigen::Index f_src = 0;
  Eigen::Index f_tgt = 0;
  Eigen::Index latents = 0;

  std::string to_string() const;
  bool operator==(const ShapeReport&) const = default;
};

/// Source/target SAE dictionaries plus transcoder read/write matrices.
///
///   encoder_src  F_src x d     decoder_src  d x F_src
///   encoder_tgt  F_tgt x d     decoder_tgt  d x F_tgt
///   read         K x d         write        d x K
///
/// Row k of `read` is the latent's read vector, column k of `write` its write
/// vector. Values originate as f32 on disk; arithmetic is done in double.
struct SparseStack {
  Matrix encoder_src;
  Matrix decoder_src;
  Matrix encoder_tgt;
  Matrix decoder_tgt;
  Matrix read;
  Matrix write;

  /// Throws ShapeError on any dimension mismatch, ValueError on non-finite
  /// entries.
  ShapeReport validate() const;
};

/// File names inside a stack directory.
inline constexpr const char* kStackFiles[6] = {"E_src.mat", "D_src.mat", "E_tgt.mat",
                                               "D_tgt.mat", "R.mat",     "W.mat"};

SparseStack load_sparse_stack(const std::filesystem::path& dir);
void save_sparse_stack(const SparseStack& stack, const std::filesystem::path& dir);

}  // namespace forge
