#include "forge/sparse_stack.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "binary_io.hpp"
#include "forge/errors.hpp"

namespace forge {

namespace {
constexpr std::string_view kMagic = "SAEMAT1";
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open matrix file " + path.string());
  detail::BinaryReader reader(in, path.string());
  reader.expect_magic(kMagic);
  const auto rows = reader.read<std::uint64_t>();
  const auto cols = reader.read<std::uint64_t>();
  if (cols != 0 && rows > UINT64_MAX / 4 / cols) throw FormatError(path.string() + ": shape overflow");
  reader.check_remaining(rows * cols * 4);
  std::vector<float> payload(rows * cols);
  reader.read_bytes(payload.data(), payload.size() * sizeof(float));
  reader.expect_end();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint64_t c = 0; c < cols; ++c) m(r, c) = payload[r * cols + c];
  }
  return m;
}

void save_matrix(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write matrix file " + path.string());
  detail::BinaryWriter writer(out);
  writer.write_bytes(kMagic.data(), kMagic.size());
  writer.write<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
  writer.write<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) writer.write(static_cast<float>(m(r, c)));
  }
}

std::string ShapeReport::to_string() const {
  return "F_src=" + std::to_string(f_src) + " F_tgt=" + std::to_string(f_tgt) +
         " K=" + std::to_string(latents) + " d=" + std::to_string(d_model);
}

ShapeReport SparseStack::validate() const {
  ShapeReport r;
  r.d_model = encoder_src.cols();
  r.f_src = encoder_src.rows();
  r.f_tgt = encoder_tgt.rows();
  r.latents = read.rows();

  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ShapeError("sparse stack shape mismatch: " + what);
  };
  const auto d = r.d_model;
  check(decoder_src.rows() == d, "D_src rows " + std::to_string(decoder_src.rows()) + " != d " + std::to_string(d));
  check(encoder_tgt.cols() == d, "E_tgt cols " + std::to_string(encoder_tgt.cols()) + " != d " + std::to_string(d));
  check(decoder_tgt.rows() == d, "D_tgt rows " + std::to_string(decoder_tgt.rows()) + " != d " + std::to_string(d));
  check(read.cols() == d, "R cols " + std::to_string(read.cols()) + " != d " + std::to_string(d));
  check(write.rows() == d, "W rows " + std::to_string(write.rows()) + " != d " + std::to_string(d));
  check(decoder_src.cols() == r.f_src, "D_src cols != E_src rows");
  check(decoder_tgt.cols() == r.f_tgt, "D_tgt cols != E_tgt rows");
  check(write.cols() == r.latents, "W cols != R rows");

  for (const Matrix* m : {&encoder_src, &decoder_src, &encoder_tgt, &decoder_tgt, &read, &write}) {
    if (!m->allFinite()) throw ValueError("sparse stack contains non-finite entries");
  }
  return r;
}

SparseStack load_sparse_stack(const std::filesystem::path& dir) {
  SparseStack s;
  Matrix* slots[6] = {&s.encoder_src, &s.decoder_src, &s.encoder_tgt,
                      &s.decoder_tgt, &s.read,        &s.write};
  for (int i = 0; i < 6; ++i) *slots[i] = load_matrix(dir / kStackFiles[i]);
  s.validate();
  return s;
}

void save_sparse_stack(const SparseStack& stack, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Matrix* slots[6] = {&stack.encoder_src, &stack.decoder_src, &stack.encoder_tgt,
                            &stack.decoder_tgt, &stack.read,        &stack.write};
  for (int i = 0; i < 6; ++i) save_matrix(*slots[i], dir / kStackFiles[i]);
}

}  // namespace forge
