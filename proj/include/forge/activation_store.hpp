#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace forge {

/// One nonzero token activation.
struct Triplet {
  std::uint32_t token = 0;
  std::uint32_t feature = 0;
  float value = 0.0f;
};

/// Sparse token x feature activations for one layer site.
///
/// Entries are kept sorted by (token, feature) and indexed by token, so a
/// token's activations are a contiguous span. Immutable after construction.
class TokenActivationStore {
 public:
  TokenActivationStore() = default;

  /// Validates and sorts the entries. Throws BoundsError on out-of-range or
  /// duplicate (token, feature) pairs, ValueError on non-finite values.
  TokenActivationStore(std::string site_id, std::uint64_t num_tokens,
                       std::uint64_t num_features, std::vector<Triplet> entries,
                       std::vector<std::uint8_t> special_token_mask);

  const std::string& site_id() const { return site_id_; }
  std::uint64_t num_tokens() const { return num_tokens_; }
  std::uint64_t num_features() const { return num_features_; }
  std::size_t nnz() const { return entries_.size(); }

  std::span<const Triplet> entries() const { return entries_; }
  std::span<const Triplet> token_entries(std::uint64_t token) const;
  bool is_special(std::uint64_t token) const { return mask_[token] != 0; }
  const std::vector<std::uint8_t>& special_token_mask() const { return mask_; }

  /// Activation of (token, feature); zero when not stored.
  double value(std::uint64_t token, std::uint32_t feature) const;

  /// Row-major num_tokens x num_features copy. Intended for small fixtures.
  std::vector<double> dense() const;

 private:
  std::string site_id_;
  std::uint64_t num_tokens_ = 0;
  std::uint64_t num_features_ = 0;
  std::vector<Triplet> entries_;
  std::vector<std::size_t> row_start_;  // num_tokens + 1 offsets into entries_
  std::vector<std::uint8_t> mask_;
};

/// Reads the "SAEACT1" binary triplet layout.
TokenActivationStore load_activation_store(const std::filesystem::path& path,
                                           std::string site_id);

/// Writes the canonical encoding; loading and saving a canonical file is
/// byte-identical.
void save_activation_store(const TokenActivationStore& store,
                           const std::filesystem::path& path);

}  // namespace forge
