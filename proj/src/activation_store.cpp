#include "forge/activation_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "forge/errors.hpp"

namespace forge {

namespace {
constexpr std::string_view kMagic = "SAEACT1";
}

TokenActivationStore::TokenActivationStore(std::string site_id,
                                           std::uint64_t num_tokens,
                                           std::uint64_t num_features,
                                           std::vector<Triplet> entries,
                                           std::vector<std::uint8_t> special_token_mask)
    : site_id_(std::move(site_id)),
      num_tokens_(num_tokens),
      num_features_(num_features),
      entries_(std::move(entries)),
      mask_(std::move(special_token_mask)) {
  if (mask_.size() != num_tokens_) {
    throw BoundsError("activation store '" + site_id_ + "': mask length " +
                      std::to_string(mask_.size()) + " != num_tokens " +
                      std::to_string(num_tokens_));
  }
  for (const auto& e : entries_) {
    if (e.token >= num_tokens_ || e.feature >= num_features_) {
      throw BoundsError("activation store '" + site_id_ + "': entry (" +
                        std::to_string(e.token) + ", " + std::to_string(e.feature) +
                        ") outside " + std::to_string(num_tokens_) + "x" +
                        std::to_string(num_features_));
    }
    if (!std::isfinite(e.value)) {
      throw ValueError("activation store '" + site_id_ + "': non-finite value at (" +
                       std::to_string(e.token) + ", " + std::to_string(e.feature) + ")");
    }
  }
  std::stable_sort(entries_.begin(), entries_.end(), [](const Triplet& a, const Triplet& b) {
    return a.token != b.token ? a.token < b.token : a.feature < b.feature;
  });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].token == entries_[i - 1].token &&
        entries_[i].feature == entries_[i - 1].feature) {
      throw BoundsError("activation store '" + site_id_ + "': duplicate entry (" +
                        std::to_string(entries_[i].token) + ", " +
                        std::to_string(entries_[i].feature) + ")");
    }
  }
  row_start_.assign(num_tokens_ + 1, 0);
  for (const auto& e : entries_) ++row_start_[e.token + 1];
  for (std::size_t t = 0; t < num_tokens_; ++t) row_start_[t + 1] += row_start_[t];
}

std::span<const Triplet> TokenActivationStore::token_entries(std::uint64_t token) const {
  if (token >= num_tokens_) throw BoundsError("token index out of range");
  return std::span<const Triplet>(entries_).subspan(row_start_[token],
                                                    row_start_[token + 1] - row_start_[token]);
}

double TokenActivationStore::value(std::uint64_t token, std::uint32_t feature) const {
  auto row = token_entries(token);
  auto it = std::lower_bound(row.begin(), row.end(), feature,
                             [](const Triplet& t, std::uint32_t f) { return t.feature < f; });
  return (it != row.end() && it->feature == feature) ? it->value : 0.0;
}

std::vector<double> TokenActivationStore::dense() const {
  std::vector<double> out(num_tokens_ * num_features_, 0.0);
  for (const auto& e : entries_) out[e.token * num_features_ + e.feature] = e.value;
  return out;
}

TokenActivationStore load_activation_store(const std::filesystem::path& path,
                                           std::string site_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open activation file " + path.string());
  detail::BinaryReader reader(in, path.string());
  reader.expect_magic(kMagic);
  const auto num_tokens = reader.read<std::uint64_t>();
  const auto num_features = reader.read<std::uint64_t>();
  const auto nnz = reader.read<std::uint64_t>();
  if (num_tokens > UINT32_MAX || num_features > UINT32_MAX) {
    throw FormatError(path.string() + ": dimensions exceed u32 index range");
  }
  reader.check_remaining(nnz * 12 + num_tokens);
  std::vector<Triplet> entries(nnz);
  for (auto& e : entries) {
    e.token = reader.read<std::uint32_t>();
    e.feature = reader.read<std::uint32_t>();
    e.value = reader.read<float>();
  }
  std::vector<std::uint8_t> mask(num_tokens);
  reader.read_bytes(mask.data(), mask.size());
  reader.expect_end();
  return TokenActivationStore(std::move(site_id), num_tokens, num_features,
                              std::move(entries), std::move(mask));
}

void save_activation_store(const TokenActivationStore& store,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write activation file " + path.string());
  detail::BinaryWriter writer(out);
  writer.write_bytes(kMagic.data(), kMagic.size());
  writer.write<std::uint64_t>(store.num_tokens());
  writer.write<std::uint64_t>(store.num_features());
  writer.write<std::uint64_t>(store.nnz());
  for (const auto& e : store.entries()) {
    writer.write(e.token);
    writer.write(e.feature);
    writer.write(e.value);
  }
  const auto& mask = store.special_token_mask();
  writer.write_bytes(mask.data(), mask.size());
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace forge
