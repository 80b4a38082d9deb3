#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "forge/activation_store.hpp"
#include "forge/catalog.hpp"
#include "forge/corpus.hpp"
#include "forge/pipeline.hpp"
#include "forge/sparse_stack.hpp"

namespace forge {

/// Synthetic three-chapter textbook with planted topic features, two
/// contrast corpora that share only generic features, and a small
/// SAE/transcoder stack whose first `topics` latents route planted source
/// features to their planted target counterparts.
struct FixtureConfig {
  std::uint64_t seed = 20240917;
  std::size_t chapters = 3;
  std::size_t subchapters = 3;  // per chapter
  std::size_t paragraphs = 4;   // per subchapter
  std::size_t sentences = 5;    // per paragraph
  std::size_t tokens_per_sentence = 8;
  std::size_t features = 200;   // per site
  std::size_t planted = 40;     // features 0..planted-1 on each site
  std::size_t d_model = 64;
  std::size_t latents = 32;
  std::size_t embedding_dim = 24;
  double latent_threshold = 0.3;  // JumpReLU threshold of the transcoder
};

/// Feature roles by index, identical on both sites.
enum class FixtureRole : std::uint8_t { Planted, Common, Sparse, Weak, Silent, SpecialOnly };

struct FixtureCorpus {
  std::string name;
  CorpusStructure corpus;
  std::map<std::string, TokenActivationStore> stores;  // "src", "tgt" (+ "latent" on the target)
};

struct FixtureData {
  FixtureConfig config;
  FixtureCorpus target;
  std::vector<FixtureCorpus> contrasts;
  SparseStack stack;
  FeatureCatalog catalog;
  std::vector<FixtureRole> roles;
  std::vector<std::size_t> topic;  // planted feature -> subchapter index, else -1

  std::size_t topics() const { return config.chapters * config.subchapters; }
};

FixtureRole fixture_role(std::size_t feature, const FixtureConfig& config);

FixtureData build_fixture(const FixtureConfig& config = {});

/// Writes the fixture as ingest inputs under `dir` and returns the matching
/// ingest request.
IngestRequest write_fixture(const FixtureData& data, const std::filesystem::path& dir);

}  // namespace forge
