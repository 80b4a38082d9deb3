#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace forge {

/// Textual unit level, finest to coarsest.
enum class Granularity : std::uint8_t { Sentence = 0, Paragraph, Subchapter, Chapter };

inline constexpr std::array<Granularity, 4> kAllGranularities = {
    Granularity::Sentence, Granularity::Paragraph, Granularity::Subchapter,
    Granularity::Chapter};

std::string_view granularity_name(Granularity g);
Granularity parse_granularity(std::string_view name);

struct Sentence {
  std::string id;
  std::uint64_t token_begin = 0;  // half-open [begin, end)
  std::uint64_t token_end = 0;
  std::size_t paragraph = 0;
  std::size_t subchapter = 0;
  std::size_t chapter = 0;
  std::string text;
};

/// A paragraph, subchapter, or chapter. `parent` indexes the next coarser
/// level (unused for chapters).
struct TextUnit {
  std::string id;
  std::string title;
  std::size_t parent = 0;
};

/// Unit reference resolved from an id.
struct UnitRef {
  Granularity granularity = Granularity::Sentence;
  std::size_t index = 0;
};

/// Sentence / paragraph / subchapter / chapter containment tree over a
/// tokenized corpus. Immutable after construction; lookups in both directions
/// are O(1).
///
/// JSON schema (all ids are strings, spans are half-open token ranges):
///   { "corpus_id": str, "num_tokens": int,
///     "chapters":    [{"id", "title"}],
///     "subchapters": [{"id", "title", "chapter_id"}],
///     "paragraphs":  [{"id", "subchapter_id"}],
///     "sentences":   [{"id", "token_span": [begin, end], "paragraph_id",
///                      "subchapter_id", "chapter_id", "text"}] }
class CorpusStructure {
 public:
  CorpusStructure() = default;

  /// Validates and indexes a parsed document. Throws SchemaError.
  static CorpusStructure from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  const std::string& corpus_id() const { return corpus_id_; }
  std::uint64_t num_tokens() const { return num_tokens_; }

  std::size_t num_sentences() const { return sentences_.size(); }
  const Sentence& sentence(std::size_t s) const { return sentences_[s]; }
  const std::vector<Sentence>& sentences() const { return sentences_; }

  std::size_t num_units(Granularity g) const;
  const std::string& unit_id(Granularity g, std::size_t u) const;
  const std::string& unit_title(Granularity g, std::size_t u) const;

  /// Index of the unit at level `g` that contains sentence `s`.
  std::size_t unit_of_sentence(std::size_t s, Granularity g) const;
  /// Constituent sentences of unit `u` at level `g`, ascending.
  const std::vector<std::size_t>& unit_sentences(Granularity g, std::size_t u) const;

  std::optional<UnitRef> find_unit(std::string_view id) const;
  std::optional<std::size_t> find_sentence(std::string_view id) const;

  /// Tokens covered by a unit, in ascending order.
  std::vector<std::uint64_t> unit_tokens(UnitRef unit) const;

 private:
  std::string corpus_id_;
  std::uint64_t num_tokens_ = 0;
  std::vector<Sentence> sentences_;
  std::vector<TextUnit> paragraphs_;
  std::vector<TextUnit> subchapters_;
  std::vector<TextUnit> chapters_;
  // members_[g][u] -> sentence indices
  std::array<std::vector<std::vector<std::size_t>>, 4> members_;
  std::unordered_map<std::string, UnitRef> ids_;

  const std::vector<TextUnit>& units(Granularity g) const;
};

CorpusStructure load_corpus_structure(const std::filesystem::path& path);
void save_corpus_structure(const CorpusStructure& corpus, const std::filesystem::path& path);

}  // namespace forge
