#include "forge/corpus.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "forge/errors.hpp"

namespace forge {

using nlohmann::json;

std::string_view granularity_name(Granularity g) {
  switch (g) {
    case Granularity::Sentence: return "sentence";
    case Granularity::Paragraph: return "paragraph";
    case Granularity::Subchapter: return "subchapter";
    case Granularity::Chapter: return "chapter";
  }
  return "?";
}

Granularity parse_granularity(std::string_view name) {
  for (auto g : kAllGranularities) {
    if (granularity_name(g) == name) return g;
  }
  throw ConfigError("unknown granularity '" + std::string(name) + "'");
}

namespace {

std::string str_field(const json& obj, const char* key, const char* what) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw SchemaError(std::string(what) + " record missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

const json& array_field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_array()) {
    throw SchemaError(std::string("corpus document missing array '") + key + "'");
  }
  return *it;
}

}  // namespace

const std::vector<TextUnit>& CorpusStructure::units(Granularity g) const {
  switch (g) {
    case Granularity::Paragraph: return paragraphs_;
    case Granularity::Subchapter: return subchapters_;
    case Granularity::Chapter: return chapters_;
    case Granularity::Sentence: break;
  }
  throw ValueError("sentences are not TextUnits");
}

CorpusStructure CorpusStructure::from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("corpus document must be a JSON object");
  CorpusStructure c;
  c.corpus_id_ = doc.value("corpus_id", std::string("corpus"));
  auto nt = doc.find("num_tokens");
  if (nt == doc.end() || !nt->is_number_unsigned()) {
    throw SchemaError("corpus document missing unsigned 'num_tokens'");
  }
  c.num_tokens_ = nt->get<std::uint64_t>();

  auto register_id = [&c](const std::string& id, UnitRef ref) {
    if (id.empty()) throw SchemaError("empty unit id");
    if (!c.ids_.emplace(id, ref).second) throw SchemaError("duplicate unit id '" + id + "'");
  };
  auto resolve = [&c](const std::string& id, Granularity g, const std::string& child) {
    auto it = c.ids_.find(id);
    if (it == c.ids_.end() || it->second.granularity != g) {
      throw SchemaError("'" + child + "' references unknown " +
                        std::string(granularity_name(g)) + " '" + id + "'");
    }
    return it->second.index;
  };

  for (const auto& ch : array_field(doc, "chapters")) {
    TextUnit u{str_field(ch, "id", "chapter"), ch.value("title", std::string()), 0};
    register_id(u.id, {Granularity::Chapter, c.chapters_.size()});
    c.chapters_.push_back(std::move(u));
  }
  for (const auto& sc : array_field(doc, "subchapters")) {
    TextUnit u{str_field(sc, "id", "subchapter"), sc.value("title", std::string()), 0};
    u.parent = resolve(str_field(sc, "chapter_id", "subchapter"), Granularity::Chapter, u.id);
    register_id(u.id, {Granularity::Subchapter, c.subchapters_.size()});
    c.subchapters_.push_back(std::move(u));
  }
  for (const auto& p : array_field(doc, "paragraphs")) {
    TextUnit u{str_field(p, "id", "paragraph"), p.value("title", std::string()), 0};
    u.parent = resolve(str_field(p, "subchapter_id", "paragraph"), Granularity::Subchapter, u.id);
    register_id(u.id, {Granularity::Paragraph, c.paragraphs_.size()});
    c.paragraphs_.push_back(std::move(u));
  }

  std::uint64_t prev_end = 0;
  for (const auto& js : array_field(doc, "sentences")) {
    Sentence s;
    s.id = str_field(js, "id", "sentence");
    s.text = js.value("text", std::string());
    auto span = js.find("token_span");
    if (span == js.end() || !span->is_array() || span->size() != 2 ||
        !(*span)[0].is_number_unsigned() || !(*span)[1].is_number_unsigned()) {
      throw SchemaError("sentence '" + s.id + "' needs token_span [begin, end]");
    }
    s.token_begin = (*span)[0].get<std::uint64_t>();
    s.token_end = (*span)[1].get<std::uint64_t>();
    if (s.token_end < s.token_begin) {
      throw SchemaError("sentence '" + s.id + "' has an inverted token span");
    }
    if (s.token_begin < prev_end) {
      throw SchemaError("sentence '" + s.id + "' overlaps or precedes the previous span");
    }
    if (s.token_end > c.num_tokens_) {
      throw SchemaError("sentence '" + s.id + "' extends past num_tokens");
    }
    prev_end = s.token_end;

    s.paragraph = resolve(str_field(js, "paragraph_id", "sentence"), Granularity::Paragraph, s.id);
    s.subchapter = c.paragraphs_[s.paragraph].parent;
    s.chapter = c.subchapters_[s.subchapter].parent;
    if (str_field(js, "subchapter_id", "sentence") != c.subchapters_[s.subchapter].id) {
      throw SchemaError("sentence '" + s.id + "' lists a subchapter that does not contain its paragraph");
    }
    if (str_field(js, "chapter_id", "sentence") != c.chapters_[s.chapter].id) {
      throw SchemaError("sentence '" + s.id + "' lists a chapter that does not contain its paragraph");
    }
    register_id(s.id, {Granularity::Sentence, c.sentences_.size()});
    c.sentences_.push_back(std::move(s));
  }

  c.members_[0].resize(c.sentences_.size());
  c.members_[1].resize(c.paragraphs_.size());
  c.members_[2].resize(c.subchapters_.size());
  c.members_[3].resize(c.chapters_.size());
  for (std::size_t i = 0; i < c.sentences_.size(); ++i) {
    const auto& s = c.sentences_[i];
    c.members_[0][i].push_back(i);
    c.members_[1][s.paragraph].push_back(i);
    c.members_[2][s.subchapter].push_back(i);
    c.members_[3][s.chapter].push_back(i);
  }
  return c;
}

json CorpusStructure::to_json() const {
  json doc;
  doc["corpus_id"] = corpus_id_;
  doc["num_tokens"] = num_tokens_;
  json chapters = json::array();
  for (const auto& u : chapters_) chapters.push_back({{"id", u.id}, {"title", u.title}});
  json subchapters = json::array();
  for (const auto& u : subchapters_) {
    subchapters.push_back({{"id", u.id}, {"title", u.title}, {"chapter_id", chapters_[u.parent].id}});
  }
  json paragraphs = json::array();
  for (const auto& u : paragraphs_) {
    json p = {{"id", u.id}, {"subchapter_id", subchapters_[u.parent].id}};
    if (!u.title.empty()) p["title"] = u.title;
    paragraphs.push_back(std::move(p));
  }
  json sentences = json::array();
  for (const auto& s : sentences_) {
    sentences.push_back({{"id", s.id},
                         {"token_span", {s.token_begin, s.token_end}},
                         {"paragraph_id", paragraphs_[s.paragraph].id},
                         {"subchapter_id", subchapters_[s.subchapter].id},
                         {"chapter_id", chapters_[s.chapter].id},
                         {"text", s.text}});
  }
  doc["chapters"] = std::move(chapters);
  doc["subchapters"] = std::move(subchapters);
  doc["paragraphs"] = std::move(paragraphs);
  doc["sentences"] = std::move(sentences);
  return doc;
}

std::size_t CorpusStructure::num_units(Granularity g) const {
  return g == Granularity::Sentence ? sentences_.size() : units(g).size();
}

const std::string& CorpusStructure::unit_id(Granularity g, std::size_t u) const {
  return g == Granularity::Sentence ? sentences_.at(u).id : units(g).at(u).id;
}

const std::string& CorpusStructure::unit_title(Granularity g, std::size_t u) const {
  return g == Granularity::Sentence ? sentences_.at(u).text : units(g).at(u).title;
}

std::size_t CorpusStructure::unit_of_sentence(std::size_t s, Granularity g) const {
  const auto& sent = sentences_.at(s);
  switch (g) {
    case Granularity::Sentence: return s;
    case Granularity::Paragraph: return sent.paragraph;
    case Granularity::Subchapter: return sent.subchapter;
    case Granularity::Chapter: return sent.chapter;
  }
  return s;
}

const std::vector<std::size_t>& CorpusStructure::unit_sentences(Granularity g, std::size_t u) const {
  return members_[static_cast<std::size_t>(g)].at(u);
}

std::optional<UnitRef> CorpusStructure::find_unit(std::string_view id) const {
  auto it = ids_.find(std::string(id));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> CorpusStructure::find_sentence(std::string_view id) const {
  auto ref = find_unit(id);
  if (!ref || ref->granularity != Granularity::Sentence) return std::nullopt;
  return ref->index;
}

std::vector<std::uint64_t> CorpusStructure::unit_tokens(UnitRef unit) const {
  std::vector<std::uint64_t> tokens;
  for (auto s : unit_sentences(unit.granularity, unit.index)) {
    for (auto t = sentences_[s].token_begin; t < sentences_[s].token_end; ++t) tokens.push_back(t);
  }
  return tokens;
}

CorpusStructure load_corpus_structure(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open corpus file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
    return CorpusStructure::from_json(doc);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void save_corpus_structure(const CorpusStructure& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << corpus.to_json().dump(1) << '\n';
}

}  // namespace forge
