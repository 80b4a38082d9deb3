#include "forge/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace forge::text {

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_stopword(std::string_view w) {
  static const std::unordered_set<std::string_view> kStop = {
      "a",     "an",    "and",   "are",  "as",    "at",    "be",    "been",  "but",
      "by",    "can",   "did",   "do",   "does",  "for",   "from",  "had",   "has",
      "have",  "he",    "her",   "his",  "how",   "i",     "if",    "in",    "into",
      "is",    "it",    "its",   "may",  "more",  "most",  "no",    "not",   "of",
      "on",    "or",    "our",   "she",  "so",    "some",  "such",  "than",  "that",
      "the",   "their", "them",  "then", "there", "these", "they",  "this",  "those",
      "to",    "was",   "we",    "were", "what",  "when",  "where", "which", "while",
      "who",   "why",   "will",  "with", "would", "you",   "your",  "also",  "about",
      "other", "over",  "very",  "each", "any",   "all",   "one",   "two",   "use",
      "used",  "using", "words", "word", "token", "tokens"};
  return kStop.count(w) != 0;
}

std::vector<std::string> content_words(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : words(s)) {
    if (w.size() >= 3 && !is_stopword(w)) out.push_back(std::move(w));
  }
  return out;
}

std::string keyword(std::string_view s) {
  auto cw = content_words(s);
  return cw.empty() ? std::string() : cw.front();
}

std::string normalize(std::string_view s) {
  std::string out;
  for (const auto& w : words(s)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

double token_set_overlap(std::string_view a, std::string_view b) {
  const auto wa = words(a);
  const auto wb = words(b);
  std::set<std::string> sa(wa.begin(), wa.end());
  std::set<std::string> sb(wb.begin(), wb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : sa) inter += sb.count(w);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

bool contains_word(std::string_view haystack, std::string_view word) {
  const auto target = normalize(word);
  if (target.empty()) return false;
  const auto hay = words(haystack);
  const auto needle = words(target);
  if (needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  }
  return false;
}

std::vector<std::string> top_content_words(const std::vector<std::string>& docs, std::size_t n) {
  std::unordered_map<std::string, std::size_t> freq;
  std::vector<std::string> order;
  for (const auto& d : docs) {
    for (auto& w : content_words(d)) {
      if (freq[w]++ == 0) order.push_back(w);
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return freq[a] > freq[b]; });
  if (order.size() > n) order.resize(n);
  return order;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace forge::text
