#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace forge::text {

/// Lowercased alphanumeric words (apostrophes and hyphens split words).
std::vector<std::string> words(std::string_view s);

bool is_stopword(std::string_view w);

/// Words that are not stopwords and have at least three characters.
std::vector<std::string> content_words(std::string_view s);

/// First content word, or empty.
std::string keyword(std::string_view s);

/// Lowercase, punctuation stripped, whitespace collapsed.
std::string normalize(std::string_view s);

/// Jaccard overlap of the word sets of two strings.
double token_set_overlap(std::string_view a, std::string_view b);

/// Case-insensitive whole-word containment.
bool contains_word(std::string_view haystack, std::string_view word);

/// The `n` most frequent content words across `docs`; ties keep first-seen
/// order.
std::vector<std::string> top_content_words(const std::vector<std::string>& docs, std::size_t n);

std::string trim(std::string_view s);

}  // namespace forge::text
