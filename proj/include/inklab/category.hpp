#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "inklab/errors.hpp"

namespace inklab {

// Token/passage classes that compete for attention. `other` covers query and
// instruction tokens; passages never carry it.
enum class Category { gold, easy, random, hard, other };

inline constexpr std::array<Category, 5> kAllCategories = {
    Category::gold, Category::easy, Category::random, Category::hard, Category::other};

constexpr std::string_view to_string(Category c) {
  switch (c) {
    case Category::gold: return "gold";
    case Category::easy: return "easy";
    case Category::random: return "random";
    case Category::hard: return "hard";
    case Category::other: return "other";
  }
  return "?";
}

inline std::optional<Category> try_parse_category(std::string_view s) {
  for (Category c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

inline Category parse_category(std::string_view s) {
  if (auto c = try_parse_category(s)) return *c;
  throw ArgumentError("unknown category '" + std::string(s) + "'");
}

// Easy and random distractors both play the "weaker" role against hard ones.
constexpr bool is_weak(Category c) { return c == Category::easy || c == Category::random; }

// Half-open column range [start, end) tagged with a category.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  Category category = Category::other;

  std::size_t size() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

}  // namespace inklab
