#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "milbench/errors.hpp"

namespace milbench {

/// Clot-origin classes. The integer value is the class index used by the
/// head's logits and by the metric (CE = 0, LAA = 1).
enum class ClassLabel : int { CE = 0, LAA = 1 };

inline constexpr int kNumClasses = 2;

inline constexpr int class_index(ClassLabel c) { return static_cast<int>(c); }

inline std::string_view to_string(ClassLabel c) { return c == ClassLabel::CE ? "CE" : "LAA"; }

inline std::string label_to_string(const std::optional<ClassLabel>& c) {
  return c ? std::string(to_string(*c)) : std::string();
}

/// "CE" / "LAA"; empty means unlabeled.
inline std::optional<ClassLabel> parse_label(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s == "CE") return ClassLabel::CE;
  if (s == "LAA") return ClassLabel::LAA;
  throw ArgumentError("unknown class label '" + std::string(s) + "' (expected CE or LAA)");
}

}  // namespace milbench
