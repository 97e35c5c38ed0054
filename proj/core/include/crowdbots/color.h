// Copyright 2026 The Crowdbots Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CROWDBOTS_COLOR_H_
#define CROWDBOTS_COLOR_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace crowdbots {

// Display colors. The first six cycle; silver marks a freshly injected robot.
enum class Color : std::uint8_t { kRed, kGreen, kBlue, kOrange, kCyan, kPurple, kSilver };

inline constexpr std::array<Color, 6> kColorCycle = {Color::kRed,    Color::kGreen,
                                                     Color::kBlue,   Color::kOrange,
                                                     Color::kCyan,   Color::kPurple};

constexpr std::string_view color_name(Color c) {
  constexpr std::array<std::string_view, 7> kNames = {"red",  "green",  "blue",  "orange",
                                                      "cyan", "purple", "silver"};
  return kNames[static_cast<std::size_t>(c)];
}

constexpr char color_letter(Color c) { return color_name(c)[0]; }

constexpr std::optional<Color> color_from_letter(char letter) {
  for (int i = 0; i <= static_cast<int>(Color::kSilver); ++i)
    if (color_letter(static_cast<Color>(i)) == letter) return static_cast<Color>(i);
  return std::nullopt;
}

constexpr std::optional<Color> color_from_name(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Color::kSilver); ++i)
    if (color_name(static_cast<Color>(i)) == name) return static_cast<Color>(i);
  return std::nullopt;
}

}  // namespace crowdbots

#endif  // CROWDBOTS_COLOR_H_
