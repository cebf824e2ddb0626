// Copyright 2026 The sasv-ensemble Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sasv::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to "<path>.tmp" and renames over path once the write succeeded,
/// so readers never observe a truncated file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Shortest round-trip-safe text for a double (17 significant digits).
std::string format_double(double value);
double parse_double(std::string_view text);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string digest_hex(std::string_view bytes);

std::vector<std::string_view> split(std::string_view text, char delimiter);
/// Splits on runs of spaces and tabs.
std::vector<std::string_view> split_whitespace(std::string_view text);
std::string_view trim(std::string_view text);

/// Parses "key = value" lines; blank lines and '#' comments are skipped.
/// Errors cite the 1-based line number.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

std::size_t parse_size(std::string_view key, std::string_view text);
std::uint64_t parse_u64(std::string_view key, std::string_view text);
double parse_real(std::string_view key, std::string_view text);
bool parse_bool(std::string_view key, std::string_view text);

}  // namespace sasv::io
