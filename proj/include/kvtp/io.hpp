// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "kvtp/numerics.hpp"

namespace kvtp {

// Binary layout: u64 rows, u64 cols (little endian), then rows*cols little-endian f32, row-major.
// Values are widened to f64 on load.
Matrix read_matrix_binary(const std::filesystem::path& path);
void write_matrix_binary(const std::filesystem::path& path, const Matrix& m);

// One row per line, comma separated. Blank lines and lines starting with '#' are skipped.
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

/// Binary when the header matches the file size, CSV otherwise.
Matrix read_matrix(const std::filesystem::path& path);

/// Parses "1,2,3" (whitespace tolerated) into a vector.
Vector parse_number_list(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace kvtp
