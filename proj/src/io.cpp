// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kvtp/error.hpp"

namespace kvtp {

static_assert(std::endian::native == std::endian::little, "binary matrix I/O assumes a little-endian host");

namespace {

std::uint64_t load_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& token, const std::string& context) {
    double v = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::Format, context + ": cannot parse number '" + token + "'");
    }
    if (!std::isfinite(v)) {
        throw Error(ErrorCode::Format, context + ": non-finite number '" + token + "'");
    }
    return v;
}

}  // namespace

Matrix read_matrix_binary(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    require(bytes.size() >= 16, path.string() + ": truncated matrix header", ErrorCode::Format);
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint64_t rows = load_u64(raw);
    const std::uint64_t cols = load_u64(raw + 8);
    require(cols == 0 || rows <= (bytes.size() - 16) / 4 / cols + 1, path.string() + ": implausible matrix shape",
            ErrorCode::Format);
    require(bytes.size() == 16 + rows * cols * 4,
            path.string() + ": payload size does not match header " + std::to_string(rows) + "x" +
                std::to_string(cols),
            ErrorCode::Format);
    std::vector<double> data(rows * cols);
    for (std::size_t i = 0; i < data.size(); ++i) {
        float f = 0.0f;
        std::memcpy(&f, raw + 16 + 4 * i, sizeof(f));
        data[i] = static_cast<double>(f);
    }
    try {
        return Matrix(rows, cols, std::move(data));
    } catch (const Error& e) {
        throw Error(ErrorCode::Format, path.string() + ": " + e.what());
    }
}

void write_matrix_binary(const std::filesystem::path& path, const Matrix& m) {
    std::string bytes(16 + m.rows() * m.cols() * 4, '\0');
    const std::uint64_t rows = m.rows();
    const std::uint64_t cols = m.cols();
    std::memcpy(bytes.data(), &rows, 8);
    std::memcpy(bytes.data() + 8, &cols, 8);
    const auto data = m.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const float f = static_cast<float>(data[i]);
        std::memcpy(bytes.data() + 16 + 4 * i, &f, 4);
    }
    write_text_file(path, bytes);
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<Vector> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        try {
            rows.push_back(parse_number_list(t));
        } catch (const Error& e) {
            throw Error(ErrorCode::Format, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        require(rows.back().size() == rows.front().size(),
                path.string() + ":" + std::to_string(line_no) + ": ragged CSV row", ErrorCode::Format);
    }
    require(!rows.empty(), path.string() + ": empty matrix file", ErrorCode::Format);
    return Matrix::from_rows(rows);
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            out << (c ? "," : "") << m(r, c);
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path.string(), ErrorCode::Format);
    std::array<unsigned char, 16> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    if (in.gcount() == 16) {
        const std::uint64_t rows = load_u64(header.data());
        const std::uint64_t cols = load_u64(header.data() + 8);
        const auto size = std::filesystem::file_size(path);
        if (cols != 0 && rows <= size / 4 / cols + 1 && size == 16 + rows * cols * 4) {
            return read_matrix_binary(path);
        }
    }
    return read_matrix_csv(path);
}

Vector parse_number_list(const std::string& text) {
    Vector out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        const std::string t = trim(token);
        require(!t.empty(), "empty field in number list '" + text + "'", ErrorCode::Format);
        out.push_back(parse_double(t, "number list"));
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path.string(), ErrorCode::Format);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "cannot write " + path.string(), ErrorCode::Format);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(static_cast<bool>(out), "write failed for " + path.string(), ErrorCode::Format);
}

}  // namespace kvtp
