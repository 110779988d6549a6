// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kvtp {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    /// Takes ownership of `data`; throws if its length is not rows * cols or an entry is not finite.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(const std::vector<Vector>& rows);

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    bool empty() const noexcept { return m_data.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return m_data[r * m_cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return m_data[r * m_cols + c]; }

    std::span<double> row(std::size_t r) { return {m_data.data() + r * m_cols, m_cols}; }
    std::span<const double> row(std::size_t r) const { return {m_data.data() + r * m_cols, m_cols}; }

    std::span<const double> data() const noexcept { return m_data; }
    std::span<double> data() noexcept { return m_data; }

    /// Copy of rows [first, first + count).
    Matrix slice_rows(std::size_t first, std::size_t count) const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_data;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

/// <u, v> / (|u| |v|). Zero-norm inputs are an error, never a silent 0.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Gradient of cosine_similarity(x, v) with respect to x.
Vector cosine_similarity_grad(std::span<const double> x, std::span<const double> v);

/// softmax(x / temperature) with max subtraction.
Vector softmax(std::span<const double> x, double temperature);

/// Each row divided by its L2 norm.
Matrix normalize_rows(const Matrix& m);

/// Backward of normalize_rows: maps a gradient on the normalized rows to the raw rows.
Matrix normalize_rows_backward(const Matrix& raw, const Matrix& upstream);

/// a * b.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a^T * b.
Matrix matmul_transpose_lhs(const Matrix& a, const Matrix& b);

/// softmax(query . keys^T / (temperature * sqrt(dim_scale))) . values
Vector cross_attention(std::span<const double> query, const Matrix& keys, const Matrix& values,
                       double temperature, double dim_scale);

struct CrossAttentionGrad {
    Vector query;
    Matrix keys;
    Matrix values;
    double temperature = 0.0;
};

CrossAttentionGrad cross_attention_backward(std::span<const double> query, const Matrix& keys,
                                            const Matrix& values, double temperature, double dim_scale,
                                            std::span<const double> upstream);

}  // namespace kvtp
