// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvtp/error.hpp"

namespace kvtp {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : m_rows(rows), m_cols(cols), m_data(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : m_rows(rows), m_cols(cols), m_data(std::move(data)) {
    require(m_data.size() == rows * cols, "matrix data length " + std::to_string(m_data.size()) +
                                              " does not match shape " + std::to_string(rows) + "x" +
                                              std::to_string(cols));
    for (double v : m_data) {
        require(std::isfinite(v), "matrix entries must be finite", ErrorCode::Numerical);
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
    if (rows.empty()) {
        return {};
    }
    const std::size_t cols = rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        require(r.size() == cols, "ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), cols, std::move(data));
}

Matrix Matrix::slice_rows(std::size_t first, std::size_t count) const {
    require(first + count <= m_rows, "row slice out of range");
    std::vector<double> data(m_data.begin() + static_cast<std::ptrdiff_t>(first * m_cols),
                             m_data.begin() + static_cast<std::ptrdiff_t>((first + count) * m_cols));
    Matrix out;
    out.m_rows = count;
    out.m_cols = m_cols;
    out.m_data = std::move(data);
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double l2_norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    require(u.size() == v.size(), "cosine_similarity: dimension mismatch (" + std::to_string(u.size()) +
                                      " vs " + std::to_string(v.size()) + ")");
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    require(nu > 0.0 && nv > 0.0, "cosine_similarity: zero-norm input", ErrorCode::Numerical);
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Vector cosine_similarity_grad(std::span<const double> x, std::span<const double> v) {
    require(x.size() == v.size(), "cosine_similarity_grad: dimension mismatch");
    const double nx = l2_norm(x);
    const double nv = l2_norm(v);
    require(nx > 0.0 && nv > 0.0, "cosine_similarity_grad: zero-norm input", ErrorCode::Numerical);
    // Unclamped cosine keeps the gradient consistent with the smooth map.
    const double c = dot(x, v) / (nx * nv);
    Vector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] = v[i] / (nx * nv) - c * x[i] / (nx * nx);
    }
    return g;
}

Vector softmax(std::span<const double> x, double temperature) {
    require(temperature > 0.0 && std::isfinite(temperature), "softmax: temperature must be positive");
    require(!x.empty(), "softmax: empty input");
    const double peak = *std::max_element(x.begin(), x.end());
    Vector out(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(std::isfinite(x[i]), "softmax: non-finite input", ErrorCode::Numerical);
        out[i] = std::exp((x[i] - peak) / temperature);
        total += out[i];
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double n = l2_norm(m.row(r));
        require(n > 0.0, "normalize_rows: zero-norm row " + std::to_string(r), ErrorCode::Numerical);
        for (double& v : out.row(r)) {
            v /= n;
        }
    }
    return out;
}

Matrix normalize_rows_backward(const Matrix& raw, const Matrix& upstream) {
    require(raw.rows() == upstream.rows() && raw.cols() == upstream.cols(),
            "normalize_rows_backward: shape mismatch");
    Matrix out(raw.rows(), raw.cols());
    for (std::size_t r = 0; r < raw.rows(); ++r) {
        const auto x = raw.row(r);
        const auto g = upstream.row(r);
        const double n = l2_norm(x);
        const double proj = dot(x, g) / (n * n);
        auto o = out.row(r);
        for (std::size_t c = 0; c < raw.cols(); ++c) {
            o[c] = (g[c] - proj * x[c]) / n;
        }
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto o = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto br = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                o[j] += aik * br[j];
            }
        }
    }
    return out;
}

Matrix matmul_transpose_lhs(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "matmul_transpose_lhs: row mismatch");
    Matrix out(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto ar = a.row(r);
        const auto br = b.row(r);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            auto o = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                o[j] += ar[i] * br[j];
            }
        }
    }
    return out;
}

namespace {

void check_attention_shapes(std::span<const double> query, const Matrix& keys, const Matrix& values,
                            double temperature, double dim_scale) {
    require(keys.rows() >= 1, "cross_attention: at least one key row required");
    require(keys.rows() == values.rows(), "cross_attention: keys/values row mismatch");
    require(keys.cols() == query.size(), "cross_attention: key width " + std::to_string(keys.cols()) +
                                             " does not match query dim " + std::to_string(query.size()));
    require(values.cols() == query.size(), "cross_attention: value width does not match query dim");
    require(temperature > 0.0, "cross_attention: temperature must be positive");
    require(dim_scale > 0.0, "cross_attention: dim_scale must be positive");
}

Vector attention_scores(std::span<const double> query, const Matrix& keys, double scale) {
    Vector s(keys.rows());
    for (std::size_t j = 0; j < keys.rows(); ++j) {
        s[j] = dot(query, keys.row(j)) / scale;
    }
    return s;
}

}  // namespace

Vector cross_attention(std::span<const double> query, const Matrix& keys, const Matrix& values,
                       double temperature, double dim_scale) {
    check_attention_shapes(query, keys, values, temperature, dim_scale);
    const double scale = temperature * std::sqrt(dim_scale);
    const Vector w = softmax(attention_scores(query, keys, scale), 1.0);
    Vector out(values.cols(), 0.0);
    for (std::size_t j = 0; j < values.rows(); ++j) {
        const auto v = values.row(j);
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] += w[j] * v[c];
        }
    }
    return out;
}

CrossAttentionGrad cross_attention_backward(std::span<const double> query, const Matrix& keys,
                                            const Matrix& values, double temperature, double dim_scale,
                                            std::span<const double> upstream) {
    check_attention_shapes(query, keys, values, temperature, dim_scale);
    require(upstream.size() == values.cols(), "cross_attention_backward: upstream gradient dim mismatch");
    const double scale = temperature * std::sqrt(dim_scale);
    const Vector s = attention_scores(query, keys, scale);
    const Vector w = softmax(s, 1.0);
    const std::size_t m = keys.rows();

    CrossAttentionGrad g;
    g.values = Matrix(m, values.cols());
    g.keys = Matrix(m, keys.cols());
    g.query.assign(query.size(), 0.0);

    // d out / d w_j = <upstream, v_j>; softmax Jacobian gives ds_j = w_j (dw_j - sum_k w_k dw_k).
    Vector dw(m);
    double mean_dw = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        dw[j] = dot(upstream, values.row(j));
        mean_dw += w[j] * dw[j];
        auto gv = g.values.row(j);
        for (std::size_t c = 0; c < values.cols(); ++c) {
            gv[c] = w[j] * upstream[c];
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        const double ds = w[j] * (dw[j] - mean_dw);
        const auto k = keys.row(j);
        auto gk = g.keys.row(j);
        for (std::size_t c = 0; c < keys.cols(); ++c) {
            g.query[c] += ds * k[c] / scale;
            gk[c] = ds * query[c] / scale;
        }
        g.temperature -= ds * s[j] / temperature;
    }
    return g;
}

}  // namespace kvtp
