#include "ddl/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace ddl {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("Matrix: shape must be positive");
}

void Matrix::fill(double value) {
    for (double& x : data_) x = value;
}

Matrix matmul(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b) {
    const std::size_t m = transpose_a ? a.cols() : a.rows();
    const std::size_t k = transpose_a ? a.rows() : a.cols();
    const std::size_t kb = transpose_b ? b.cols() : b.rows();
    const std::size_t n = transpose_b ? b.rows() : b.cols();
    if (k != kb) throw std::invalid_argument("matmul: inner dimensions do not match");

    Matrix c(m, n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                const double av = transpose_a ? a(t, i) : a(i, t);
                const double bv = transpose_b ? b(j, t) : b(t, j);
                acc += av * bv;
            }
            c(i, j) = acc;
        }
    }
    return c;
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
    return acc;
}

double norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

bool all_finite(std::span<const double> values) {
    for (const double x : values) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const Matrix& m) {
    return all_finite(std::span<const double>(m.data(), m.size()));
}

Vector l2_normalize(std::span<const double> v) {
    const double n = norm(v);
    if (n <= kNormEpsilon) throw std::domain_error("l2_normalize: degenerate near-zero vector");
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    constexpr double unit_tolerance = 1e-6;
    if (std::abs(norm(u) - 1.0) > unit_tolerance || std::abs(norm(v) - 1.0) > unit_tolerance)
        throw std::invalid_argument("cosine_similarity: inputs must be unit-norm");
    return clamp_unit(dot(u, v));
}

std::uint64_t fnv1a_bytes(const void* data, std::size_t size, std::uint64_t seed) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace ddl
