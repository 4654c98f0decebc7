#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ddl {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Double precision throughout: the
/// losses involve exp/log near zero and every gradient is checked against
/// central finite differences.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    void fill(double value);

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// c = op(a) * op(b), plain triple loop with deterministic accumulation order.
Matrix matmul(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b);

double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> v);

bool all_finite(std::span<const double> values);
bool all_finite(const Matrix& m);

inline constexpr double kNormEpsilon = 1e-12;

/// Unit-norm copy of v. Throws std::domain_error when ||v|| <= 1e-12.
Vector l2_normalize(std::span<const double> v);

/// Inner product of two unit vectors, clamped to [-1, 1] against rounding
/// drift. Throws std::invalid_argument when either norm deviates from 1 by
/// more than 1e-6.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

inline double clamp_unit(double x) {
    return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
}

/// FNV-1a over raw bytes; used for batch/parameter fingerprints.
std::uint64_t fnv1a_bytes(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

} // namespace ddl
