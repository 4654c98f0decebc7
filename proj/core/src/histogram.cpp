#include "ddl/histogram.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "ddl/checkpoint.hpp"

namespace ddl {

Vector histogram_nodes(std::size_t bins) {
    if (bins < 2) throw std::invalid_argument("histogram_nodes: need at least two bins");
    const double step = 2.0 / static_cast<double>(bins - 1);
    Vector nodes(bins);
    for (std::size_t r = 0; r < bins; ++r) nodes[r] = -1.0 + static_cast<double>(r) * step;
    nodes.front() = -1.0;
    nodes.back() = 1.0;
    return nodes;
}

double default_gamma(std::size_t bins) {
    const double step = 2.0 / static_cast<double>(bins - 1);
    return 1.0 / (2.0 * step * step);
}

SoftHistogram SoftHistogram::estimate(std::span<const double> similarities, std::size_t bins,
                                      double gamma) {
    if (similarities.empty()) throw std::invalid_argument("SoftHistogram: empty similarity set");
    if (!(gamma > 0.0)) throw std::invalid_argument("SoftHistogram: gamma must be positive");
    for (const double s : similarities) {
        if (!(s >= -1.0 && s <= 1.0))
            throw std::invalid_argument("SoftHistogram: similarity outside [-1, 1]");
    }

    SoftHistogram h;
    h.gamma_ = gamma;
    h.nodes_ = histogram_nodes(bins);
    h.similarities_.assign(similarities.begin(), similarities.end());

    const std::size_t n = similarities.size();
    h.kernel_ = Matrix(n, bins);
    h.raw_.assign(bins, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < bins; ++r) {
            const double d = similarities[i] - h.nodes_[r];
            const double w = std::exp(-gamma * d * d);
            h.kernel_(i, r) = w;
            h.raw_[r] += w * inv_n;
        }
    }
    h.raw_total_ = 0.0;
    for (const double u : h.raw_) h.raw_total_ += u;
    h.masses_.resize(bins);
    for (std::size_t r = 0; r < bins; ++r) h.masses_[r] = h.raw_[r] / h.raw_total_;
    return h;
}

Matrix SoftHistogram::raw_mass_gradient() const {
    const std::size_t n = sample_count();
    const std::size_t r_count = bins();
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix g(r_count, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < r_count; ++r) {
            g(r, i) = -2.0 * gamma_ * kernel_(i, r) * (similarities_[i] - nodes_[r]) * inv_n;
        }
    }
    return g;
}

Matrix SoftHistogram::mass_gradient() const {
    const std::size_t n = sample_count();
    const std::size_t r_count = bins();
    Matrix raw_grad = raw_mass_gradient();
    // dh_r/ds_i = du_r/ds_i / T - h_r * (dT/ds_i) / T
    Matrix g(r_count, n);
    for (std::size_t i = 0; i < n; ++i) {
        double total_grad = 0.0;
        for (std::size_t r = 0; r < r_count; ++r) total_grad += raw_grad(r, i);
        for (std::size_t r = 0; r < r_count; ++r) {
            g(r, i) = raw_grad(r, i) / raw_total_ - masses_[r] * total_grad / raw_total_;
        }
    }
    return g;
}

Vector SoftHistogram::backprop(std::span<const double> upstream) const {
    if (upstream.size() != bins())
        throw std::invalid_argument("SoftHistogram::backprop: upstream size mismatch");
    const Matrix g = mass_gradient();
    Vector out(sample_count(), 0.0);
    for (std::size_t r = 0; r < bins(); ++r)
        for (std::size_t i = 0; i < sample_count(); ++i) out[i] += upstream[r] * g(r, i);
    return out;
}

double expectation(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("expectation: empty set");
    double acc = 0.0;
    for (const double v : values) acc += v;
    return acc / static_cast<double>(values.size());
}

void write_histogram_csv(std::ostream& out, const SoftHistogram& histogram) {
    out << "node,mass\n";
    for (std::size_t r = 0; r < histogram.bins(); ++r) {
        out << format_g17(histogram.nodes()[r]) << ',' << format_g17(histogram.masses()[r]) << '\n';
    }
}

} // namespace ddl
