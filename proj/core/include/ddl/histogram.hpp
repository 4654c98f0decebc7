#pragma once

#include <iosfwd>
#include <span>

#include "ddl/tensor.hpp"

namespace ddl {

/// Bin nodes t_r = -1 + (r-1) * 2/(R-1), uniformly filling [-1, 1].
Vector histogram_nodes(std::size_t bins);

/// Kernel sharpness used when none is configured: 1/(2 step^2), i.e. a
/// gaussian kernel whose standard deviation equals one bin step.
double default_gamma(std::size_t bins);

/// Differentiable soft histogram over similarity samples in [-1, 1].
///
/// Raw bin mass:  u_r = (1/|S|) sum_i exp(-gamma (s_i - t_r)^2)
/// The gaussian kernel does not produce a probability vector, so masses are
/// renormalized to sum to 1; gradients compose the raw-mass derivative
///   du_r/ds_i = -2 gamma exp(-gamma (s_i - t_r)^2) (s_i - t_r) / |S|
/// with the normalization quotient rule. Kernel evaluations are cached at
/// estimation time for the gradient pass.
class SoftHistogram {
public:
    static SoftHistogram estimate(std::span<const double> similarities, std::size_t bins,
                                  double gamma);

    std::size_t bins() const { return nodes_.size(); }
    std::size_t sample_count() const { return similarities_.size(); }
    double gamma() const { return gamma_; }
    const Vector& nodes() const { return nodes_; }
    const Vector& masses() const { return masses_; }       // normalized, sum 1
    const Vector& raw_masses() const { return raw_; }
    double raw_total() const { return raw_total_; }

    /// d(raw mass r)/d(sample i), bins x samples.
    Matrix raw_mass_gradient() const;
    /// d(normalized mass r)/d(sample i), bins x samples.
    Matrix mass_gradient() const;
    /// dL/ds_i given upstream dL/dh_r.
    Vector backprop(std::span<const double> upstream) const;

    bool same_binning(const SoftHistogram& other) const {
        return bins() == other.bins();
    }

private:
    Vector nodes_;
    Vector masses_;
    Vector raw_;
    Vector similarities_;
    Matrix kernel_; // samples x bins, exp(-gamma (s_i - t_r)^2)
    double gamma_ = 0.0;
    double raw_total_ = 0.0;
};

/// Arithmetic mean of a similarity set; dE/ds_i = 1/|S|. Throws on empty
/// input.
double expectation(std::span<const double> values);

/// (node, mass) rows for plotting.
void write_histogram_csv(std::ostream& out, const SoftHistogram& histogram);

} // namespace ddl
