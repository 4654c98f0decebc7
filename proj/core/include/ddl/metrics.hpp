#pragma once

#include <span>
#include <string>
#include <vector>

#include "ddl/histogram.hpp"
#include "ddl/tensor.hpp"

namespace ddl {

/// E[S+] - E[S-]; larger means better-separated genuine/impostor scores.
double expectation_margin(std::span<const double> positives, std::span<const double> negatives);

/// sum_r min(h+_r, h-_r); overlap mass between the two histograms.
double histogram_intersection(std::span<const double> pos_masses,
                              std::span<const double> neg_masses);
double histogram_intersection(const SoftHistogram& pos, const SoftHistogram& neg);

struct VerificationResult {
    double accuracy = 0.0;
    double best_threshold = 0.0;
    std::vector<double> tar; // aligned with the FAR grid
};

/// Accuracy at the best decision threshold (genuine iff score >= t; ties
/// resolved toward the lowest threshold) and TAR at each FAR, thresholds
/// taken from impostor-score quantiles with linear interpolation.
VerificationResult verification_metrics(std::span<const double> genuine,
                                        std::span<const double> impostor,
                                        std::span<const double> far_grid);

/// Fraction of probes whose nearest gallery row (cosine) shares their id;
/// ties broken by the lowest gallery index. Gallery ids must be unique.
double rank1_identification(const Matrix& gallery, const std::vector<int>& gallery_ids,
                            const Matrix& probes, const std::vector<int>& probe_ids);

struct DomainEvalStats {
    std::string domain;
    double expectation_margin = 0.0;
    double histogram_intersection = 0.0;
    double verification_accuracy = 0.0;
    std::vector<double> tar;
    double rank1 = 0.0;
};

struct EvalReport {
    std::vector<double> far_grid;
    std::vector<DomainEvalStats> domains;

    const DomainEvalStats& stats(const std::string& domain) const;
    std::string to_json_string() const;

    /// Flat CSV, one row per checkpoint: iteration column followed by the
    /// per-domain metric columns.
    static std::string csv_header(const EvalReport& sample);
    std::string csv_row(std::uint64_t iteration) const;
};

} // namespace ddl
