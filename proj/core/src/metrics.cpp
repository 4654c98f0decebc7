#include "ddl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ddl/checkpoint.hpp"

namespace ddl {

double expectation_margin(std::span<const double> positives, std::span<const double> negatives) {
    return expectation(positives) - expectation(negatives);
}

double histogram_intersection(std::span<const double> pos_masses,
                              std::span<const double> neg_masses) {
    if (pos_masses.size() != neg_masses.size())
        throw std::invalid_argument("histogram_intersection: bin mismatch");
    double acc = 0.0;
    for (std::size_t r = 0; r < pos_masses.size(); ++r)
        acc += std::min(pos_masses[r], neg_masses[r]);
    return acc;
}

double histogram_intersection(const SoftHistogram& pos, const SoftHistogram& neg) {
    if (!pos.same_binning(neg))
        throw std::invalid_argument("histogram_intersection: bin mismatch");
    return histogram_intersection(pos.masses(), neg.masses());
}

VerificationResult verification_metrics(std::span<const double> genuine,
                                        std::span<const double> impostor,
                                        std::span<const double> far_grid) {
    if (genuine.empty() || impostor.empty())
        throw std::invalid_argument("verification_metrics: empty score list");

    std::vector<double> g(genuine.begin(), genuine.end());
    std::vector<double> imp(impostor.begin(), impostor.end());
    std::sort(g.begin(), g.end());
    std::sort(imp.begin(), imp.end());

    auto count_ge = [](const std::vector<double>& sorted, double t) {
        return static_cast<double>(sorted.end() -
                                   std::lower_bound(sorted.begin(), sorted.end(), t));
    };

    // candidate thresholds: every score, plus one above the maximum
    std::vector<double> candidates;
    candidates.reserve(g.size() + imp.size() + 1);
    candidates.insert(candidates.end(), g.begin(), g.end());
    candidates.insert(candidates.end(), imp.begin(), imp.end());
    candidates.push_back(std::max(g.back(), imp.back()) + 1.0);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    VerificationResult result;
    const double total = static_cast<double>(g.size() + imp.size());
    double best_correct = -1.0;
    for (const double t : candidates) {
        const double correct = count_ge(g, t) + (static_cast<double>(imp.size()) - count_ge(imp, t));
        if (correct > best_correct) { // strict: equal-accuracy ties keep the lowest threshold
            best_correct = correct;
            result.best_threshold = t;
        }
    }
    result.accuracy = best_correct / total;

    for (const double far : far_grid) {
        const double q = std::clamp(1.0 - far, 0.0, 1.0);
        const double pos = q * static_cast<double>(imp.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(lo);
        const double threshold =
            lo + 1 < imp.size() ? imp[lo] + frac * (imp[lo + 1] - imp[lo]) : imp[lo];
        result.tar.push_back(count_ge(g, threshold) / static_cast<double>(g.size()));
    }
    return result;
}

double rank1_identification(const Matrix& gallery, const std::vector<int>& gallery_ids,
                            const Matrix& probes, const std::vector<int>& probe_ids) {
    if (gallery.rows() == 0 || probes.rows() == 0)
        throw std::invalid_argument("rank1_identification: empty gallery or probe set");
    if (gallery_ids.size() != gallery.rows() || probe_ids.size() != probes.rows())
        throw std::invalid_argument("rank1_identification: id count mismatch");
    {
        std::vector<int> ids = gallery_ids;
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw std::invalid_argument("rank1_identification: gallery ids must be unique");
    }

    std::size_t correct = 0;
    for (std::size_t p = 0; p < probes.rows(); ++p) {
        double best = -2.0;
        std::size_t best_g = 0;
        for (std::size_t gi = 0; gi < gallery.rows(); ++gi) {
            const double s = dot(probes.row(p), gallery.row(gi));
            if (s > best) { // ties keep the lowest gallery index
                best = s;
                best_g = gi;
            }
        }
        if (gallery_ids[best_g] == probe_ids[p]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(probes.rows());
}

const DomainEvalStats& EvalReport::stats(const std::string& domain) const {
    for (const auto& d : domains) {
        if (d.domain == domain) return d;
    }
    throw std::out_of_range("EvalReport: no stats for domain " + domain);
}

std::string EvalReport::to_json_string() const {
    nlohmann::json j;
    j["far_grid"] = far_grid;
    for (const auto& d : domains) {
        nlohmann::json dj;
        dj["expectation_margin"] = d.expectation_margin;
        dj["histogram_intersection"] = d.histogram_intersection;
        dj["verification_accuracy"] = d.verification_accuracy;
        dj["tar"] = d.tar;
        dj["rank1"] = d.rank1;
        j["domains"][d.domain] = dj;
    }
    return j.dump(2);
}

std::string EvalReport::csv_header(const EvalReport& sample) {
    std::ostringstream out;
    out << "iteration";
    for (const auto& d : sample.domains) {
        out << ',' << d.domain << "_margin"
            << ',' << d.domain << "_intersection"
            << ',' << d.domain << "_accuracy"
            << ',' << d.domain << "_rank1";
        for (const double far : sample.far_grid)
            out << ',' << d.domain << "_tar_at_" << format_g17(far);
    }
    return out.str();
}

std::string EvalReport::csv_row(std::uint64_t iteration) const {
    std::ostringstream out;
    out << iteration;
    for (const auto& d : domains) {
        out << ',' << format_g17(d.expectation_margin)
            << ',' << format_g17(d.histogram_intersection)
            << ',' << format_g17(d.verification_accuracy)
            << ',' << format_g17(d.rank1);
        for (const double t : d.tar) out << ',' << format_g17(t);
    }
    return out.str();
}

} // namespace ddl
