#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>

#include "ddl/data.hpp"

namespace ddl {

/// Synthetic identity benchmark with one easy domain and K hard domains of
/// increasing severity. Easy samples are light gaussian perturbations of a
/// per-identity prototype direction; hard-k samples additionally pass
/// through a fixed rank-reducing projection, so their positive/negative
/// similarity distributions overlap more the harsher the domain.
struct SynthConfig {
    std::size_t identities = 200;
    std::size_t samples_per_identity = 6; // per domain
    std::size_t dim = 48;
    double easy_sigma = 0.05;
    std::vector<double> hard_sigmas{0.35, 0.55};
    std::vector<std::size_t> hard_ranks{24, 12};
    std::uint64_t seed = 1;

    std::size_t num_hard_domains() const { return hard_sigmas.size(); }
    void validate() const; // throws std::invalid_argument on bad fields
};

struct SynthResult {
    Matrix prototypes; // identities x dim, unit rows
    Dataset dataset;
};

/// Deterministic in config.seed: independent derived streams for prototypes,
/// per-domain projections, and sample noise.
///   easy sample   = normalize(prototype + easy_sigma * g)
///   hard-k sample = normalize(Pk^T Pk (prototype + hard_sigma[k] * g))
/// with Pk a seed-fixed orthonormal hard_ranks[k] x dim projection shared by
/// every sample of domain k.
SynthResult generate(const SynthConfig& config);

/// Identity-disjoint split; deterministic in seed. fraction is the share of
/// identities assigned to the first (train) part.
std::pair<Dataset, Dataset> split_train_eval(const Dataset& data, double fraction,
                                             std::uint64_t seed);

/// Columnar text format, one sample per record:
///   ddl-dataset v1
///   dim <D> hard_domains <K> samples <N>
///   <id> <domain> <f0> ... <fD-1>
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);

void write_dataset_file(const std::string& path, const Dataset& data);
Dataset read_dataset_file(const std::string& path);

} // namespace ddl
