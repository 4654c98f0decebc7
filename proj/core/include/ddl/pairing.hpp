#pragma once

#include <cstdint>
#include <stdexcept>

#include "ddl/data.hpp"
#include "ddl/rng.hpp"

namespace ddl {

/// Raised when a similarity set comes out empty (every positive pair was
/// filtered); the trainer logs and resamples the batch.
class DegenerateDistributionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PairRef {
    std::size_t first = 0; // row indices into the owning batch
    std::size_t second = 0;
};

/// One distribution's worth of a mini-batch: b positive pairs plus b
/// singles of pairwise-distinct identities, all from one domain.
struct DistributionBlock {
    Domain domain;
    std::vector<PairRef> positive_pairs;
    std::vector<std::size_t> singles;
};

/// Teacher block first, then one block per student distribution. Total row
/// count is 3b(K+1).
struct MiniBatch {
    Matrix features;
    std::vector<int> identities; // per row
    std::vector<DistributionBlock> blocks;
    std::size_t pairs_per_block = 0;

    std::size_t rows() const { return features.rows(); }
};

/// Samples of one domain grouped by identity (identities sorted, sample
/// order preserved), the unit batch builders draw from.
struct SamplePool {
    Domain domain;
    const Dataset* dataset = nullptr;
    std::vector<std::pair<int, std::vector<std::size_t>>> by_identity;

    static SamplePool from(const Dataset& data, Domain domain);
    /// Merges several pools into one mixture pool (all hard severities as a
    /// single student distribution).
    static SamplePool merge(const std::vector<SamplePool>& pools);
};

/// b positive pairs: each two distinct samples sharing identity and domain,
/// identity drawn uniformly among identities with >= 2 samples. Deterministic
/// in the rng state. Returned indices point into pool.dataset->samples.
std::vector<std::pair<std::size_t, std::size_t>> build_positive_pairs(const SamplePool& pool,
                                                                      std::size_t pairs_wanted,
                                                                      Rng& rng);

/// Assembles the full (K+1)-block mini-batch; pools[0] is the teacher pool.
/// Block rows are laid out contiguously: 2b pair rows then b single rows.
MiniBatch build_minibatch(const std::vector<SamplePool>& pools, std::size_t pairs_per_block,
                          Rng& rng);

struct SimilarityEntry {
    double value = 0.0;
    std::size_t row_a = 0;
    std::size_t row_b = 0;
};

struct SimilaritySet {
    std::vector<SimilarityEntry> entries;
    Vector values() const;
    std::size_t size() const { return entries.size(); }
};

/// Positive-pair similarities with the negative-similarity outlier filter
/// applied (entries < 0 dropped). Throws DegenerateDistributionError when
/// nothing survives.
SimilaritySet positive_similarities(const Matrix& embeddings, const DistributionBlock& block);

/// Hard negative mining: for each single i, the largest similarity against
/// the other singles of the block, ties broken by the smallest index.
SimilaritySet hard_negative_similarities(const Matrix& embeddings, const DistributionBlock& block);

/// Ablation variant: partner drawn uniformly among the other singles.
SimilaritySet random_negative_similarities(const Matrix& embeddings, const DistributionBlock& block,
                                           Rng& rng);

struct BlockPairSets {
    Domain domain;
    SimilaritySet positives;
    SimilaritySet negatives;
};

} // namespace ddl
