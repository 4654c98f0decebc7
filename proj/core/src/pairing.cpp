#include "ddl/pairing.hpp"

#include <algorithm>
#include <map>

namespace ddl {

SamplePool SamplePool::from(const Dataset& data, Domain domain) {
    SamplePool pool;
    pool.domain = domain;
    pool.dataset = &data;
    std::map<int, std::vector<std::size_t>> grouped;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        if (data.samples[i].domain == domain) grouped[data.samples[i].identity].push_back(i);
    }
    pool.by_identity.assign(grouped.begin(), grouped.end());
    return pool;
}

SamplePool SamplePool::merge(const std::vector<SamplePool>& pools) {
    if (pools.empty()) throw std::invalid_argument("SamplePool::merge: no pools");
    SamplePool merged;
    merged.domain = Domain::mixture();
    merged.dataset = pools.front().dataset;
    std::map<int, std::vector<std::size_t>> grouped;
    for (const auto& pool : pools) {
        if (pool.dataset != merged.dataset)
            throw std::invalid_argument("SamplePool::merge: pools must share a dataset");
        for (const auto& [id, indices] : pool.by_identity) {
            auto& dst = grouped[id];
            dst.insert(dst.end(), indices.begin(), indices.end());
        }
    }
    for (auto& [id, indices] : grouped) std::sort(indices.begin(), indices.end());
    merged.by_identity.assign(grouped.begin(), grouped.end());
    return merged;
}

std::vector<std::pair<std::size_t, std::size_t>> build_positive_pairs(const SamplePool& pool,
                                                                      std::size_t pairs_wanted,
                                                                      Rng& rng) {
    if (pairs_wanted == 0) throw std::invalid_argument("build_positive_pairs: need at least one pair");
    std::vector<std::size_t> eligible; // indices into pool.by_identity
    for (std::size_t i = 0; i < pool.by_identity.size(); ++i) {
        if (pool.by_identity[i].second.size() >= 2) eligible.push_back(i);
    }
    if (eligible.empty())
        throw std::invalid_argument("build_positive_pairs: no identity has two samples in domain " +
                                    pool.domain.name());

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(pairs_wanted);
    for (std::size_t p = 0; p < pairs_wanted; ++p) {
        const auto& [id, indices] = pool.by_identity[eligible[rng.uniform_index(eligible.size())]];
        (void)id;
        const std::size_t a = rng.uniform_index(indices.size());
        std::size_t b = rng.uniform_index(indices.size() - 1);
        if (b >= a) ++b;
        pairs.emplace_back(indices[a], indices[b]);
    }
    return pairs;
}

namespace {

// b singles of pairwise-distinct identities, one uniformly drawn sample each
std::vector<std::size_t> draw_singles(const SamplePool& pool, std::size_t count, Rng& rng) {
    if (pool.by_identity.size() < count)
        throw std::invalid_argument("build_minibatch: fewer than b distinct identities in pool " +
                                    pool.domain.name());
    std::vector<std::size_t> identity_order(pool.by_identity.size());
    for (std::size_t i = 0; i < identity_order.size(); ++i) identity_order[i] = i;
    rng.shuffle(identity_order);

    std::vector<std::size_t> singles;
    singles.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& indices = pool.by_identity[identity_order[i]].second;
        singles.push_back(indices[rng.uniform_index(indices.size())]);
    }
    return singles;
}

} // namespace

MiniBatch build_minibatch(const std::vector<SamplePool>& pools, std::size_t pairs_per_block,
                          Rng& rng) {
    if (pools.empty()) throw std::invalid_argument("build_minibatch: no pools");
    const Dataset& data = *pools.front().dataset;
    const std::size_t b = pairs_per_block;
    const std::size_t block_rows = 3 * b;

    MiniBatch batch;
    batch.pairs_per_block = b;
    batch.features = Matrix(block_rows * pools.size(), data.dim);
    batch.identities.resize(block_rows * pools.size());

    std::size_t row = 0;
    auto emit = [&](std::size_t sample_index) {
        const LabeledSample& sample = data.samples[sample_index];
        for (std::size_t j = 0; j < data.dim; ++j) batch.features(row, j) = sample.features[j];
        batch.identities[row] = sample.identity;
        return row++;
    };

    for (const SamplePool& pool : pools) {
        if (pool.dataset != &data)
            throw std::invalid_argument("build_minibatch: pools must share a dataset");
        DistributionBlock block;
        block.domain = pool.domain;
        for (const auto& [a, bi] : build_positive_pairs(pool, b, rng)) {
            PairRef ref;
            ref.first = emit(a);
            ref.second = emit(bi);
            block.positive_pairs.push_back(ref);
        }
        for (const std::size_t s : draw_singles(pool, b, rng)) block.singles.push_back(emit(s));
        batch.blocks.push_back(std::move(block));
    }
    return batch;
}

Vector SimilaritySet::values() const {
    Vector v(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) v[i] = entries[i].value;
    return v;
}

SimilaritySet positive_similarities(const Matrix& embeddings, const DistributionBlock& block) {
    SimilaritySet set;
    for (const PairRef& pair : block.positive_pairs) {
        const double s = clamp_unit(dot(embeddings.row(pair.first), embeddings.row(pair.second)));
        if (s < 0.0) continue; // outlier filter
        set.entries.push_back({s, pair.first, pair.second});
    }
    if (set.entries.empty())
        throw DegenerateDistributionError("positive_similarities: every pair filtered in domain " +
                                          block.domain.name());
    return set;
}

SimilaritySet hard_negative_similarities(const Matrix& embeddings, const DistributionBlock& block) {
    const auto& singles = block.singles;
    if (singles.size() < 2)
        throw std::invalid_argument("hard_negative_similarities: need at least two singles");
    SimilaritySet set;
    set.entries.reserve(singles.size());
    for (std::size_t i = 0; i < singles.size(); ++i) {
        double best = -2.0;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < singles.size(); ++j) {
            if (j == i) continue;
            const double s = clamp_unit(dot(embeddings.row(singles[i]), embeddings.row(singles[j])));
            if (s > best) { // strict: ties keep the smallest j
                best = s;
                best_j = j;
            }
        }
        set.entries.push_back({best, singles[i], singles[best_j]});
    }
    return set;
}

SimilaritySet random_negative_similarities(const Matrix& embeddings, const DistributionBlock& block,
                                           Rng& rng) {
    const auto& singles = block.singles;
    if (singles.size() < 2)
        throw std::invalid_argument("random_negative_similarities: need at least two singles");
    SimilaritySet set;
    set.entries.reserve(singles.size());
    for (std::size_t i = 0; i < singles.size(); ++i) {
        std::size_t j = rng.uniform_index(singles.size() - 1);
        if (j >= i) ++j;
        const double s = clamp_unit(dot(embeddings.row(singles[i]), embeddings.row(singles[j])));
        set.entries.push_back({s, singles[i], singles[j]});
    }
    return set;
}

} // namespace ddl
