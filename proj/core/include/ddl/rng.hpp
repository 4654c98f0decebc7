#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace ddl {

/// Derives an independent stream seed from a master seed and a list of tags
/// (splitmix64 chain). Every randomized component draws from its own stream
/// so that adding draws to one component never shifts another.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags);

/// Deterministic random source: mt19937_64 plus explicitly documented
/// transforms, so identical seeds produce identical datasets on any
/// conforming implementation.
///
/// uniform():   (next_u64() >> 11) * 2^-53                  -> [0, 1)
/// gaussian():  Box-Muller on u1 = ((x >> 11) + 1) * 2^-53  -> N(0, 1),
///              pairs (z0, z1) emitted in order
/// uniform_index(n): rejection-sampled modulo, unbiased
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform();
    double gaussian();

    /// Unbiased draw from {0, ..., n-1}; n must be positive.
    std::size_t uniform_index(std::size_t n);

    /// Fisher-Yates, descending index order.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            const std::size_t j = uniform_index(i + 1);
            std::swap(items[i], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace ddl
