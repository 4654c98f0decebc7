#pragma once

#include <compare>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddl/tensor.hpp"

namespace ddl {

/// Sample domain tag: the easy domain, one of K hard domains, or the merged
/// pseudo-domain used when all hard pools are collapsed into one student.
class Domain {
public:
    constexpr Domain() = default;
    static constexpr Domain easy() { return Domain{0}; }
    static constexpr Domain hard(int k) { return Domain{k}; } // k >= 1
    static constexpr Domain mixture() { return Domain{-1}; }

    bool is_easy() const { return tag_ == 0; }
    bool is_hard() const { return tag_ > 0; }
    bool is_mixture() const { return tag_ < 0; }
    int hard_index() const { return tag_; } // 1-based for hard domains

    std::string name() const;
    static Domain parse(const std::string& name);

    auto operator<=>(const Domain&) const = default;

private:
    explicit constexpr Domain(int tag) : tag_(tag) {}
    int tag_ = 0;
};

struct LabeledSample {
    Vector features;
    int identity = 0;
    Domain domain;
};

struct Dataset {
    std::size_t dim = 0;
    std::size_t num_hard_domains = 0; // K
    std::vector<LabeledSample> samples;

    std::vector<int> identities() const; // sorted, unique
    std::vector<Domain> domains() const; // easy, hard-1, ..., hard-K
};

inline std::string Domain::name() const {
    if (tag_ == 0) return "easy";
    if (tag_ < 0) return "hard-mix";
    return "hard-" + std::to_string(tag_);
}

inline Domain Domain::parse(const std::string& name) {
    if (name == "easy") return easy();
    if (name == "hard-mix") return mixture();
    if (name.rfind("hard-", 0) == 0) {
        const int k = std::stoi(name.substr(5));
        if (k >= 1) return hard(k);
    }
    throw std::invalid_argument("unknown domain tag: " + name);
}

} // namespace ddl
