#include "ddl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ddl/checkpoint.hpp"
#include "ddl/rng.hpp"

namespace ddl {

namespace {

constexpr std::uint64_t kPrototypeStream = 0x50524f544fULL;
constexpr std::uint64_t kProjectionStream = 0x50524f4a45ULL;
constexpr std::uint64_t kNoiseStream = 0x4e4f495345ULL;
constexpr std::uint64_t kSplitStream = 0x53504c4954ULL;

Vector gaussian_vector(Rng& rng, std::size_t dim) {
    Vector v(dim);
    for (double& x : v) x = rng.gaussian();
    return v;
}

// Orthonormal rank x dim row basis via modified Gram-Schmidt; rows whose
// residual collapses are redrawn.
Matrix orthonormal_projection(Rng& rng, std::size_t rank, std::size_t dim) {
    Matrix p(rank, dim);
    for (std::size_t r = 0; r < rank; ++r) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            Vector candidate = gaussian_vector(rng, dim);
            for (std::size_t q = 0; q < r; ++q) {
                const double proj = dot(candidate, p.row(q));
                for (std::size_t j = 0; j < dim; ++j) candidate[j] -= proj * p.row(q)[j];
            }
            const double n = norm(candidate);
            if (n > 1e-8) {
                for (std::size_t j = 0; j < dim; ++j) p(r, j) = candidate[j] / n;
                break;
            }
            if (attempt == 63)
                throw std::runtime_error("orthonormal_projection: could not complete basis");
        }
    }
    return p;
}

Vector project_back(const Matrix& p, const Vector& v) {
    // P^T P v
    Vector coeffs(p.rows());
    for (std::size_t r = 0; r < p.rows(); ++r) coeffs[r] = dot(p.row(r), v);
    Vector out(v.size(), 0.0);
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t j = 0; j < v.size(); ++j) out[j] += coeffs[r] * p.row(r)[j];
    return out;
}

} // namespace

void SynthConfig::validate() const {
    if (identities == 0) throw std::invalid_argument("synth: identities must be positive");
    if (samples_per_identity == 0)
        throw std::invalid_argument("synth: samples_per_identity must be positive");
    if (dim == 0) throw std::invalid_argument("synth: dim must be positive");
    if (hard_sigmas.empty()) throw std::invalid_argument("synth: need at least one hard domain");
    if (hard_sigmas.size() != hard_ranks.size())
        throw std::invalid_argument("synth: hard_sigmas and hard_ranks must have equal length");
    if (easy_sigma < 0.0) throw std::invalid_argument("synth: easy_sigma must be non-negative");
    for (const double s : hard_sigmas) {
        if (!(easy_sigma < s))
            throw std::invalid_argument("synth: easy_sigma must be below every hard sigma");
    }
    for (const std::size_t r : hard_ranks) {
        if (r == 0 || r >= dim)
            throw std::invalid_argument("synth: hard ranks must lie strictly between 0 and dim");
    }
}

SynthResult generate(const SynthConfig& config) {
    config.validate();
    const std::size_t dim = config.dim;
    const std::size_t k = config.num_hard_domains();

    SynthResult result;
    result.dataset.dim = dim;
    result.dataset.num_hard_domains = k;

    Rng proto_rng(derive_seed(config.seed, {kPrototypeStream}));
    result.prototypes = Matrix(config.identities, dim);
    for (std::size_t id = 0; id < config.identities; ++id) {
        for (int attempt = 0;; ++attempt) {
            Vector candidate = l2_normalize(gaussian_vector(proto_rng, dim));
            bool distinct = true;
            for (std::size_t prev = 0; prev < id; ++prev) {
                if (dot(candidate, result.prototypes.row(prev)) > 1.0 - 1e-9) {
                    distinct = false;
                    break;
                }
            }
            if (distinct) {
                for (std::size_t j = 0; j < dim; ++j) result.prototypes(id, j) = candidate[j];
                break;
            }
            if (attempt == 63) throw std::runtime_error("synth: could not draw distinct prototypes");
        }
    }

    std::vector<Matrix> projections;
    for (std::size_t d = 0; d < k; ++d) {
        Rng proj_rng(derive_seed(config.seed, {kProjectionStream, d}));
        projections.push_back(orthonormal_projection(proj_rng, config.hard_ranks[d], dim));
    }

    Rng noise_rng(derive_seed(config.seed, {kNoiseStream}));
    result.dataset.samples.reserve(config.identities * config.samples_per_identity * (k + 1));
    for (std::size_t id = 0; id < config.identities; ++id) {
        const auto proto = result.prototypes.row(id);
        for (std::size_t d = 0; d <= k; ++d) {
            const Domain domain = d == 0 ? Domain::easy() : Domain::hard(static_cast<int>(d));
            for (std::size_t s = 0; s < config.samples_per_identity; ++s) {
                const double sigma = d == 0 ? config.easy_sigma : config.hard_sigmas[d - 1];
                Vector x(dim);
                for (std::size_t j = 0; j < dim; ++j) x[j] = proto[j] + sigma * noise_rng.gaussian();
                if (d > 0) x = project_back(projections[d - 1], x);
                LabeledSample sample;
                sample.features = l2_normalize(x);
                sample.identity = static_cast<int>(id);
                sample.domain = domain;
                result.dataset.samples.push_back(std::move(sample));
            }
        }
    }
    return result;
}

std::vector<int> Dataset::identities() const {
    std::set<int> ids;
    for (const auto& s : samples) ids.insert(s.identity);
    return {ids.begin(), ids.end()};
}

std::vector<Domain> Dataset::domains() const {
    std::vector<Domain> out{Domain::easy()};
    for (std::size_t d = 1; d <= num_hard_domains; ++d) out.push_back(Domain::hard(static_cast<int>(d)));
    return out;
}

std::pair<Dataset, Dataset> split_train_eval(const Dataset& data, double fraction,
                                             std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("split_train_eval: fraction must lie in (0, 1)");
    std::vector<int> ids = data.identities();
    if (ids.size() < 2)
        throw std::invalid_argument("split_train_eval: too few identities to split");

    Rng rng(derive_seed(seed, {kSplitStream}));
    rng.shuffle(ids);
    std::size_t train_count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    train_count = std::clamp<std::size_t>(train_count, 1, ids.size() - 1);

    std::set<int> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(train_count));
    Dataset train, eval;
    train.dim = eval.dim = data.dim;
    train.num_hard_domains = eval.num_hard_domains = data.num_hard_domains;
    for (const auto& sample : data.samples) {
        (train_ids.count(sample.identity) ? train : eval).samples.push_back(sample);
    }
    return {std::move(train), std::move(eval)};
}

void write_dataset(std::ostream& out, const Dataset& data) {
    out << "ddl-dataset v1\n";
    out << "dim " << data.dim << " hard_domains " << data.num_hard_domains
        << " samples " << data.samples.size() << '\n';
    for (const auto& sample : data.samples) {
        out << sample.identity << ' ' << sample.domain.name();
        for (const double x : sample.features) out << ' ' << format_g17(x);
        out << '\n';
    }
}

Dataset read_dataset(std::istream& in) {
    std::string magic, version;
    if (!(in >> magic >> version) || magic != "ddl-dataset" || version != "v1")
        throw std::runtime_error("dataset: bad header");
    std::string w1, w2, w3;
    Dataset data;
    std::size_t count = 0;
    if (!(in >> w1 >> data.dim >> w2 >> data.num_hard_domains >> w3 >> count) ||
        w1 != "dim" || w2 != "hard_domains" || w3 != "samples")
        throw std::runtime_error("dataset: bad shape line");
    data.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        LabeledSample sample;
        std::string domain_name;
        if (!(in >> sample.identity >> domain_name))
            throw std::runtime_error("dataset: truncated record");
        sample.domain = Domain::parse(domain_name);
        sample.features.resize(data.dim);
        for (std::size_t j = 0; j < data.dim; ++j)
            if (!(in >> sample.features[j])) throw std::runtime_error("dataset: truncated features");
        data.samples.push_back(std::move(sample));
    }
    return data;
}

void write_dataset_file(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("dataset: cannot open for writing: " + path);
    write_dataset(out, data);
    if (!out) throw std::runtime_error("dataset: write failed: " + path);
}

Dataset read_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("dataset: cannot open: " + path);
    return read_dataset(in);
}

} // namespace ddl
