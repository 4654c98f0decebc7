#include "ddl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ddl/optimizer.hpp"
#include "ddl/pairing.hpp"
#include "ddl/rng.hpp"

namespace ddl {

namespace {

constexpr std::uint64_t kBatchStream = 0x4241544348ULL;
constexpr std::uint64_t kMiningStream = 0x4d494e45ULL;
constexpr std::uint64_t kEvalStream = 0x4556414cULL;
constexpr int kDegenerateRetries = 3;

} // namespace

std::string train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::Baseline: return "baseline";
        case TrainMode::FinetunePlain: return "finetune-plain";
        case TrainMode::Ddl: return "ddl";
        case TrainMode::DdlRandomMining: return "ddl-random-mining";
        case TrainMode::DdlMixture: return "ddl-mixture";
        case TrainMode::KlOnly: return "kl-only";
        case TrainMode::OrderOnly: return "order-only";
    }
    throw std::logic_error("train_mode_name: unknown mode");
}

TrainMode parse_train_mode(const std::string& name) {
    for (const TrainMode mode :
         {TrainMode::Baseline, TrainMode::FinetunePlain, TrainMode::Ddl, TrainMode::DdlRandomMining,
          TrainMode::DdlMixture, TrainMode::KlOnly, TrainMode::OrderOnly}) {
        if (train_mode_name(mode) == name) return mode;
    }
    throw std::invalid_argument("unknown training mode: " + name);
}

double TrainConfig::resolved_gamma() const {
    return gamma > 0.0 ? gamma : default_gamma(bins);
}

std::size_t TrainConfig::resolved_eval_every() const {
    if (eval_every > 0) return eval_every;
    return std::max<std::size_t>(1, iterations / 10);
}

double TrainConfig::lr_at(std::size_t iteration) const {
    const std::size_t midpoint = (iterations + 1) / 2; // ceil(T/2)
    return iteration >= midpoint ? learning_rate / 10.0 : learning_rate;
}

DdlWeights TrainConfig::effective_weights() const {
    DdlWeights w = weights;
    switch (mode) {
        case TrainMode::Baseline:
        case TrainMode::FinetunePlain:
            w.kl_pos = w.kl_neg = w.order = 0.0;
            break;
        case TrainMode::KlOnly:
            w.order = 0.0;
            break;
        case TrainMode::OrderOnly:
            w.kl_pos = w.kl_neg = 0.0;
            break;
        default:
            break;
    }
    return w;
}

std::string iteration_record_json(const IterationRecord& record) {
    nlohmann::json j;
    j["type"] = "iteration";
    j["iteration"] = record.iteration;
    j["lr"] = record.lr;
    j["kl_pos"] = record.kl_pos;
    j["kl_neg"] = record.kl_neg;
    j["order"] = record.order;
    j["margin"] = record.margin;
    j["total"] = record.total;
    j["mining"] = record.mining;
    j["resamples"] = record.resamples;
    return j.dump();
}

namespace {

std::vector<SamplePool> build_pools(const Dataset& data, TrainMode mode) {
    std::vector<SamplePool> pools;
    pools.push_back(SamplePool::from(data, Domain::easy()));
    std::vector<SamplePool> hard;
    for (std::size_t k = 1; k <= data.num_hard_domains; ++k)
        hard.push_back(SamplePool::from(data, Domain::hard(static_cast<int>(k))));
    if (hard.empty()) throw std::invalid_argument("train: dataset has no hard domain");
    if (mode == TrainMode::DdlMixture) {
        if (hard.size() < 2)
            throw std::invalid_argument("train: mixture mode needs at least two hard domains");
        pools.push_back(SamplePool::merge(hard));
    } else {
        for (auto& pool : hard) pools.push_back(std::move(pool));
    }
    return pools;
}

std::map<int, int> class_index_map(const Dataset& data) {
    std::map<int, int> mapping;
    int next = 0;
    for (const int id : data.identities()) mapping.emplace(id, next++);
    return mapping;
}

struct BatchSets {
    MiniBatch batch;
    ForwardCache cache;
    std::vector<BlockPairSets> sets;
};

BatchSets assemble_batch(const TrainConfig& config, const std::vector<SamplePool>& pools,
                         const EncoderNet& net, std::uint64_t iteration,
                         std::uint32_t& resamples) {
    for (std::uint32_t attempt = 0;; ++attempt) {
        Rng batch_rng(derive_seed(config.seed, {kBatchStream, iteration, attempt}));
        Rng mining_rng(derive_seed(config.seed, {kMiningStream, iteration, attempt}));
        BatchSets out;
        out.batch = build_minibatch(pools, config.pairs_per_block, batch_rng);
        out.cache = encoder_forward(net, out.batch.features);
        try {
            for (const DistributionBlock& block : out.batch.blocks) {
                BlockPairSets sets;
                sets.domain = block.domain;
                sets.positives = positive_similarities(out.cache.embeddings, block);
                sets.negatives = config.uses_random_mining()
                                     ? random_negative_similarities(out.cache.embeddings, block,
                                                                    mining_rng)
                                     : hard_negative_similarities(out.cache.embeddings, block);
                out.sets.push_back(std::move(sets));
            }
        } catch (const DegenerateDistributionError&) {
            if (attempt >= kDegenerateRetries) throw;
            ++resamples;
            continue;
        }
        return out;
    }
}

} // namespace

TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& eval_data,
                  const EncoderNet& initial, TrainSink* sink) {
    const auto start = std::chrono::steady_clock::now();

    TrainResult result;
    result.net = initial;
    result.log.seed = config.seed;
    if (config.iterations == 0) return result;

    const std::map<int, int> classes = class_index_map(train_data);
    if (result.net.num_classes() != classes.size())
        throw std::invalid_argument("train: head classes do not match train identities");
    if (train_data.dim != result.net.input_dim())
        throw std::invalid_argument("train: dataset dim does not match net input dim");

    const std::vector<SamplePool> pools = build_pools(train_data, config.mode);
    const DdlWeights weights = config.effective_weights();
    const double gamma = config.resolved_gamma();
    const std::size_t eval_every = config.resolved_eval_every();
    const std::string mining = config.uses_random_mining() ? "random" : "hard";

    OptimizerState state = OptimizerState::for_net(result.net, config.learning_rate,
                                                   config.momentum, config.weight_decay);

    for (std::uint64_t iter = 1; iter <= config.iterations; ++iter) {
        state.learning_rate = config.lr_at(iter);

        std::uint32_t resamples = 0;
        BatchSets bs = assemble_batch(config, pools, result.net, iter, resamples);

        std::vector<int> labels(bs.batch.rows());
        for (std::size_t i = 0; i < labels.size(); ++i)
            labels[i] = classes.at(bs.batch.identities[i]);

        const LossReport report =
            ddl_total(bs.cache.embeddings, labels, bs.sets, result.net.head, weights, config.bins,
                      gamma, config.order_pairs);

        ParamGrads grads = encoder_backward(result.net, bs.cache, report.embedding_grads);
        grads.head = report.head_grads;
        sgd_step(result.net, grads, state);

        IterationRecord record;
        record.iteration = iter;
        record.lr = state.learning_rate;
        record.kl_pos = report.kl_pos_total();
        record.kl_neg = report.kl_neg_total();
        record.order = report.order_term;
        record.margin = report.margin_term;
        record.total = report.total;
        record.mining = mining;
        record.resamples = resamples;
        if (sink) sink->on_iteration(record);
        result.log.iterations.push_back(std::move(record));

        const bool cadence_hit = iter % eval_every == 0 || iter == config.iterations;
        if (cadence_hit && !eval_data.samples.empty()) {
            EvalReport eval = evaluate(result.net, eval_data, config);
            if (sink) sink->on_checkpoint(iter, result.net, eval);
            result.log.evals.emplace_back(iter, std::move(eval));
        }
    }

    result.log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

EvalReport evaluate(const EncoderNet& net, const Dataset& eval_data, const TrainConfig& config,
                    std::vector<DomainSimilarities>* detail) {
    if (detail) detail->clear();
    if (eval_data.samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
    if (eval_data.dim != net.input_dim())
        throw std::invalid_argument("evaluate: dataset dim does not match net input dim");

    // embed the whole eval set once for the identification protocol
    Matrix all_features(eval_data.samples.size(), eval_data.dim);
    for (std::size_t i = 0; i < eval_data.samples.size(); ++i)
        for (std::size_t j = 0; j < eval_data.dim; ++j)
            all_features(i, j) = eval_data.samples[i].features[j];
    const ForwardCache all_cache = encoder_forward(net, all_features);

    // gallery: per-identity mean of easy-domain embeddings, re-normalized
    const std::vector<int> ids = eval_data.identities();
    Matrix gallery(ids.size(), net.embed_dim());
    {
        std::map<int, std::size_t> id_row;
        for (std::size_t i = 0; i < ids.size(); ++i) id_row[ids[i]] = i;
        std::vector<std::size_t> counts(ids.size(), 0);
        for (std::size_t i = 0; i < eval_data.samples.size(); ++i) {
            if (!eval_data.samples[i].domain.is_easy()) continue;
            const std::size_t row = id_row.at(eval_data.samples[i].identity);
            for (std::size_t j = 0; j < net.embed_dim(); ++j)
                gallery(row, j) += all_cache.embeddings(i, j);
            ++counts[row];
        }
        for (std::size_t r = 0; r < gallery.rows(); ++r) {
            if (counts[r] == 0)
                throw std::invalid_argument("evaluate: identity without easy samples: " +
                                            std::to_string(ids[r]));
            const Vector unit = l2_normalize(gallery.row(r));
            for (std::size_t j = 0; j < gallery.cols(); ++j) gallery(r, j) = unit[j];
        }
    }

    EvalReport report;
    report.far_grid = config.far_grid;
    // evaluation histograms always use the default kernel for the configured
    // bin count, so intersection numbers stay comparable across runs that
    // train with different gamma overrides
    const double gamma = default_gamma(config.bins);

    for (const Domain domain : eval_data.domains()) {
        const SamplePool pool = SamplePool::from(eval_data, domain);
        const auto domain_tag = static_cast<std::uint64_t>(domain.is_easy() ? 0 : domain.hard_index());

        Vector positives, negatives;
        std::size_t usable_blocks = 0;
        for (std::size_t t = 0; t < config.eval_batches; ++t) {
            Rng rng(derive_seed(config.seed, {kEvalStream, domain_tag, t}));
            const MiniBatch block_batch =
                build_minibatch({pool}, config.pairs_per_block, rng);
            const ForwardCache cache = encoder_forward(net, block_batch.features);
            const DistributionBlock& block = block_batch.blocks.front();
            try {
                const SimilaritySet pos = positive_similarities(cache.embeddings, block);
                for (const auto& entry : pos.entries) positives.push_back(entry.value);
            } catch (const DegenerateDistributionError&) {
                continue; // block contributes nothing
            }
            const SimilaritySet neg = hard_negative_similarities(cache.embeddings, block);
            for (const auto& entry : neg.entries) negatives.push_back(entry.value);
            ++usable_blocks;
        }
        if (usable_blocks == 0)
            throw DegenerateDistributionError("evaluate: every block degenerate in domain " +
                                              domain.name());

        DomainEvalStats stats;
        stats.domain = domain.name();
        stats.expectation_margin = expectation_margin(positives, negatives);
        const SoftHistogram pos_hist = SoftHistogram::estimate(positives, config.bins, gamma);
        const SoftHistogram neg_hist = SoftHistogram::estimate(negatives, config.bins, gamma);
        stats.histogram_intersection = histogram_intersection(pos_hist, neg_hist);
        const VerificationResult verification =
            verification_metrics(positives, negatives, config.far_grid);
        stats.verification_accuracy = verification.accuracy;
        stats.tar = verification.tar;

        // identification: this domain's samples probe the easy-mean gallery
        std::vector<std::size_t> probe_rows;
        for (std::size_t i = 0; i < eval_data.samples.size(); ++i)
            if (eval_data.samples[i].domain == domain) probe_rows.push_back(i);
        Matrix probes(probe_rows.size(), net.embed_dim());
        std::vector<int> probe_ids(probe_rows.size());
        for (std::size_t p = 0; p < probe_rows.size(); ++p) {
            probe_ids[p] = eval_data.samples[probe_rows[p]].identity;
            for (std::size_t j = 0; j < net.embed_dim(); ++j)
                probes(p, j) = all_cache.embeddings(probe_rows[p], j);
        }
        stats.rank1 = rank1_identification(gallery, ids, probes, probe_ids);

        if (detail) detail->push_back({domain.name(), positives, negatives});
        report.domains.push_back(std::move(stats));
    }
    return report;
}

} // namespace ddl
