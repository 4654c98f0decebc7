#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddl/data.hpp"
#include "ddl/encoder.hpp"
#include "ddl/losses.hpp"
#include "ddl/metrics.hpp"

namespace ddl {

enum class TrainMode {
    Baseline,        // margin-softmax only, the pre-training stage
    FinetunePlain,   // margin-softmax only, from a baseline checkpoint
    Ddl,             // full objective, hard mining, one student per hard domain
    DdlRandomMining, // negatives drawn at random instead of mined
    DdlMixture,      // all hard domains merged into a single student
    KlOnly,          // order weight forced to zero
    OrderOnly        // KL weights forced to zero
};

std::string train_mode_name(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
    std::size_t pairs_per_block = 16; // b
    std::size_t iterations = 200;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    DdlWeights weights;
    std::size_t bins = 100;
    double gamma = 0.0; // <= 0 selects default_gamma(bins)
    std::uint64_t seed = 1;
    TrainMode mode = TrainMode::Ddl;
    OrderPairs order_pairs = OrderPairs::CrossOnly;
    std::size_t eval_every = 0; // 0 selects iterations/10
    std::size_t eval_batches = 8;
    std::vector<double> far_grid{1e-3, 1e-2, 1e-1};

    double resolved_gamma() const;
    std::size_t resolved_eval_every() const;
    /// Learning rate for a 1-based iteration index: divided by 10 from
    /// iteration ceil(iterations/2) onward.
    double lr_at(std::size_t iteration) const;
    /// Loss weights with the mode's ablation zeroes applied.
    DdlWeights effective_weights() const;
    bool uses_random_mining() const { return mode == TrainMode::DdlRandomMining; }
};

struct IterationRecord {
    std::uint64_t iteration = 0;
    double lr = 0.0;
    double kl_pos = 0.0;
    double kl_neg = 0.0;
    double order = 0.0;
    double margin = 0.0;
    double total = 0.0;
    std::string mining;
    std::uint32_t resamples = 0; // degenerate-batch retries spent on this iteration
};

/// One line of the line-delimited JSON training log.
std::string iteration_record_json(const IterationRecord& record);

struct TrainLog {
    std::vector<IterationRecord> iterations;
    std::vector<std::pair<std::uint64_t, EvalReport>> evals;
    std::uint64_t seed = 0;
    /// Measured duration. Deliberately kept out of the streamed log so the
    /// log file stays byte-identical across reruns; the CLI writes it to a
    /// separate timing sidecar.
    double wall_seconds = 0.0;
};

/// Streaming observer; the CLI uses it to write the JSONL log and periodic
/// checkpoints while training runs.
class TrainSink {
public:
    virtual ~TrainSink() = default;
    virtual void on_iteration(const IterationRecord&) {}
    virtual void on_checkpoint(std::uint64_t, const EncoderNet&, const EvalReport&) {}
};

struct TrainResult {
    EncoderNet net;
    TrainLog log;
};

/// Deterministic training loop: a pure function of (config, data, initial
/// parameters). Degenerate batches are logged and resampled up to 3 times,
/// then the error propagates. eval_data may be empty to skip periodic
/// evaluation; when present it must be identity-disjoint from train_data.
TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& eval_data,
                  const EncoderNet& initial, TrainSink* sink = nullptr);

/// Aggregated similarity values behind one domain's evaluation statistics.
struct DomainSimilarities {
    std::string domain;
    Vector positives;
    Vector negatives;
};

/// Per-domain evaluation: S+/S- assembled with the training pairing rules
/// (hard mining for S-) over eval_batches blocks per domain; identification
/// uses per-identity easy-domain mean embeddings as the gallery and the
/// domain's samples as probes. When `detail` is given it receives the
/// aggregated similarity sets (for histogram export).
EvalReport evaluate(const EncoderNet& net, const Dataset& eval_data, const TrainConfig& config,
                    std::vector<DomainSimilarities>* detail = nullptr);

} // namespace ddl
