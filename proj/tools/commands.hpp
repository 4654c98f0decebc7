#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace ddl::cli {

inline constexpr const char* kArtifactVersion = "1.0.0";

struct SynthOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
};

struct TrainOptions {
    std::string config_path;
    std::string dataset_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
};

struct EvalOptions {
    std::string config_path;
    std::string checkpoint_path;
    std::string dataset_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
};

struct AblateOptions {
    std::string config_path;
    std::string dataset_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
};

/// Each command writes its outputs plus a manifest.json into the output
/// directory and returns a process exit status (0 only when every output was
/// written and validated).
int run_synth(const SynthOptions& options);
int run_train(const TrainOptions& options);
int run_eval(const EvalOptions& options);
int run_ablate(const AblateOptions& options);

/// Worker count for ablation cells; reads the DDL_WORKERS environment
/// variable (>= 1, default 1).
std::size_t ablate_worker_count();

} // namespace ddl::cli
