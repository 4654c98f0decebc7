#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ddl/checkpoint.hpp"
#include "ddl/config.hpp"
#include "ddl/synth.hpp"
#include "ddl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ddl::cli {

namespace {

constexpr std::uint64_t kInitStream = 0x494e4954ULL;

using ConfigEcho = std::map<std::string, std::string>;

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format_g17(values[i]);
    }
    return out;
}

std::string join_uints(const std::vector<std::uint64_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_manifest(const fs::path& out_dir, const std::string& command, const ConfigEcho& config,
                    const std::map<std::string, std::string>& inputs,
                    const std::vector<std::string>& output_files, std::uint64_t seed) {
    json j;
    j["artifact_version"] = kArtifactVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"]["dir"] = out_dir.string();
    j["outputs"]["files"] = output_files;
    write_text_file(out_dir / "manifest.json", j.dump(2) + "\n");
}

// ---- synth -----------------------------------------------------------

const std::set<std::string> kSynthKeys = {
    "identities", "samples_per_identity", "dim", "easy_sigma", "hard_sigmas", "hard_ranks", "seed"};

SynthConfig parse_synth_config(const KeyValueConfig& kv,
                               const std::optional<std::uint64_t>& seed_override) {
    kv.require_known(kSynthKeys);
    SynthConfig defaults;
    SynthConfig config;
    config.identities = static_cast<std::size_t>(kv.get_uint("identities", defaults.identities));
    config.samples_per_identity =
        static_cast<std::size_t>(kv.get_uint("samples_per_identity", defaults.samples_per_identity));
    config.dim = static_cast<std::size_t>(kv.get_uint("dim", defaults.dim));
    config.easy_sigma = kv.get_double("easy_sigma", defaults.easy_sigma);
    config.hard_sigmas = kv.get_double_list("hard_sigmas", defaults.hard_sigmas);
    std::vector<std::uint64_t> default_ranks(defaults.hard_ranks.begin(), defaults.hard_ranks.end());
    config.hard_ranks.clear();
    for (const std::uint64_t r : kv.get_uint_list("hard_ranks", default_ranks))
        config.hard_ranks.push_back(static_cast<std::size_t>(r));
    config.seed = kv.get_uint("seed", defaults.seed);
    if (seed_override) config.seed = *seed_override;
    config.validate();
    return config;
}

ConfigEcho echo_synth_config(const SynthConfig& config) {
    ConfigEcho echo;
    echo["identities"] = std::to_string(config.identities);
    echo["samples_per_identity"] = std::to_string(config.samples_per_identity);
    echo["dim"] = std::to_string(config.dim);
    echo["easy_sigma"] = format_g17(config.easy_sigma);
    echo["hard_sigmas"] = join_doubles(config.hard_sigmas);
    {
        std::vector<std::uint64_t> ranks(config.hard_ranks.begin(), config.hard_ranks.end());
        echo["hard_ranks"] = join_uints(ranks);
    }
    echo["seed"] = std::to_string(config.seed);
    return echo;
}

std::string echo_to_key_values(const ConfigEcho& echo) {
    std::string out;
    for (const auto& [key, value] : echo) out += key + " = " + value + "\n";
    return out;
}

// ---- train / eval / ablate ------------------------------------------

const std::set<std::string> kTrainKeys = {
    "seed",        "mode",          "b",           "k",           "iterations",
    "lr",          "momentum",      "weight_decay", "lambda1",    "lambda2",
    "lambda3",     "margin_scale",  "margin",      "bins",        "gamma",
    "order_pairs", "embed_dim",     "hidden_dims", "activation",  "init_checkpoint",
    "train_fraction", "eval_every", "eval_batches", "far_grid",   "seeds",
    "baseline_iterations", "baseline_lr"};

struct RunSettings {
    TrainConfig train;
    std::vector<std::size_t> encoder_dims; // input filled in after dataset load
    Activation activation = Activation::Tanh;
    std::string init_checkpoint;
    double train_fraction = 0.5;
    std::optional<std::size_t> expected_students; // "k" when present
    std::vector<std::uint64_t> ablate_seeds{1, 2, 3};
    std::size_t baseline_iterations = 0; // 0 -> same as iterations
    double baseline_lr = 0.0;            // 0 -> same as lr
};

RunSettings parse_run_settings(const KeyValueConfig& kv,
                               const std::optional<std::uint64_t>& seed_override) {
    kv.require_known(kTrainKeys);
    RunSettings settings;
    TrainConfig& train = settings.train;
    train.seed = kv.get_uint("seed", train.seed);
    if (seed_override) train.seed = *seed_override;
    train.mode = parse_train_mode(kv.get_string("mode", train_mode_name(train.mode)));
    train.pairs_per_block = static_cast<std::size_t>(kv.get_uint("b", train.pairs_per_block));
    train.iterations = static_cast<std::size_t>(kv.get_uint("iterations", train.iterations));
    train.learning_rate = kv.get_double("lr", train.learning_rate);
    train.momentum = kv.get_double("momentum", train.momentum);
    train.weight_decay = kv.get_double("weight_decay", train.weight_decay);
    train.weights.kl_pos = kv.get_double("lambda1", train.weights.kl_pos);
    train.weights.kl_neg = kv.get_double("lambda2", train.weights.kl_neg);
    train.weights.order = kv.get_double("lambda3", train.weights.order);
    train.weights.margin_scale = kv.get_double("margin_scale", train.weights.margin_scale);
    train.weights.margin = kv.get_double("margin", train.weights.margin);
    train.bins = static_cast<std::size_t>(kv.get_uint("bins", train.bins));
    train.gamma = kv.get_double("gamma", train.gamma);
    train.order_pairs = parse_order_pairs(kv.get_string("order_pairs", order_pairs_name(train.order_pairs)));
    train.eval_every = static_cast<std::size_t>(kv.get_uint("eval_every", train.eval_every));
    train.eval_batches = static_cast<std::size_t>(kv.get_uint("eval_batches", train.eval_batches));
    train.far_grid = kv.get_double_list("far_grid", train.far_grid);

    if (kv.has("k"))
        settings.expected_students = static_cast<std::size_t>(kv.get_uint("k", 0));

    const std::uint64_t embed_dim = kv.get_uint("embed_dim", 32);
    std::vector<std::uint64_t> hidden = kv.get_uint_list("hidden_dims", {64});
    settings.encoder_dims.clear();
    settings.encoder_dims.push_back(0); // input dim placeholder
    for (const std::uint64_t h : hidden) settings.encoder_dims.push_back(static_cast<std::size_t>(h));
    settings.encoder_dims.push_back(static_cast<std::size_t>(embed_dim));

    settings.activation = parse_activation(kv.get_string("activation", "tanh"));
    settings.init_checkpoint = kv.get_string("init_checkpoint", "");
    settings.train_fraction = kv.get_double("train_fraction", settings.train_fraction);
    settings.ablate_seeds = kv.get_uint_list("seeds", settings.ablate_seeds);
    settings.baseline_iterations =
        static_cast<std::size_t>(kv.get_uint("baseline_iterations", 0));
    settings.baseline_lr = kv.get_double("baseline_lr", 0.0);
    return settings;
}

ConfigEcho echo_run_settings(const RunSettings& settings, std::size_t students,
                             bool include_ablate_keys) {
    const TrainConfig& train = settings.train;
    ConfigEcho echo;
    echo["seed"] = std::to_string(train.seed);
    echo["mode"] = train_mode_name(train.mode);
    echo["b"] = std::to_string(train.pairs_per_block);
    echo["k"] = std::to_string(students);
    echo["iterations"] = std::to_string(train.iterations);
    echo["lr"] = format_g17(train.learning_rate);
    echo["momentum"] = format_g17(train.momentum);
    echo["weight_decay"] = format_g17(train.weight_decay);
    echo["lambda1"] = format_g17(train.weights.kl_pos);
    echo["lambda2"] = format_g17(train.weights.kl_neg);
    echo["lambda3"] = format_g17(train.weights.order);
    echo["margin_scale"] = format_g17(train.weights.margin_scale);
    echo["margin"] = format_g17(train.weights.margin);
    echo["bins"] = std::to_string(train.bins);
    echo["gamma"] = format_g17(train.resolved_gamma());
    echo["order_pairs"] = order_pairs_name(train.order_pairs);
    echo["eval_every"] = std::to_string(train.resolved_eval_every());
    echo["eval_batches"] = std::to_string(train.eval_batches);
    echo["far_grid"] = join_doubles(train.far_grid);
    echo["embed_dim"] = std::to_string(settings.encoder_dims.back());
    {
        std::vector<std::uint64_t> hidden;
        for (std::size_t i = 1; i + 1 < settings.encoder_dims.size(); ++i)
            hidden.push_back(settings.encoder_dims[i]);
        echo["hidden_dims"] = join_uints(hidden);
    }
    echo["activation"] = activation_name(settings.activation);
    echo["init_checkpoint"] = settings.init_checkpoint;
    echo["train_fraction"] = format_g17(settings.train_fraction);
    if (include_ablate_keys) {
        echo["seeds"] = join_uints(settings.ablate_seeds);
        echo["baseline_iterations"] = std::to_string(
            settings.baseline_iterations > 0 ? settings.baseline_iterations : train.iterations);
        echo["baseline_lr"] = format_g17(settings.baseline_lr > 0.0 ? settings.baseline_lr
                                                                    : train.learning_rate);
    }
    return echo;
}

EncoderNet initial_net(const RunSettings& settings, const Dataset& train_data) {
    if (!settings.init_checkpoint.empty()) {
        EncoderNet net = load_checkpoint_file(settings.init_checkpoint);
        if (net.input_dim() != train_data.dim)
            throw std::runtime_error("init checkpoint input dim does not match dataset");
        return net;
    }
    std::vector<std::size_t> dims = settings.encoder_dims;
    dims.front() = train_data.dim;
    const std::size_t classes = train_data.identities().size();
    return EncoderNet::random(dims, classes, derive_seed(settings.train.seed, {kInitStream}),
                              settings.activation);
}

void check_student_count(const RunSettings& settings, const Dataset& data) {
    if (settings.expected_students && *settings.expected_students != data.num_hard_domains)
        throw std::runtime_error("config key 'k' (" + std::to_string(*settings.expected_students) +
                                 ") does not match dataset hard domains (" +
                                 std::to_string(data.num_hard_domains) + ")");
}

// streams JSONL lines and periodic checkpoints while training runs
class FileSink final : public TrainSink {
public:
    FileSink(const fs::path& log_path, const fs::path& out_dir, std::vector<std::string>& files)
        : log_(log_path, std::ios::binary), out_dir_(out_dir), files_(&files) {
        if (!log_) throw std::runtime_error("cannot open for writing: " + log_path.string());
    }

    void write_header(const ConfigEcho& echo, std::uint64_t seed) {
        json j;
        j["type"] = "config";
        j["seed"] = seed;
        j["config"] = echo;
        log_ << j.dump() << '\n';
    }

    void on_iteration(const IterationRecord& record) override {
        log_ << iteration_record_json(record) << '\n';
    }

    void on_checkpoint(std::uint64_t iteration, const EncoderNet& net,
                       const EvalReport& report) override {
        json j;
        j["type"] = "eval";
        j["iteration"] = iteration;
        j["report"] = json::parse(report.to_json_string());
        log_ << j.dump() << '\n';

        char name[64];
        std::snprintf(name, sizeof(name), "checkpoint_%06llu.ckpt",
                      static_cast<unsigned long long>(iteration));
        save_checkpoint_file((out_dir_ / name).string(), net);
        files_->push_back(name);
        evals_.emplace_back(iteration, report);
    }

    const std::vector<std::pair<std::uint64_t, EvalReport>>& evals() const { return evals_; }

private:
    std::ofstream log_;
    fs::path out_dir_;
    std::vector<std::string>* files_;
    std::vector<std::pair<std::uint64_t, EvalReport>> evals_;
};

int guarded(const std::string& command, const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "ddl " << command << ": error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace

std::size_t ablate_worker_count() {
    const char* env = std::getenv("DDL_WORKERS");
    if (!env) return 1;
    const long value = std::strtol(env, nullptr, 10);
    return value > 1 ? static_cast<std::size_t>(value) : 1;
}

int run_synth(const SynthOptions& options) {
    return guarded("synth", [&] {
        const KeyValueConfig kv = KeyValueConfig::parse_file(options.config_path);
        const SynthConfig config = parse_synth_config(kv, options.seed_override);
        const SynthResult result = generate(config);

        fs::create_directories(options.out_dir);
        const fs::path out_dir(options.out_dir);
        write_dataset_file((out_dir / "dataset.txt").string(), result.dataset);

        const ConfigEcho echo = echo_synth_config(config);
        write_text_file(out_dir / "dataset.txt.config", echo_to_key_values(echo));

        write_manifest(out_dir, "synth", echo, {{"config", options.config_path}},
                       {"dataset.txt", "dataset.txt.config"}, config.seed);
    });
}

int run_train(const TrainOptions& options) {
    return guarded("train", [&] {
        const KeyValueConfig kv = KeyValueConfig::parse_file(options.config_path);
        const RunSettings settings = parse_run_settings(kv, options.seed_override);
        const Dataset data = read_dataset_file(options.dataset_path);
        check_student_count(settings, data);

        const auto [train_data, eval_data] =
            split_train_eval(data, settings.train_fraction, settings.train.seed);
        const EncoderNet init = initial_net(settings, train_data);

        fs::create_directories(options.out_dir);
        const fs::path out_dir(options.out_dir);
        std::vector<std::string> files{"trainlog.jsonl", "checkpoint_final.ckpt",
                                       "eval_history.csv"};

        const ConfigEcho echo = echo_run_settings(settings, data.num_hard_domains, false);
        FileSink sink(out_dir / "trainlog.jsonl", out_dir, files);
        sink.write_header(echo, settings.train.seed);

        const TrainResult result = train(settings.train, train_data, eval_data, init, &sink);

        save_checkpoint_file((out_dir / "checkpoint_final.ckpt").string(), result.net);

        std::ostringstream history;
        if (!result.log.evals.empty()) {
            history << EvalReport::csv_header(result.log.evals.front().second) << '\n';
            for (const auto& [iteration, report] : result.log.evals)
                history << report.csv_row(iteration) << '\n';
        }
        write_text_file(out_dir / "eval_history.csv", history.str());

        // timing lives outside the deterministic outputs
        write_text_file(out_dir / "timing.txt",
                        "wall_seconds " + format_g17(result.log.wall_seconds) + "\n");

        write_manifest(out_dir, "train", echo,
                       {{"config", options.config_path}, {"dataset", options.dataset_path}}, files,
                       settings.train.seed);
    });
}

int run_eval(const EvalOptions& options) {
    return guarded("eval", [&] {
        const KeyValueConfig kv = KeyValueConfig::parse_file(options.config_path);
        const RunSettings settings = parse_run_settings(kv, options.seed_override);
        const Dataset data = read_dataset_file(options.dataset_path);
        check_student_count(settings, data);
        const EncoderNet net = load_checkpoint_file(options.checkpoint_path);

        const auto [train_data, eval_data] =
            split_train_eval(data, settings.train_fraction, settings.train.seed);
        (void)train_data;

        std::vector<DomainSimilarities> detail;
        const EvalReport report = evaluate(net, eval_data, settings.train, &detail);

        fs::create_directories(options.out_dir);
        const fs::path out_dir(options.out_dir);
        std::vector<std::string> files{"eval.json", "eval.csv"};

        write_text_file(out_dir / "eval.json", report.to_json_string() + "\n");
        write_text_file(out_dir / "eval.csv",
                        EvalReport::csv_header(report) + "\n" + report.csv_row(0) + "\n");

        const double gamma = settings.train.resolved_gamma();
        for (const DomainSimilarities& d : detail) {
            for (const bool positive : {true, false}) {
                const Vector& values = positive ? d.positives : d.negatives;
                const SoftHistogram hist =
                    SoftHistogram::estimate(values, settings.train.bins, gamma);
                const std::string name =
                    "hist_" + d.domain + (positive ? "_pos.csv" : "_neg.csv");
                std::ostringstream csv;
                write_histogram_csv(csv, hist);
                write_text_file(out_dir / name, csv.str());
                files.push_back(name);
            }
        }

        write_manifest(out_dir, "eval", echo_run_settings(settings, data.num_hard_domains, false),
                       {{"config", options.config_path},
                        {"dataset", options.dataset_path},
                        {"checkpoint", options.checkpoint_path}},
                       files, settings.train.seed);
    });
}

namespace {

const std::vector<TrainMode> kAblationModes = {
    TrainMode::FinetunePlain, TrainMode::KlOnly,         TrainMode::OrderOnly,
    TrainMode::Ddl,           TrainMode::DdlRandomMining, TrainMode::DdlMixture};

struct AblationCell {
    TrainMode mode;
    std::uint64_t seed;
    EvalReport report;
};

void run_indexed(std::size_t count, std::size_t workers,
                 const std::function<void(std::size_t)>& work) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto runner = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                work(i);
            } catch (...) {
                std::scoped_lock lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < std::min(workers, count); ++t) threads.emplace_back(runner);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace

int run_ablate(const AblateOptions& options) {
    return guarded("ablate", [&] {
        const KeyValueConfig kv = KeyValueConfig::parse_file(options.config_path);
        const RunSettings settings = parse_run_settings(kv, options.seed_override);
        const Dataset data = read_dataset_file(options.dataset_path);
        check_student_count(settings, data);

        const std::vector<std::uint64_t>& seeds = settings.ablate_seeds;
        if (seeds.empty()) throw std::runtime_error("ablate: 'seeds' must list at least one seed");
        const std::size_t baseline_iterations =
            settings.baseline_iterations > 0 ? settings.baseline_iterations
                                             : settings.train.iterations;
        const std::size_t workers = ablate_worker_count();

        // stage 1: one baseline checkpoint per seed, shared by every mode
        struct SeedContext {
            Dataset train_data, eval_data;
            EncoderNet baseline;
        };
        std::vector<SeedContext> contexts(seeds.size());
        run_indexed(seeds.size(), workers, [&](std::size_t i) {
            SeedContext ctx;
            auto split = split_train_eval(data, settings.train_fraction, seeds[i]);
            ctx.train_data = std::move(split.first);
            ctx.eval_data = std::move(split.second);

            RunSettings seed_settings = settings;
            seed_settings.train.seed = seeds[i];
            TrainConfig baseline_config = seed_settings.train;
            baseline_config.mode = TrainMode::Baseline;
            baseline_config.iterations = baseline_iterations;
            if (settings.baseline_lr > 0.0) baseline_config.learning_rate = settings.baseline_lr;

            const EncoderNet init = initial_net(seed_settings, ctx.train_data);
            ctx.baseline = train(baseline_config, ctx.train_data, Dataset{}, init).net;
            contexts[i] = std::move(ctx);
        });

        // stage 2: every (mode, seed) cell fine-tunes from its seed's baseline
        std::vector<AblationCell> cells;
        for (const TrainMode mode : kAblationModes)
            for (const std::uint64_t seed : seeds) cells.push_back({mode, seed, {}});

        run_indexed(cells.size(), workers, [&](std::size_t i) {
            const std::size_t seed_index = i % seeds.size();
            const SeedContext& ctx = contexts[seed_index];
            TrainConfig config = settings.train;
            config.mode = cells[i].mode;
            config.seed = cells[i].seed;
            const TrainResult result = train(config, ctx.train_data, Dataset{}, ctx.baseline);
            cells[i].report = evaluate(result.net, ctx.eval_data, config);
        });

        fs::create_directories(options.out_dir);
        const fs::path out_dir(options.out_dir);

        std::ostringstream csv;
        csv << "mode,seed";
        for (const auto& d : cells.front().report.domains)
            csv << ',' << d.domain << "_margin" << ',' << d.domain << "_intersection" << ','
                << d.domain << "_rank1";
        csv << '\n';
        for (const AblationCell& cell : cells) {
            csv << train_mode_name(cell.mode) << ',' << cell.seed;
            for (const auto& d : cell.report.domains)
                csv << ',' << format_g17(d.expectation_margin) << ','
                    << format_g17(d.histogram_intersection) << ',' << format_g17(d.rank1);
            csv << '\n';
        }
        write_text_file(out_dir / "ablation.csv", csv.str());

        write_manifest(out_dir, "ablate", echo_run_settings(settings, data.num_hard_domains, true),
                       {{"config", options.config_path}, {"dataset", options.dataset_path}},
                       {"ablation.csv"}, settings.train.seed);
    });
}

} // namespace ddl::cli
