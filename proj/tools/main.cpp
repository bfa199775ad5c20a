// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash.h"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

// Unwinds a failed pipeline stage up to main, carrying the process exit code.
struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void fail(mh_status status) {
    throw CliError{static_cast<int>(status), mh_last_error()};
}

[[noreturn]] void fail_config(const std::string& message) {
    throw CliError{static_cast<int>(MH_ERR_CONFIG), message};
}

void check(mh_status status) {
    if (status != MH_OK) {
        fail(status);
    }
}

const char* kind_name(int code) {
    switch (code) {
    case 2: return "config";
    case 4: return "numeric";
    default: return "data";
    }
}

template <auto FreeFn>
struct FnDeleter {
    template <typename T>
    void operator()(T* p) const {
        FreeFn(p);
    }
};

using ConfigPtr = std::unique_ptr<mh_config, FnDeleter<&mh_config_free>>;
using DatasetPtr = std::unique_ptr<mh_dataset, FnDeleter<&mh_dataset_free>>;
using ModelPtr = std::unique_ptr<mh_model, FnDeleter<&mh_model_free>>;
using HistoryPtr = std::unique_ptr<mh_loss_history, FnDeleter<&mh_loss_history_free>>;
using MaskPtr = std::unique_ptr<mh_mask, FnDeleter<&mh_mask_free>>;
using IndexPtr = std::unique_ptr<mh_index, FnDeleter<&mh_index_free>>;
using RankingPtr = std::unique_ptr<mh_ranking, FnDeleter<&mh_ranking_free>>;
using ReportPtr = std::unique_ptr<mh_report, FnDeleter<&mh_report_free>>;
using SweepPtr = std::unique_ptr<mh_sweep, FnDeleter<&mh_sweep_free>>;

std::string fmt(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.12g", value);
    return buffer;
}

// Every command shares the same orchestration inputs; flags override config
// keys of the same meaning.
struct CommandOpts {
    std::string config_path;
    std::string out_dir = ".";
    uint64_t seed = 0;
    bool seed_set = false;
    double ratio = 0.0;
    bool ratio_set = false;
    uint32_t top_n = 0;
    bool top_n_set = false;
    uint32_t threads = 1;
    uint32_t video_id = 0;
    bool video_id_set = false;
};

struct LoadedConfig {
    ConfigPtr handle;
    std::string base_dir; // relative paths in the config resolve against this
};

LoadedConfig open_config(const CommandOpts& opts) {
    LoadedConfig loaded;
    mh_config* raw = nullptr;
    check(mh_config_open(opts.config_path.c_str(), &raw));
    loaded.handle.reset(raw);
    const fs::path parent = fs::path(opts.config_path).parent_path();
    loaded.base_dir = parent.empty() ? "." : parent.string();
    return loaded;
}

std::string resolve_path(const LoadedConfig& config, const std::string& value) {
    const fs::path p(value);
    return p.is_absolute() ? value : (fs::path(config.base_dir) / p).string();
}

// Explicit path values resolve against the config file's directory; absent
// keys fall back to the fixed artifact name inside --out, where the earlier
// stages wrote it.
std::string config_path_key(const LoadedConfig& config, const CommandOpts& opts, const char* key,
                            const char* fallback) {
    if (!mh_config_has(config.handle.get(), key)) {
        return (fs::path(opts.out_dir) / fallback).string();
    }
    const char* value = nullptr;
    check(mh_config_str(config.handle.get(), key, &value));
    return resolve_path(config, value);
}

uint64_t effective_seed(const LoadedConfig& config, const CommandOpts& opts) {
    if (opts.seed_set) {
        return opts.seed;
    }
    uint64_t seed = 0;
    check(mh_config_u64_or(config.handle.get(), "seed", 0, &seed));
    return seed;
}

std::string out_file(const CommandOpts& opts, const char* name) {
    std::error_code ec;
    fs::create_directories(opts.out_dir, ec);
    if (ec) {
        throw CliError{static_cast<int>(MH_ERR_DATA),
                       "cannot create output directory '" + opts.out_dir + "': " + ec.message()};
    }
    return (fs::path(opts.out_dir) / name).string();
}

DatasetPtr load_dataset_pair(const LoadedConfig& config, const CommandOpts& opts,
                             const char* features_key, const char* features_fallback,
                             const char* labels_key, const char* labels_fallback) {
    const std::string features = config_path_key(config, opts, features_key, features_fallback);
    const std::string labels = config_path_key(config, opts, labels_key, labels_fallback);
    mh_dataset* raw = nullptr;
    check(mh_dataset_load(features.c_str(), labels.c_str(), &raw));
    return DatasetPtr(raw);
}

ModelPtr load_checkpoint(const LoadedConfig& config, const CommandOpts& opts) {
    const std::string path = config_path_key(config, opts, "checkpoint_path", "checkpoint.bin");
    mh_model* raw = nullptr;
    check(mh_model_load(path.c_str(), &raw));
    return ModelPtr(raw);
}

mh_architecture read_arch(const LoadedConfig& config, const mh_dataset* ds) {
    const mh_config* cfg = config.handle.get();
    mh_architecture arch{};
    check(mh_config_u32_or(cfg, "feature_dim", mh_dataset_feature_dim(ds), &arch.feature_dim));
    check(mh_config_u32_or(cfg, "embed_dim", 32, &arch.embed_dim));
    check(mh_config_u32_or(cfg, "repr_dim", 24, &arch.repr_dim));
    check(mh_config_u32(cfg, "code_length", &arch.code_length));
    check(mh_config_u32_or(cfg, "num_classes", mh_dataset_num_classes(ds), &arch.num_classes));
    check(mh_config_u32_or(cfg, "n_frames", 5, &arch.n_frames));
    return arch;
}

mh_train_params read_train_params(const LoadedConfig& config, uint64_t seed, const char** optimizer_storage) {
    const mh_config* cfg = config.handle.get();
    mh_train_params train{};
    check(mh_config_f64_or(cfg, "alpha", 1.0, &train.alpha));
    check(mh_config_f64_or(cfg, "beta", 1.0, &train.beta));
    check(mh_config_f64_or(cfg, "margin", 2.0, &train.margin));
    check(mh_config_f64_or(cfg, "learning_rate", 1e-3, &train.learning_rate));
    check(mh_config_u32_or(cfg, "batch_size", 16, &train.batch_size));
    check(mh_config_u32(cfg, "iterations", &train.iterations));
    train.seed = seed;
    check(mh_config_str_or(config.handle.get(), "optimizer", "adam(0.9,0.999,1e-8)", optimizer_storage));
    train.optimizer = *optimizer_storage;
    return train;
}

std::vector<double> parse_ratio_grid(const std::string& text) {
    std::vector<double> ratios;
    size_t start = 0;
    while (start <= text.size()) {
        size_t comma = text.find(',', start);
        if (comma == std::string::npos) {
            comma = text.size();
        }
        const std::string token = text.substr(start, comma - start);
        try {
            size_t used = 0;
            const double value = std::stod(token, &used);
            if (used != token.size()) {
                throw std::invalid_argument(token);
            }
            ratios.push_back(value);
        } catch (const std::exception&) {
            fail_config("invalid ratio '" + token + "' in ratio grid '" + text + "'");
        }
        if (comma == text.size()) {
            break;
        }
        start = comma + 1;
    }
    return ratios;
}

void run_gen(const CommandOpts& opts) {
    const LoadedConfig config = open_config(opts);
    const mh_config* cfg = config.handle.get();

    mh_synth_params params{};
    check(mh_config_u32(cfg, "k_classes", &params.k_classes));
    check(mh_config_u32(cfg, "videos_per_class", &params.videos_per_class));
    check(mh_config_u32(cfg, "frames_per_video", &params.frames_per_video));
    check(mh_config_u32(cfg, "feature_dim", &params.feature_dim));
    check(mh_config_f64(cfg, "class_sep", &params.class_sep));
    check(mh_config_f64(cfg, "video_sep", &params.video_sep));
    check(mh_config_f64(cfg, "frame_noise", &params.frame_noise));
    params.seed = effective_seed(config, opts);

    mh_dataset* raw = nullptr;
    check(mh_dataset_generate(&params, &raw));
    DatasetPtr dataset(raw);

    if (mh_config_has(cfg, "train_fraction")) {
        double fraction = 0.0;
        check(mh_config_f64(cfg, "train_fraction", &fraction));
        mh_dataset* train_raw = nullptr;
        mh_dataset* test_raw = nullptr;
        check(mh_dataset_split(dataset.get(), fraction, params.seed, &train_raw, &test_raw));
        DatasetPtr train(train_raw), test(test_raw);

        const std::string features = out_file(opts, "features.bin");
        const std::string labels = out_file(opts, "labels.txt");
        const std::string query_features = out_file(opts, "query_features.bin");
        const std::string query_labels = out_file(opts, "query_labels.txt");
        check(mh_dataset_save(train.get(), features.c_str(), labels.c_str()));
        check(mh_dataset_save(test.get(), query_features.c_str(), query_labels.c_str()));
        std::cout << "wrote " << features << " (" << mh_dataset_num_videos(train.get()) << " videos, "
                  << mh_dataset_num_classes(train.get()) << " classes, D=" << params.feature_dim << ")\n";
        std::cout << "wrote " << query_features << " (" << mh_dataset_num_videos(test.get())
                  << " videos)\n";
    } else {
        const std::string features = out_file(opts, "features.bin");
        const std::string labels = out_file(opts, "labels.txt");
        check(mh_dataset_save(dataset.get(), features.c_str(), labels.c_str()));
        std::cout << "wrote " << features << " (" << mh_dataset_num_videos(dataset.get()) << " videos, "
                  << mh_dataset_num_classes(dataset.get()) << " classes, D=" << params.feature_dim
                  << ")\n";
    }
}

void run_train(const CommandOpts& opts) {
    const LoadedConfig config = open_config(opts);
    DatasetPtr dataset = load_dataset_pair(config, opts, "features_path", "features.bin", "labels_path", "labels.txt");
    const mh_architecture arch = read_arch(config, dataset.get());
    const char* optimizer_storage = nullptr;
    const mh_train_params params = read_train_params(config, effective_seed(config, opts), &optimizer_storage);

    mh_model* model_raw = nullptr;
    mh_loss_history* history_raw = nullptr;
    check(mh_train(dataset.get(), &arch, &params, &model_raw, &history_raw));
    ModelPtr model(model_raw);
    HistoryPtr history(history_raw);

    const std::string checkpoint = out_file(opts, "checkpoint.bin");
    const std::string loss_csv = out_file(opts, "loss.csv");
    check(mh_model_save(model.get(), checkpoint.c_str()));
    check(mh_loss_history_save_csv(history.get(), loss_csv.c_str()));

    const size_t n = mh_loss_history_size(history.get());
    double total = 0.0, inter = 0.0, intra = 0.0;
    mh_loss_history_row(history.get(), n - 1, &total, &inter, &intra);
    std::cout << "wrote " << checkpoint << '\n';
    std::cout << "final loss " << fmt(total) << " (inter " << fmt(inter) << ", intra " << fmt(intra)
              << ") after " << n << " iterations\n";
}

void run_mask(const CommandOpts& opts) {
    const LoadedConfig config = open_config(opts);
    ModelPtr model = load_checkpoint(config, opts);

    double ratio = 1.0;
    check(mh_config_f64_or(config.handle.get(), "ratio", 1.0, &ratio));
    if (opts.ratio_set) {
        ratio = opts.ratio;
    }

    mh_mask* mask_raw = nullptr;
    check(mh_mask_build(model.get(), ratio, &mask_raw));
    MaskPtr mask(mask_raw);

    const std::string mask_path = out_file(opts, "mask.bin");
    const std::string map_csv = out_file(opts, "mask_bit_map.csv");
    const std::string contribution_csv = out_file(opts, "mask_bit_contribution.csv");
    check(mh_mask_save(mask.get(), mask_path.c_str()));
    check(mh_mask_export_csv(mask.get(), map_csv.c_str(), contribution_csv.c_str()));

    uint32_t k = 0, l = 0, n = 0;
    mh_mask_dims(mask.get(), &k, &l, &n);
    std::cout << "wrote " << mask_path << " (K=" << k << ", L=" << l << ", " << n
              << " bits/row, ratio " << fmt(ratio) << ")\n";
}

void run_index(const CommandOpts& opts) {
    const LoadedConfig config = open_config(opts);
    ModelPtr model = load_checkpoint(config, opts);
    const std::string mask_path = config_path_key(config, opts, "mask_path", "mask.bin");
    mh_mask* mask_raw = nullptr;
    check(mh_mask_load(mask_path.c_str(), &mask_raw));
    MaskPtr mask(mask_raw);
    DatasetPtr database = load_dataset_pair(config, opts, "features_path", "features.bin", "labels_path", "labels.txt");

    mh_index* index_raw = nullptr;
    check(mh_index_build(model.get(), database.get(), mask.get(), effective_seed(config, opts), &index_raw));
    IndexPtr index(index_raw);

    const std::string index_path = out_file(opts, "index.bin");
    check(mh_index_save(index.get(), index_path.c_str()));
    std::cout << "wrote " << index_path << " (" << mh_index_size(index.get()) << " entries)\n";
}

void run_query(const CommandOpts& opts) {
    if (!opts.video_id_set) {
        fail_config("query requires --video-id");
    }
    const LoadedConfig config = open_config(opts);
    const std::string index_path = config_path_key(config, opts, "index_path", "index.bin");
    mh_index* index_raw = nullptr;
    check(mh_index_load(index_path.c_str(), &index_raw));
    IndexPtr index(index_raw);
    ModelPtr model = load_checkpoint(config, opts);
    DatasetPtr queries = load_dataset_pair(config, opts, "query_features_path", "query_features.bin",
                                           "query_labels_path", "query_labels.txt");

    uint32_t top_n = 0;
    check(mh_config_u32_or(config.handle.get(), "top_n", 10, &top_n));
    if (opts.top_n_set) {
        top_n = opts.top_n;
    }
    if (top_n == 0) {
        fail_config("top_n must be at least 1");
    }

    mh_ranking* ranking_raw = nullptr;
    check(mh_query(index.get(), model.get(), queries.get(), opts.video_id,
                   effective_seed(config, opts), top_n, &ranking_raw));
    RankingPtr ranking(ranking_raw);

    const std::string csv_path = out_file(opts, "ranking.csv");
    std::FILE* out = std::fopen(csv_path.c_str(), "w");
    if (out == nullptr) {
        throw CliError{static_cast<int>(MH_ERR_DATA), "cannot open '" + csv_path + "' for writing"};
    }
    std::fprintf(out, "rank,video_id,label,distance\n");
    const size_t n = mh_ranking_size(ranking.get());
    for (size_t i = 0; i < n; ++i) {
        uint32_t video_id = 0, label = 0, distance = 0;
        mh_ranking_row(ranking.get(), i, &video_id, &label, &distance);
        std::fprintf(out, "%zu,%u,%u,%u\n", i + 1, video_id, label, distance);
    }
    std::fclose(out);
    std::cout << "wrote " << csv_path << " (" << n << " hits)\n";
}

void run_eval(const CommandOpts& opts) {
    const LoadedConfig config = open_config(opts);
    const std::string index_path = config_path_key(config, opts, "index_path", "index.bin");
    mh_index* index_raw = nullptr;
    check(mh_index_load(index_path.c_str(), &index_raw));
    IndexPtr index(index_raw);
    ModelPtr model = load_checkpoint(config, opts);
    DatasetPtr queries = load_dataset_pair(config, opts, "query_features_path", "query_features.bin",
                                           "query_labels_path", "query_labels.txt");

    uint32_t max_n = 0;
    check(mh_config_u32_or(config.handle.get(), "max_n", 60, &max_n));

    mh_report* report_raw = nullptr;
    check(mh_evaluate(index.get(), model.get(), queries.get(), effective_seed(config, opts), max_n,
                      opts.threads, &report_raw));
    ReportPtr report(report_raw);

    const std::string map_csv = out_file(opts, "map_report.csv");
    const std::string precision_csv = out_file(opts, "precision_at_n.csv");
    const std::string pr_csv = out_file(opts, "pr_curve.csv");
    check(mh_report_save_csvs(report.get(), map_csv.c_str(), precision_csv.c_str(), pr_csv.c_str()));

    std::cout << "map " << fmt(mh_report_map(report.get())) << " map_at_"
              << mh_report_map_at_n_cap(report.get()) << ' ' << fmt(mh_report_map_at_n(report.get()))
              << " queries " << mh_report_num_queries(report.get()) << " excluded "
              << mh_report_num_excluded(report.get()) << '\n';
    std::cout << "wrote " << map_csv << ", " << precision_csv << ", " << pr_csv << '\n';
}

void run_sweep(const CommandOpts& opts) {
    const LoadedConfig config = open_config(opts);
    ModelPtr model = load_checkpoint(config, opts);
    DatasetPtr database = load_dataset_pair(config, opts, "features_path", "features.bin", "labels_path", "labels.txt");
    DatasetPtr queries = load_dataset_pair(config, opts, "query_features_path", "query_features.bin",
                                           "query_labels_path", "query_labels.txt");

    const char* grid_text = nullptr;
    check(mh_config_str_or(config.handle.get(), "ratios",
                           "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0", &grid_text));
    std::vector<double> ratios = parse_ratio_grid(grid_text);
    bool has_unmasked = false;
    for (double r : ratios) {
        has_unmasked = has_unmasked || r == 1.0;
    }
    if (!has_unmasked) {
        std::cerr << "warning: ratio grid lacks 1.0; appending the unmasked baseline\n";
        ratios.push_back(1.0);
    }

    uint32_t max_n = 0;
    check(mh_config_u32_or(config.handle.get(), "max_n", 60, &max_n));

    mh_sweep* sweep_raw = nullptr;
    check(mh_sweep_run(model.get(), database.get(), queries.get(), ratios.data(), ratios.size(),
                       effective_seed(config, opts), max_n, opts.threads, &sweep_raw));
    SweepPtr sweep(sweep_raw);

    const std::string csv_path = out_file(opts, "ratio_sweep.csv");
    check(mh_sweep_save_csv(sweep.get(), csv_path.c_str()));

    double best_ratio = 0.0, best_map = -1.0, unmasked_map = 0.0;
    const size_t n = mh_sweep_size(sweep.get());
    for (size_t i = 0; i < n; ++i) {
        double ratio = 0.0, map = 0.0;
        mh_sweep_row(sweep.get(), i, &ratio, &map);
        if (map > best_map) {
            best_map = map;
            best_ratio = ratio;
        }
        if (ratio == 1.0) {
            unmasked_map = map;
        }
    }
    std::cout << "best ratio " << fmt(best_ratio) << " map " << fmt(best_map) << " (unmasked "
              << fmt(unmasked_map) << ")\n";
    std::cout << "wrote " << csv_path << '\n';
}

void run_gradcheck(const CommandOpts& opts) {
    mh_architecture arch{8, 16, 8, 8, 4, 3};
    double alpha = 1.0, beta = 1.0, margin = 2.0, epsilon = 1e-4;
    uint32_t instances = 20;
    uint64_t seed = 0;

    if (!opts.config_path.empty()) {
        const LoadedConfig config = open_config(opts);
        const mh_config* cfg = config.handle.get();
        check(mh_config_u32_or(cfg, "feature_dim", arch.feature_dim, &arch.feature_dim));
        check(mh_config_u32_or(cfg, "embed_dim", arch.embed_dim, &arch.embed_dim));
        check(mh_config_u32_or(cfg, "repr_dim", arch.repr_dim, &arch.repr_dim));
        check(mh_config_u32_or(cfg, "code_length", arch.code_length, &arch.code_length));
        check(mh_config_u32_or(cfg, "num_classes", arch.num_classes, &arch.num_classes));
        check(mh_config_u32_or(cfg, "n_frames", arch.n_frames, &arch.n_frames));
        check(mh_config_f64_or(cfg, "alpha", alpha, &alpha));
        check(mh_config_f64_or(cfg, "beta", beta, &beta));
        check(mh_config_f64_or(cfg, "margin", margin, &margin));
        check(mh_config_f64_or(cfg, "epsilon", epsilon, &epsilon));
        check(mh_config_u32_or(cfg, "gradcheck_instances", instances, &instances));
        check(mh_config_u64_or(cfg, "seed", seed, &seed));
    }
    if (opts.seed_set) {
        seed = opts.seed;
    }

    double max_rel_error = 0.0;
    check(mh_grad_check(&arch, alpha, beta, margin, seed, instances, epsilon, &max_rel_error));
    std::cout << "max relative error " << fmt(max_rel_error) << " over " << instances
              << " instances (epsilon " << fmt(epsilon) << ")\n";
    if (max_rel_error > 1e-3) {
        throw CliError{static_cast<int>(MH_ERR_NUMERIC),
                       "gradient check failed: max relative error " + fmt(max_rel_error) +
                           " exceeds 1e-3"};
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Supervised video hashing with category masks: train, mask, index, retrieve, evaluate."};
    app.require_subcommand(1);

    CommandOpts opts;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        CLI::Option* config_opt = sub->add_option("--config", opts.config_path, "key=value configuration file");
        if (config_required) {
            config_opt->required();
        }
        sub->add_option("--out", opts.out_dir, "output directory (created if missing)");
        sub->add_option("--seed", opts.seed, "seed override")->each([&](const std::string&) {
            opts.seed_set = true;
        });
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    add_common(gen, true);
    CLI::App* train = app.add_subcommand("train", "train the hash network");
    add_common(train, true);
    CLI::App* mask = app.add_subcommand("mask", "derive the category mask from a checkpoint");
    add_common(mask, true);
    mask->add_option("--ratio", opts.ratio, "mask ratio in (0, 1]")->each([&](const std::string&) {
        opts.ratio_set = true;
    });
    CLI::App* index = app.add_subcommand("index", "encode the database into a packed index");
    add_common(index, true);
    CLI::App* query = app.add_subcommand("query", "rank the index for one query video");
    add_common(query, true);
    query->add_option("--video-id", opts.video_id, "query video id")->each([&](const std::string&) {
        opts.video_id_set = true;
    });
    query->add_option("--top-n", opts.top_n, "number of results")->each([&](const std::string&) {
        opts.top_n_set = true;
    });
    CLI::App* eval = app.add_subcommand("eval", "compute retrieval metrics");
    add_common(eval, true);
    eval->add_option("--threads", opts.threads, "worker threads (0 = auto)");
    CLI::App* sweep = app.add_subcommand("sweep", "evaluate a grid of mask ratios");
    add_common(sweep, true);
    sweep->add_option("--threads", opts.threads, "worker threads (0 = auto)");
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify gradients against finite differences");
    add_common(gradcheck, false);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) run_gen(opts);
        if (train->parsed()) run_train(opts);
        if (mask->parsed()) run_mask(opts);
        if (index->parsed()) run_index(opts);
        if (query->parsed()) run_query(opts);
        if (eval->parsed()) run_eval(opts);
        if (sweep->parsed()) run_sweep(opts);
        if (gradcheck->parsed()) run_gradcheck(opts);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        std::cerr << "error[config]: " << e.what() << '\n';
        return 2;
    } catch (const CliError& e) {
        std::cerr << "error[" << kind_name(e.code) << "]: " << e.message << '\n';
        return e.code;
    }
    return 0;
}
