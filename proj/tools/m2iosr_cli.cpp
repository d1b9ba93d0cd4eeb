// m2iosr command-line tool: train, eval, sweep, ablate, synth, plot.
//
// Every command exits 0 on success. Failures print exactly one line,
// `error: <kind>: <message>`, to stderr and exit nonzero.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "m2iosr/baselines.hpp"
#include "m2iosr/checkpoint.hpp"
#include "m2iosr/config.hpp"
#include "m2iosr/datasets.hpp"
#include "m2iosr/errors.hpp"
#include "m2iosr/evaluation.hpp"
#include "m2iosr/openset_inference.hpp"
#include "m2iosr/plot.hpp"
#include "m2iosr/report.hpp"
#include "m2iosr/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace m2iosr;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3, kData = 4, kCheckpoint = 5, kNumeric = 6 };

struct Data {
    ImageBatch train;
    ImageBatch test;
};

std::string data_dir_of(const RunConfig& config) {
    if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
    return config.paths.data_dir;
}

Data load_data(const std::string& dir, int channels) {
    if (!fs::exists(dir)) throw DataError("data directory not found: " + dir);
    return {load_dataset(dir, DatasetPart::Train, channels), load_dataset(dir, DatasetPart::Test, channels)};
}

fs::path out_dir_of(const RunConfig& config, const std::string& override_dir) {
    return override_dir.empty() ? fs::path(config.paths.out_dir) : fs::path(override_dir);
}

// Number of distinct unknown classes the open test set contributes.
int unknown_class_count(const SplitSpec& split, int channels) {
    switch (split.unknown.kind) {
    case UnknownSourceKind::HeldOutClasses: return static_cast<int>(split.unknown.classes.size());
    case UnknownSourceKind::External: {
        auto ext = load_dataset(split.unknown.dataset, DatasetPart::Test, channels, split.unknown.transform);
        return std::max<int>(1, static_cast<int>(class_ids(ext).size()));
    }
    case UnknownSourceKind::SyntheticNoise:
    case UnknownSourceKind::NoisedCopy: return 1;
    }
    return 1;
}

json losses_json(const LossBreakdown& b) {
    json j = json::object();
    const auto& names = LossBreakdown::field_names();
    const auto values = b.values();
    for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = values[i];
    return j;
}

CheckpointManifest manifest_for(const RunConfig& config, const SplitSpec& split, const Trainer& trainer) {
    CheckpointManifest m;
    m.config = config;
    m.split = split;
    m.epoch = trainer.epoch();
    m.rng_digest = trainer.rng_digest();
    return m;
}

// ---- train ----

int cmd_train(const std::string& config_path) {
    RunConfig config = load_run_config(config_path);
    const auto spec = baseline_spec(baseline_from_string(config.baseline));
    const fs::path out = config.paths.out_dir;
    const int channels = config.encoder.input.channels;

    const auto data = load_data(data_dir_of(config), channels);
    const auto split = resolve_split(config, class_ids(data.train));
    const auto train = select_classes(cap_per_class(data.train, config.split.max_train_per_class), split.known_classes);
    const auto known_test = select_classes(data.test, split.known_classes);

    auto built = build_baseline(spec, config.encoder, config.train);
    Trainer trainer(built.model, built.config, built.spec.objective);
    std::cout << "training " << config.baseline << " on " << train.size() << " images, split " << split_hash(split)
              << "\n";

    auto on_epoch = [&](int epoch, const Trainer& t) {
        if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 &&
            epoch + 1 < built.config.epochs) {
            save_checkpoint(built.model, manifest_for(config, split, t),
                            out / "checkpoints" / ("epoch_" + std::to_string(epoch + 1)));
        }
    };
    trainer.train(train, &std::cout, on_epoch);

    const auto manifest_path = save_checkpoint(built.model, manifest_for(config, split, trainer), out / "checkpoint");
    write_text_file(out / "loss_history.csv", loss_csv(trainer.history()));
    write_text_file(out / "split.json", to_json(split));
    write_text_file(out / "centers.csv", centers_csv(built.model->centers->centers));

    const double acc = accuracy(predict_closed(built.model, known_test), known_test.labels);
    json report{{"baseline", config.baseline},
                {"config", json::parse(to_json(config))},
                {"split", json::parse(to_json(split))},
                {"split_hash", split_hash(split)},
                {"train_images", train.size()},
                {"epochs", trainer.epoch()},
                {"iterations", trainer.history().size()},
                {"final_losses", trainer.history().empty() ? json(nullptr) : losses_json(trainer.history().back())},
                {"closed_set_accuracy", acc},
                {"checkpoint", manifest_path.string()},
                {"rng_digest", trainer.rng_digest()}};
    if (spec.id == BaselineId::Dim) {
        report["note"] = "III-DIM trains without any statistical latent constraint";
    }
    write_text_file(out / "run_report.json", report.dump(2) + "\n");
    std::cout << "closed-set accuracy " << acc << "\ncheckpoint " << manifest_path.string() << "\n";
    return kOk;
}

// ---- eval ----

int cmd_eval(const std::string& checkpoint, const std::string& split_path, double tau, const std::string& out_flag) {
    auto ckpt = load_checkpoint(checkpoint);
    const auto& config = ckpt.manifest.config;
    const SplitSpec split = split_path.empty() ? ckpt.manifest.split : load_split_spec(split_path);
    if (split.num_known() != config.encoder.num_known) {
        throw ConfigError("split has " + std::to_string(split.num_known()) + " known classes, checkpoint expects " +
                          std::to_string(config.encoder.num_known));
    }
    const fs::path out = out_dir_of(config, out_flag);
    const int channels = config.encoder.input.channels;

    const auto dir = data_dir_of(config);
    if (!fs::exists(dir)) throw DataError("data directory not found: " + dir);
    const auto test = load_dataset(dir, DatasetPart::Test, channels);
    const auto open_test = build_open_test_set(split, test, channels);

    const auto predictions = predict(ckpt.model, open_test, tau);
    auto report = macro_f1(predictions, open_test.labels, split.num_known());
    report.openness = openness(split.num_known(), split.num_known() + unknown_class_count(split, channels));

    write_text_file(out / "eval_report.json", eval_report_json(report, split, tau));
    write_text_file(out / "predictions.csv", predictions_csv(predictions));
    write_confusion_png(report.confusion, out / "confusion.png");
    std::cout << "macro-F1 " << report.macro_f1 << " openness " << report.openness << " samples "
              << report.n_samples << "\n";
    return kOk;
}

// ---- sweep ----

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad ") + what + " entry '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
    return out;
}

int cmd_sweep(const std::string& checkpoint, const std::string& pools_flag, const std::string& unknown_dataset,
              double tau, const std::string& out_flag) {
    auto ckpt = load_checkpoint(checkpoint);
    const auto& config = ckpt.manifest.config;
    const auto& split = ckpt.manifest.split;
    const fs::path out = out_dir_of(config, out_flag);
    const int channels = config.encoder.input.channels;
    const auto pool_sizes = pools_flag.empty() ? config.eval.sweep_pools : parse_int_list(pools_flag, "pool");

    const auto dir = data_dir_of(config);
    if (!fs::exists(dir)) throw DataError("data directory not found: " + dir);
    const auto test = load_dataset(dir, DatasetPart::Test, channels);
    const auto known_test = select_classes(test, split.known_classes);

    std::vector<UnknownPool> pools;
    if (unknown_dataset.empty()) {
        std::vector<std::size_t> idx;
        const auto& u = split.unknown.classes;
        for (std::size_t i = 0; i < test.size(); ++i) {
            if (std::find(u.begin(), u.end(), test.labels[i]) != u.end()) idx.push_back(i);
        }
        pools = nested_pools(test.gather(idx), u, pool_sizes);
    } else {
        // classes of the external set are numbered after the base dataset's ids
        auto ext = load_dataset(unknown_dataset, DatasetPart::Test, channels, split.unknown.transform);
        const int offset = *std::max_element(test.labels.begin(), test.labels.end()) + 1;
        for (auto& l : ext.labels) l += offset;
        pools = nested_pools(ext, class_ids(ext), pool_sizes);
    }

    Predictor predictor = [&](const ImageBatch& images, double t) { return predict(ckpt.model, images, t); };
    const auto curve = sweep_openness(predictor, known_test, split.known_classes, pools, tau);
    write_text_file(out / "sweep.csv", sweep_csv(curve));
    CurveSeries series{config.baseline, {}};
    for (const auto& p : curve) series.points.emplace_back(p.openness, p.macro_f1);
    write_curve_png(std::span<const CurveSeries>(&series, 1), out / "sweep.png");
    for (const auto& p : curve) {
        std::cout << "unknown classes " << p.unknown_classes << " openness " << p.openness << " macro-F1 "
                  << p.macro_f1 << "\n";
    }
    return kOk;
}

// ---- ablate ----

int cmd_ablate(const std::string& config_path, const std::string& baselines_flag, const std::string& seeds_flag,
               const std::string& pools_flag) {
    RunConfig config = load_run_config(config_path);
    const fs::path out = config.paths.out_dir;
    const int channels = config.encoder.input.channels;

    AblationSetup setup;
    setup.dataset = config.split.dataset;
    auto data = load_data(data_dir_of(config), channels);
    setup.train = std::move(data.train);
    setup.test = std::move(data.test);
    setup.num_known = config.split.num_known;
    setup.max_train_per_class = config.split.max_train_per_class;
    setup.encoder = config.encoder;
    setup.train_config = config.train;
    setup.tau = config.eval.tau;
    setup.pool_sizes = pools_flag.empty() ? config.eval.sweep_pools : parse_int_list(pools_flag, "pool");

    std::stringstream ss(baselines_flag);
    std::string name;
    while (std::getline(ss, name, ',')) setup.baselines.push_back(baseline_from_string(name));
    if (setup.baselines.empty()) throw ConfigError("baseline list is empty");
    for (int s : parse_int_list(seeds_flag, "seed")) {
        if (s < 0) throw ConfigError("seeds must be non-negative");
        setup.seeds.push_back(static_cast<std::uint64_t>(s));
    }

    const auto rows = run_ablation(setup, &std::cout);
    write_text_file(out / "ablation.csv", ablation_csv(rows));
    const auto series = read_curve_csv(out / "ablation.csv");
    write_curve_png(series, out / "ablation.png");

    json header{{"config", json::parse(to_json(config))},
                {"baselines", json::array()},
                {"seeds", setup.seeds},
                {"pool_sizes", setup.pool_sizes},
                {"rows", rows.size()}};
    for (auto id : setup.baselines) header["baselines"].push_back(to_string(id));
    if (std::find(setup.baselines.begin(), setup.baselines.end(), BaselineId::Dim) != setup.baselines.end()) {
        header["note"] = "III-DIM trains without any statistical latent constraint";
    }
    write_text_file(out / "ablation_report.json", header.dump(2) + "\n");
    std::cout << "wrote " << rows.size() << " rows to " << (out / "ablation.csv").string() << "\n";
    return kOk;
}

// ---- synth ----

int cmd_synth(const std::string& kind, int count, const std::string& out, std::uint64_t seed, int channels,
              const std::string& source) {
    if (count < 1) throw ConfigError("count must be >= 1");
    ImageBatch images;
    if (kind == "noise") {
        images = synth_noise(static_cast<std::size_t>(count), ImageShape{channels, 32, 32}, seed);
    } else if (kind == "noised") {
        std::string dir = source;
        if (dir.empty()) {
            const char* env = std::getenv(kDataDirEnv);
            dir = env && *env ? env : PathsConfig{}.data_dir;
        }
        if (!fs::exists(dir)) throw DataError("data directory not found: " + dir);
        auto test = load_dataset(dir, DatasetPart::Test, channels);
        if (static_cast<std::size_t>(count) > test.size()) {
            throw ConfigError("count " + std::to_string(count) + " exceeds the " + std::to_string(test.size()) +
                              " available test images");
        }
        std::vector<std::size_t> idx(static_cast<std::size_t>(count));
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        images = noised_copy(test.gather(idx), seed);
    } else {
        throw ConfigError("synth kind must be noise or noised, got '" + kind + "'");
    }
    save_png_folder(images, out);
    std::cout << "wrote " << images.size() << " images to " << out << "\n";
    return kOk;
}

// ---- plot ----

int cmd_plot(const std::string& in, const std::string& out) {
    const auto series = read_curve_csv(in);
    write_curve_png(series, out);
    return kOk;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << "error: " << kind << ": " << one_line(message) << std::endl;
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-set recognition with mutual-information regularized encoders"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, split_path, pools, baselines, seeds, kind, out, in, source, unknown_dataset;
    double tau = kDefaultTau;
    int count = 0;
    int channels = 1;
    std::uint64_t seed = 0;

    auto* train = app.add_subcommand("train", "Train one model from a config file");
    train->add_option("--config", config_path, "RunConfig JSON")->required();

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    eval->add_option("--checkpoint", checkpoint, "checkpoint directory or manifest.json")->required();
    eval->add_option("--split", split_path, "SplitSpec JSON (default: the checkpoint's split)");
    eval->add_option("--tau", tau, "rejection threshold")->default_val(kDefaultTau);
    eval->add_option("--out", out, "output directory (default: paths.out_dir of the checkpoint)");

    auto* sweep = app.add_subcommand("sweep", "Macro-F1 against openness for one checkpoint");
    sweep->add_option("--checkpoint", checkpoint, "checkpoint directory or manifest.json")->required();
    sweep->add_option("--pools", pools, "comma-separated unknown class counts (default: eval.sweep_pools)");
    sweep->add_option("--unknown-dataset", unknown_dataset, "draw unknown pools from this dataset directory");
    sweep->add_option("--tau", tau, "rejection threshold")->default_val(kDefaultTau);
    sweep->add_option("--out", out, "output directory (default: paths.out_dir of the checkpoint)");

    auto* ablate = app.add_subcommand("ablate", "Train and sweep several baselines over several seeds");
    ablate->add_option("--config", config_path, "RunConfig JSON")->required();
    ablate->add_option("--baselines", baselines, "comma-separated baseline ids")->required();
    ablate->add_option("--seeds", seeds, "comma-separated seeds")->required();
    ablate->add_option("--pools", pools, "comma-separated unknown class counts (default: eval.sweep_pools)");

    auto* synth = app.add_subcommand("synth", "Write a synthetic unknown set as PNG files");
    synth->add_option("--kind", kind, "noise or noised")->required()->check(CLI::IsMember({"noise", "noised"}));
    synth->add_option("--count", count, "number of images")->required();
    synth->add_option("--out", out, "output directory")->required();
    synth->add_option("--seed", seed, "random seed")->default_val(0);
    synth->add_option("--channels", channels, "image channels")->default_val(1)->check(CLI::IsMember({1, 3}));
    synth->add_option("--source", source, "dataset directory for noised copies (default: data dir)");

    auto* plot = app.add_subcommand("plot", "Plot F1-vs-openness curves from a sweep or ablation CSV");
    plot->add_option("--in", in, "CSV with openness and macro_f1 columns")->required();
    plot->add_option("--out", out, "PNG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), kUsage);
    }

    try {
        if (*train) return cmd_train(config_path);
        if (*eval) return cmd_eval(checkpoint, split_path, tau, out);
        if (*sweep) return cmd_sweep(checkpoint, pools, unknown_dataset, tau, out);
        if (*ablate) return cmd_ablate(config_path, baselines, seeds, pools);
        if (*synth) return cmd_synth(kind, count, out, seed, channels, source);
        if (*plot) return cmd_plot(in, out);
    } catch (const ConfigError& e) {
        return fail(e.kind(), e.what(), kConfig);
    } catch (const DataError& e) {
        return fail(e.kind(), e.what(), kData);
    } catch (const CheckpointError& e) {
        return fail(e.kind(), e.what(), kCheckpoint);
    } catch (const NumericError& e) {
        return fail(e.kind(), e.what(), kNumeric);
    } catch (const c10::Error& e) {
        return fail("torch", e.what_without_backtrace(), kFailure);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), kFailure);
    }
    return kFailure;
}
