#include "m2iosr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "m2iosr/baselines.hpp"
#include "m2iosr/errors.hpp"

using nlohmann::json;

namespace m2iosr {

namespace {

// Reads known keys from one JSON object and records the ones it never asked for.
class StrictReader {
public:
    StrictReader(const json& obj, std::string prefix, std::vector<std::string>& unknown)
        : obj_(obj), prefix_(std::move(prefix)), unknown_(unknown) {
        if (!obj_.is_object()) throw ConfigError("'" + prefix_ + "' must be a JSON object");
    }
    StrictReader(const StrictReader&) = delete;
    ~StrictReader() {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.count(it.key())) unknown_.push_back(prefix_.empty() ? it.key() : prefix_ + "." + it.key());
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("bad value for '" + path(key) + "': " + e.what());
        }
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

private:
    const json& obj_;
    std::string prefix_;
    std::vector<std::string>& unknown_;
    std::set<std::string> seen_;
};

void read_encoder(const json& j, EncoderConfig& e, std::vector<std::string>& unknown) {
    StrictReader r(j, "encoder", unknown);
    if (r.has("input_shape")) {
        std::vector<int> shape;
        r.get("input_shape", shape);
        if (shape.size() != 3) throw ConfigError("encoder.input_shape must be [channels, height, width]");
        e.input = ImageShape{shape[0], shape[1], shape[2]};
    }
    r.get("stage_widths", e.stage_widths);
    r.get("latent_dim", e.latent_dim);
    if (r.has("classifier_hidden")) {
        const auto& v = r.raw("classifier_hidden");
        if (v.is_null()) {
            e.classifier_hidden.reset();
        } else {
            e.classifier_hidden = v.get<std::int64_t>();
        }
    }
    r.get("adapter_channels", e.adapter_channels);
    r.get("disc_hidden", e.disc_hidden);
}

void read_train(const json& j, RunConfig& c, std::vector<std::string>& unknown) {
    StrictReader r(j, "train", unknown);
    auto& t = c.train;
    r.get("beta1", t.beta1);
    r.get("beta2", t.beta2);
    r.get("gamma", t.gamma);
    r.get("a1", t.local.a1);
    r.get("a2", t.local.a2);
    r.get("a3", t.local.a3);
    r.get("lr", t.lr);
    r.get("momentum", t.momentum);
    r.get("lr_decay_every", t.lr_decay_every);
    r.get("lr_decay_factor", t.lr_decay_factor);
    r.get("batch_size", t.batch_size);
    r.get("epochs", t.epochs);
    r.get("seed", t.seed);
    r.get("checkpoint_every", c.checkpoint_every);
}

void read_split(const json& j, SplitConfig& s, std::vector<std::string>& unknown) {
    StrictReader r(j, "split", unknown);
    r.get("dataset", s.dataset);
    r.get("num_known", s.num_known);
    r.get("trial_seed", s.trial_seed);
    if (r.has("unknown_source")) s.unknown_source = unknown_source_from_string(r.raw("unknown_source").get<std::string>());
    r.get("external_dataset", s.external_dataset);
    if (r.has("transform")) s.transform = fit_mode_from_string(r.raw("transform").get<std::string>());
    r.get("unknown_count", s.unknown_count);
    r.get("max_train_per_class", s.max_train_per_class);
}

json split_json(const SplitSpec& s) {
    return json{{"dataset", s.dataset},
                {"known_classes", s.known_classes},
                {"trial_seed", s.trial_seed},
                {"unknown_source",
                 {{"kind", to_string(s.unknown.kind)},
                  {"classes", s.unknown.classes},
                  {"dataset", s.unknown.dataset},
                  {"transform", to_string(s.unknown.transform)},
                  {"count", s.unknown.count}}}};
}

} // namespace

void RunConfig::validate() const {
    encoder.validate();
    train.validate();
    baseline_from_string(baseline);
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    if (split.num_known < 2) throw ConfigError("split.num_known must be >= 2");
    if (encoder.num_known != split.num_known) throw ConfigError("encoder and split disagree on num_known");
    if (split.unknown_source == UnknownSourceKind::External && split.external_dataset.empty()) {
        throw ConfigError("split.external_dataset is required for unknown_source = external");
    }
    if (!(eval.tau > 0.0 && eval.tau < 1.0)) throw ConfigError("eval.tau must lie in (0, 1)");
    for (int p : eval.sweep_pools) {
        if (p < 1) throw ConfigError("eval.sweep_pools entries must be >= 1");
    }
    if (paths.out_dir.empty()) throw ConfigError("paths.out_dir must not be empty");
}

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    std::vector<std::string> unknown;
    {
        StrictReader r(root, "", unknown);
        r.get("baseline", c.baseline);
        if (r.has("encoder")) read_encoder(r.raw("encoder"), c.encoder, unknown);
        if (r.has("train")) read_train(r.raw("train"), c, unknown);
        if (r.has("split")) read_split(r.raw("split"), c.split, unknown);
        if (r.has("eval")) {
            StrictReader e(r.raw("eval"), "eval", unknown);
            e.get("tau", c.eval.tau);
            e.get("sweep_pools", c.eval.sweep_pools);
        }
        if (r.has("paths")) {
            StrictReader p(r.raw("paths"), "paths", unknown);
            p.get("data_dir", c.paths.data_dir);
            p.get("out_dir", c.paths.out_dir);
        }
    }
    if (!unknown.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw ConfigError(msg);
    }
    c.encoder.num_known = c.split.num_known;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    RunConfig c = parse_run_config(read_text_file(path));
    if (const char* dir = std::getenv(kDataDirEnv); dir && *dir) {
        c.paths.data_dir = dir;
    }
    return c;
}

std::string to_json(const RunConfig& c) {
    const auto& e = c.encoder;
    const auto& t = c.train;
    json j;
    j["baseline"] = c.baseline;
    j["encoder"] = {{"input_shape", {e.input.channels, e.input.height, e.input.width}},
                    {"stage_widths", e.stage_widths},
                    {"latent_dim", e.latent_dim},
                    {"classifier_hidden", e.classifier_hidden ? json(*e.classifier_hidden) : json(nullptr)},
                    {"adapter_channels", e.adapter_channels},
                    {"disc_hidden", e.disc_hidden}};
    j["train"] = {{"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"gamma", t.gamma},
                  {"a1", t.local.a1},
                  {"a2", t.local.a2},
                  {"a3", t.local.a3},
                  {"lr", t.lr},
                  {"momentum", t.momentum},
                  {"lr_decay_every", t.lr_decay_every},
                  {"lr_decay_factor", t.lr_decay_factor},
                  {"batch_size", t.batch_size},
                  {"epochs", t.epochs},
                  {"seed", t.seed},
                  {"checkpoint_every", c.checkpoint_every}};
    j["split"] = {{"dataset", c.split.dataset},
                  {"num_known", c.split.num_known},
                  {"trial_seed", c.split.trial_seed},
                  {"unknown_source", to_string(c.split.unknown_source)},
                  {"external_dataset", c.split.external_dataset},
                  {"transform", to_string(c.split.transform)},
                  {"unknown_count", c.split.unknown_count},
                  {"max_train_per_class", c.split.max_train_per_class}};
    j["eval"] = {{"tau", c.eval.tau}, {"sweep_pools", c.eval.sweep_pools}};
    j["paths"] = {{"data_dir", c.paths.data_dir}, {"out_dir", c.paths.out_dir}};
    return j.dump(2);
}

std::string to_json(const SplitSpec& split) { return split_json(split).dump(2); }

SplitSpec parse_split_spec(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("split is not valid JSON: ") + e.what());
    }
    SplitSpec s;
    std::vector<std::string> unknown;
    {
        StrictReader r(j, "", unknown);
        r.get("dataset", s.dataset);
        r.get("known_classes", s.known_classes);
        r.get("trial_seed", s.trial_seed);
        if (r.has("unknown_source")) {
            StrictReader u(r.raw("unknown_source"), "unknown_source", unknown);
            if (u.has("kind")) s.unknown.kind = unknown_source_from_string(u.raw("kind").get<std::string>());
            u.get("classes", s.unknown.classes);
            u.get("dataset", s.unknown.dataset);
            if (u.has("transform")) s.unknown.transform = fit_mode_from_string(u.raw("transform").get<std::string>());
            u.get("count", s.unknown.count);
        }
    }
    if (!unknown.empty()) {
        std::string msg = "unknown split keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw ConfigError(msg);
    }
    s.validate();
    return s;
}

SplitSpec load_split_spec(const std::filesystem::path& path) { return parse_split_spec(read_text_file(path)); }

SplitSpec resolve_split(const RunConfig& config, const std::vector<int>& dataset_classes) {
    SplitSpec s = make_split(config.split.dataset, dataset_classes, config.split.num_known, config.split.trial_seed);
    if (config.split.unknown_source != UnknownSourceKind::HeldOutClasses) {
        s.unknown.kind = config.split.unknown_source;
        s.unknown.dataset = config.split.external_dataset;
        s.unknown.transform = config.split.transform;
        s.unknown.count = config.split.unknown_count;
        s.unknown.classes.clear();
    }
    return s;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

} // namespace m2iosr
