#include "m2iosr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "m2iosr/baselines.hpp"
#include "m2iosr/errors.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace m2iosr {

static_assert(std::endian::native == std::endian::little, "parameter blobs are written in host order");

namespace {

std::string dtype_name(const torch::Tensor& t) {
    switch (t.scalar_type()) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    default: throw CheckpointError("unsupported tensor dtype " + std::string(c10::toString(t.scalar_type())));
    }
}

// Parameters first, then buffers, each in registration order.
std::vector<std::pair<std::string, torch::Tensor>> state_of(OsrModel& model) {
    std::vector<std::pair<std::string, torch::Tensor>> state;
    for (const auto& p : model->named_parameters()) state.emplace_back(p.key(), p.value());
    for (const auto& b : model->named_buffers()) state.emplace_back(b.key(), b.value());
    return state;
}

} // namespace

std::vector<std::uint8_t> serialize_parameters(OsrModel& model, std::vector<ManifestEntry>& entries) {
    entries.clear();
    std::vector<std::uint8_t> blob;
    for (auto& [name, tensor] : state_of(model)) {
        auto t = tensor.detach().contiguous();
        ManifestEntry e;
        e.name = name;
        e.group = OsrModelImpl::group_of(name);
        e.shape.assign(t.sizes().begin(), t.sizes().end());
        e.dtype = dtype_name(t);
        e.offset = blob.size();
        e.bytes = t.numel() * t.element_size();
        const auto* src = static_cast<const std::uint8_t*>(t.data_ptr());
        blob.insert(blob.end(), src, src + e.bytes);
        entries.push_back(std::move(e));
    }
    return blob;
}

void deserialize_parameters(OsrModel& model, const std::vector<ManifestEntry>& entries,
                            const std::vector<std::uint8_t>& blob) {
    auto state = state_of(model);
    if (state.size() != entries.size()) {
        throw CheckpointError("checkpoint has " + std::to_string(entries.size()) + " entries, model expects " +
                              std::to_string(state.size()));
    }
    torch::NoGradGuard guard;
    for (std::size_t i = 0; i < state.size(); ++i) {
        auto& [name, tensor] = state[i];
        const auto& e = entries[i];
        if (e.name != name) {
            throw CheckpointError("entry " + std::to_string(i) + " is '" + e.name + "', model expects '" + name + "'");
        }
        if (!std::equal(e.shape.begin(), e.shape.end(), tensor.sizes().begin(), tensor.sizes().end())) {
            throw CheckpointError("shape mismatch for '" + name + "'");
        }
        if (e.dtype != dtype_name(tensor)) {
            throw CheckpointError("dtype mismatch for '" + name + "'");
        }
        const std::uint64_t expected = tensor.numel() * tensor.element_size();
        if (e.bytes != expected || e.offset + e.bytes > blob.size()) {
            throw CheckpointError("byte range of '" + name + "' does not fit the blob");
        }
        auto dst = tensor.detach();
        if (!dst.is_contiguous()) throw CheckpointError("non-contiguous tensor '" + name + "'");
        std::memcpy(dst.data_ptr(), blob.data() + e.offset, e.bytes);
    }
}

fs::path save_checkpoint(OsrModel& model, CheckpointManifest manifest, const fs::path& dir) {
    fs::create_directories(dir);
    auto blob = serialize_parameters(model, manifest.entries);

    json entries = json::array();
    for (const auto& e : manifest.entries) {
        entries.push_back({{"name", e.name},
                           {"group", e.group},
                           {"shape", e.shape},
                           {"dtype", e.dtype},
                           {"offset", e.offset},
                           {"bytes", e.bytes}});
    }
    json j{{"format_version", manifest.format_version},
           {"blob", manifest.blob},
           {"groups", model->parameter_groups()},
           {"entries", entries},
           {"config", json::parse(to_json(manifest.config))},
           {"split", json::parse(to_json(manifest.split))},
           {"epoch", manifest.epoch},
           {"rng_digest", manifest.rng_digest}};

    const auto blob_path = dir / manifest.blob;
    {
        std::ofstream out(blob_path, std::ios::binary);
        if (!out) throw CheckpointError("cannot write " + blob_path.string());
        out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
        if (!out) throw CheckpointError("write failed for " + blob_path.string());
    }
    const auto manifest_path = dir / "manifest.json";
    write_text_file(manifest_path, j.dump(2) + "\n");
    return manifest_path;
}

CheckpointManifest read_manifest(const fs::path& manifest_path) {
    json j;
    try {
        j = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw CheckpointError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
    }
    CheckpointManifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != kCheckpointFormatVersion) {
            throw CheckpointError("unsupported checkpoint format_version " + std::to_string(m.format_version));
        }
        m.blob = j.at("blob").get<std::string>();
        for (const auto& e : j.at("entries")) {
            ManifestEntry me;
            me.name = e.at("name").get<std::string>();
            me.group = e.at("group").get<std::string>();
            me.shape = e.at("shape").get<std::vector<std::int64_t>>();
            me.dtype = e.at("dtype").get<std::string>();
            me.offset = e.at("offset").get<std::uint64_t>();
            me.bytes = e.at("bytes").get<std::uint64_t>();
            m.entries.push_back(std::move(me));
        }
        m.config = parse_run_config(j.at("config").dump());
        m.split = parse_split_spec(j.at("split").dump());
        m.epoch = j.at("epoch").get<int>();
        m.rng_digest = j.at("rng_digest").get<std::string>();
    } catch (const json::exception& e) {
        throw CheckpointError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    return m;
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
    const fs::path manifest_path = fs::is_directory(path) ? path / "manifest.json" : path;
    LoadedCheckpoint out;
    out.manifest = read_manifest(manifest_path);

    const auto blob_path = manifest_path.parent_path() / out.manifest.blob;
    std::ifstream in(blob_path, std::ios::binary);
    if (!in) throw CheckpointError("missing parameter blob " + blob_path.string());
    std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const auto& cfg = out.manifest.config;
    const auto spec = baseline_spec(baseline_from_string(cfg.baseline));
    out.model = make_model(cfg.encoder, cfg.train.seed, spec.objective.reconstruction);
    deserialize_parameters(out.model, out.manifest.entries, blob);
    return out;
}

} // namespace m2iosr
