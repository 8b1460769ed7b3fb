#include "wamo/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "wamo/error.hpp"

namespace wamo {

namespace {

using nlohmann::json;

void put_f32(std::string& out, float f) {
    const std::uint32_t v = std::bit_cast<std::uint32_t>(f);
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

float get_f32(const unsigned char* p) {
    const std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                            (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) |
                            (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(v);
}

json config_to_json(const ModelConfig& cfg) {
    json j;
    j["frames"] = cfg.frames;
    j["joints"] = cfg.joints;
    j["latent"] = cfg.latent;
    j["levels"] = cfg.levels;
    j["lambda_g"] = cfg.lambda_g;
    j["heads"] = cfg.heads;
    j["blocks"] = cfg.blocks;
    j["kernel_low"] = cfg.kernel_low;
    j["kernel_high"] = cfg.kernel_high;
    j["hash_buckets"] = cfg.hash_buckets;
    j["family"] = cfg.family;
    j["learnable_bank"] = cfg.learnable_bank;
    return j;
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.frames = j.at("frames").get<std::size_t>();
    cfg.joints = j.at("joints").get<std::size_t>();
    cfg.latent = j.at("latent").get<std::size_t>();
    cfg.levels = j.at("levels").get<std::size_t>();
    cfg.lambda_g = j.at("lambda_g").get<std::size_t>();
    cfg.heads = j.at("heads").get<std::size_t>();
    cfg.blocks = j.at("blocks").get<std::size_t>();
    cfg.kernel_low = j.at("kernel_low").get<std::size_t>();
    cfg.kernel_high = j.at("kernel_high").get<std::size_t>();
    cfg.hash_buckets = j.at("hash_buckets").get<std::size_t>();
    cfg.family = j.at("family").get<std::string>();
    cfg.learnable_bank = j.at("learnable_bank").get<bool>();
    return cfg;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& base_path) {
    json manifest;
    manifest["format"] = "wamo-ckpt/1";
    manifest["config"] = config_to_json(model.config());
    json tensors = json::array();
    std::string blob;
    std::size_t offset = 0;
    for (const auto& p : model.params()) {
        json jt;
        jt["name"] = p.name;
        jt["shape"] = p.value.shape();
        jt["offset"] = offset;
        tensors.push_back(std::move(jt));
        for (std::size_t i = 0; i < p.value.numel(); ++i)
            put_f32(blob, static_cast<float>(p.value[i]));
        offset += p.value.numel();
    }
    manifest["tensors"] = std::move(tensors);

    std::ofstream mf(base_path + ".manifest.json", std::ios::binary);
    if (!mf) throw IoError("save_checkpoint: cannot write " + base_path + ".manifest.json");
    mf << manifest.dump(2) << "\n";
    mf.close();
    if (!mf) throw IoError("save_checkpoint: write failed for " + base_path + ".manifest.json");

    std::ofstream bf(base_path + ".params.bin", std::ios::binary);
    if (!bf) throw IoError("save_checkpoint: cannot write " + base_path + ".params.bin");
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    bf.close();
    if (!bf) throw IoError("save_checkpoint: write failed for " + base_path + ".params.bin");
}

Model load_checkpoint(const std::string& base_path) {
    std::ifstream mf(base_path + ".manifest.json", std::ios::binary);
    if (!mf) throw IoError("load_checkpoint: cannot read " + base_path + ".manifest.json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("load_checkpoint: bad manifest: ") + e.what());
    }
    const std::string fmt = manifest.value("format", "");
    if (fmt != "wamo-ckpt/1")
        throw ValidationError("load_checkpoint: unsupported format version '" + fmt +
                              "' (expected wamo-ckpt/1)");

    Model model(config_from_json(manifest.at("config")), /*init_seed=*/0);

    std::ifstream bf(base_path + ".params.bin", std::ios::binary);
    if (!bf) throw IoError("load_checkpoint: cannot read " + base_path + ".params.bin");
    std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != model.param_count())
        throw ValidationError("load_checkpoint: tensor count mismatch (" +
                              std::to_string(tensors.size()) + " vs " +
                              std::to_string(model.param_count()) + ")");
    std::size_t expected_floats = 0;
    for (const auto& jt : tensors) {
        std::size_t n = 1;
        for (std::size_t d : jt.at("shape").get<std::vector<std::size_t>>()) n *= d;
        expected_floats += n;
    }
    if (blob.size() != expected_floats * 4)
        throw ValidationError("load_checkpoint: blob length mismatch, expected " +
                              std::to_string(expected_floats * 4) + " bytes but found " +
                              std::to_string(blob.size()));

    const unsigned char* base = reinterpret_cast<const unsigned char*>(blob.data());
    for (std::size_t i = 0; i < model.param_count(); ++i) {
        const auto& jt = tensors[i];
        ParamTensor& p = model.params()[i];
        if (jt.at("name").get<std::string>() != p.name)
            throw ValidationError("load_checkpoint: tensor name mismatch at index " +
                                  std::to_string(i) + ": '" +
                                  jt.at("name").get<std::string>() + "' vs '" + p.name + "'");
        const auto shape = jt.at("shape").get<std::vector<std::size_t>>();
        if (shape != p.value.shape())
            throw ValidationError("load_checkpoint: shape mismatch for " + p.name);
        const std::size_t off = jt.at("offset").get<std::size_t>();
        for (std::size_t k = 0; k < p.value.numel(); ++k)
            p.value[k] = static_cast<double>(get_f32(base + (off + k) * 4));
    }
    return model;
}

}  // namespace wamo
