#include "framediff/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace framediff {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

constexpr std::size_t kChunk = 4096;

void write_doubles(std::ostream& os, const std::vector<double>& data) {
    char buf[kChunk * 8];
    std::size_t i = 0;
    while (i < data.size()) {
        std::size_t n = std::min(kChunk, data.size() - i);
        for (std::size_t j = 0; j < n; ++j) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, &data[i + j], 8);
            for (int k = 0; k < 8; ++k) buf[j * 8 + static_cast<std::size_t>(k)] = static_cast<char>((bits >> (8 * k)) & 0xff);
        }
        os.write(buf, static_cast<std::streamsize>(n * 8));
        i += n;
    }
}

void read_doubles(std::istream& is, std::vector<double>& data) {
    unsigned char buf[kChunk * 8];
    std::size_t i = 0;
    while (i < data.size()) {
        std::size_t n = std::min(kChunk, data.size() - i);
        is.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n * 8));
        if (!is) throw InputError("checkpoint: truncated array data");
        for (std::size_t j = 0; j < n; ++j) {
            std::uint64_t bits = 0;
            for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(buf[j * 8 + static_cast<std::size_t>(k)]) << (8 * k);
            std::memcpy(&data[i + j], &bits, 8);
        }
        i += n;
    }
}

}  // namespace

const std::vector<double>* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, d] : arrays)
        if (n == name) return &d;
    return nullptr;
}

std::vector<double>& Checkpoint::add(const std::string& name, std::size_t count) {
    arrays.emplace_back(name, std::vector<double>(count, 0.0));
    return arrays.back().second;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    nlohmann::json header;
    header["kind"] = ck.kind;
    header["meta"] = ck.meta;
    auto dir = nlohmann::json::array();
    for (const auto& [name, data] : ck.arrays) dir.push_back({{"name", name}, {"count", data.size()}});
    header["arrays"] = dir;
    std::string hs = header.dump();

    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ResourceError("checkpoint: cannot write " + tmp);
        os.write(kMagic, 4);
        put_u32(os, kVersion);
        put_u64(os, hs.size());
        os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (const auto& [name, data] : ck.arrays) write_doubles(os, data);
        if (!os) throw ResourceError("checkpoint: write failure on " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ResourceError("checkpoint: cannot move " + tmp + " into place");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw InputError("checkpoint: bad magic in " + path);
    std::uint32_t version = get_u32(is);
    if (version != kVersion) throw InputError("checkpoint: unsupported version " + std::to_string(version));
    std::uint64_t hlen = get_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw InputError("checkpoint: truncated header in " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("checkpoint: malformed header in " + path + ": " + e.what());
    }
    Checkpoint ck;
    ck.kind = header.at("kind").get<std::string>();
    ck.meta = header.at("meta");
    for (const auto& entry : header.at("arrays")) {
        auto& data = ck.add(entry.at("name").get<std::string>(), entry.at("count").get<std::size_t>());
        read_doubles(is, data);
    }
    return ck;
}

std::uint64_t checkpoint_file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("checkpoint: cannot open " + path);
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

nlohmann::json denoiser_config_to_json(const DenoiserConfig& cfg) {
    return {
        {"num_layers", cfg.num_layers},
        {"channels", cfg.channels},
        {"dilation_cycle", cfg.dilation_cycle},
        {"cond_kernels", cfg.cond_kernels},
        {"step_embed_dim", cfg.step_embed_dim},
        {"inventory_size", cfg.inventory_size},
        {"use_context", cfg.use_context},
        {"use_phonemes", cfg.use_phonemes},
        {"use_energy", cfg.use_energy},
        {"use_pitch", cfg.use_pitch},
    };
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
    DenoiserConfig cfg;
    cfg.num_layers = j.at("num_layers").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.dilation_cycle = j.at("dilation_cycle").get<std::vector<int>>();
    cfg.cond_kernels = j.at("cond_kernels").get<std::vector<int>>();
    cfg.step_embed_dim = j.at("step_embed_dim").get<int>();
    cfg.inventory_size = j.at("inventory_size").get<int>();
    cfg.use_context = j.at("use_context").get<bool>();
    cfg.use_phonemes = j.at("use_phonemes").get<bool>();
    cfg.use_energy = j.at("use_energy").get<bool>();
    cfg.use_pitch = j.at("use_pitch").get<bool>();
    cfg.validate();
    return cfg;
}

nlohmann::json schedule_spec_to_json(const ScheduleSpec& spec) {
    return {{"steps", spec.steps}, {"beta_min", spec.beta_min}, {"beta_max", spec.beta_max}};
}

ScheduleSpec schedule_spec_from_json(const nlohmann::json& j) {
    ScheduleSpec spec;
    spec.steps = j.at("steps").get<int>();
    spec.beta_min = j.at("beta_min").get<double>();
    spec.beta_max = j.at("beta_max").get<double>();
    return spec;
}

nlohmann::json predictor_config_to_json(const PredictorConfig& cfg) {
    return {
        {"inventory_size", cfg.inventory_size}, {"embed_dim", cfg.embed_dim},
        {"hidden", cfg.hidden},                 {"duration_kernel", cfg.duration_kernel},
        {"energy_kernels", cfg.energy_kernels}, {"dropout", cfg.dropout},
    };
}

PredictorConfig predictor_config_from_json(const nlohmann::json& j) {
    PredictorConfig cfg;
    cfg.inventory_size = j.at("inventory_size").get<int>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.duration_kernel = j.at("duration_kernel").get<int>();
    cfg.energy_kernels = j.at("energy_kernels").get<std::vector<int>>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.validate();
    return cfg;
}

void restore_params(const Checkpoint& ck, std::vector<ParamRef>& refs) {
    for (auto& r : refs) {
        const auto* src = ck.find("param." + r.name);
        if (!src || src->size() != r.p->v.size())
            throw InputError("checkpoint: missing or mis-sized array param." + r.name);
        r.p->v = *src;
    }
}

LoadedDenoiser load_denoiser_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "denoiser")
        throw InputError("checkpoint: " + path + " holds a '" + ck.kind + "' model, expected denoiser");
    LoadedDenoiser out;
    out.config = denoiser_config_from_json(ck.meta.at("config"));
    out.schedule = schedule_spec_from_json(ck.meta.at("schedule"));
    const auto& fr = ck.meta.at("frame");
    out.frame = FrameSpec::from_ms(fr.at("frame_ms").get<double>(), fr.at("overlap_ms").get<double>(),
                                   fr.at("rate_hz").get<int>());
    out.model = std::make_unique<Denoiser>(out.config);
    std::vector<ParamRef> refs;
    out.model->collect(refs);
    restore_params(ck, refs);
    out.file_hash = checkpoint_file_hash(path);
    return out;
}

std::unique_ptr<DurationPredictor> load_duration_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "duration")
        throw InputError("checkpoint: " + path + " holds a '" + ck.kind + "' model, expected duration");
    auto model = std::make_unique<DurationPredictor>(predictor_config_from_json(ck.meta.at("config")));
    std::vector<ParamRef> refs;
    model->collect(refs);
    restore_params(ck, refs);
    return model;
}

std::unique_ptr<EnergyPredictor> load_energy_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "energy")
        throw InputError("checkpoint: " + path + " holds a '" + ck.kind + "' model, expected energy");
    auto model = std::make_unique<EnergyPredictor>(predictor_config_from_json(ck.meta.at("config")));
    std::vector<ParamRef> refs;
    model->collect(refs);
    restore_params(ck, refs);
    return model;
}

}  // namespace framediff
