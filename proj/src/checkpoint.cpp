#include "stadm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "stadm/binary_io.hpp"

namespace stadm {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'P', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_param_store(BinaryWriter& w, const ParamStore& store) {
    w.u32(static_cast<std::uint32_t>(store.size()));
    for (const auto& [path, entry] : store) {
        w.str16(path);
        const char trainable = entry.trainable ? 1 : 0;
        w.bytes(&trainable, 1);
        w.u16(static_cast<std::uint16_t>(entry.value.ndim()));
        for (std::size_t e : entry.value.shape()) w.u64(e);
        for (std::size_t i = 0; i < entry.value.numel(); ++i) w.f64(entry.value[i]);
    }
}

ParamStore read_param_store(BinaryReader& r) {
    ParamStore store;
    const std::uint32_t count = r.u32("parameter count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string path = r.str16("parameter path");
        char trainable = 0;
        r.bytes(&trainable, 1, "trainable flag");
        const std::uint16_t ndim = r.u16("parameter rank");
        std::vector<std::size_t> shape(ndim);
        for (auto& e : shape) e = static_cast<std::size_t>(r.u64("parameter shape"));
        Array value(shape);
        for (std::size_t j = 0; j < value.numel(); ++j) value[j] = r.f64("parameter data");
        store.create(path, std::move(value), trainable != 0);
    }
    return store;
}

std::string mae_config_to_text(const MaeConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "mae.n_channels = " << cfg.n_channels << "\n";
    out << "mae.n_samples = " << cfg.n_samples << "\n";
    out << "mae.window_len = " << cfg.window_len << "\n";
    out << "mae.mask_ratio = " << cfg.mask_ratio << "\n";
    out << "mae.latent_dim = " << cfg.latent_dim << "\n";
    out << "mae.enc_blocks = " << cfg.enc_blocks << "\n";
    out << "mae.dec_blocks = " << cfg.dec_blocks << "\n";
    out << "mae.heads = " << cfg.heads << "\n";
    return out.str();
}

MaeConfig mae_config_from_text(const std::string& text) {
    MaeConfig cfg;
    for (const auto& [key, v] : parse_flat_config(text)) {
        if (key == "mae.n_channels") cfg.n_channels = std::stoull(v);
        else if (key == "mae.n_samples") cfg.n_samples = std::stoull(v);
        else if (key == "mae.window_len") cfg.window_len = std::stoull(v);
        else if (key == "mae.mask_ratio") cfg.mask_ratio = std::stod(v);
        else if (key == "mae.latent_dim") cfg.latent_dim = std::stoull(v);
        else if (key == "mae.enc_blocks") cfg.enc_blocks = std::stoull(v);
        else if (key == "mae.dec_blocks") cfg.dec_blocks = std::stoull(v);
        else if (key == "mae.heads") cfg.heads = std::stoull(v);
        else throw ParseError("unknown codec config key in checkpoint: " + key);
    }
    cfg.validate();
    return cfg;
}

using Sections = std::map<std::string, std::string>;

void write_container(const std::string& path, const Sections& sections) {
    atomic_write_file(path, [&sections](std::ostream& out) {
        BinaryWriter w(out);
        w.bytes(kMagic, 4);
        w.u32(kVersion);
        w.u32(static_cast<std::uint32_t>(sections.size()));
        for (const auto& [name, payload] : sections) {
            w.str16(name);
            w.u64(payload.size());
            w.bytes(payload.data(), payload.size());
        }
    });
}

Sections read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    BinaryReader r(in);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("bad magic in " + path + " (not a checkpoint)");
    const std::uint32_t version = r.u32("version");
    if (version != kVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = r.u32("section count");
    Sections sections;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str16("section name");
        const std::uint64_t len = r.u64("section length");
        std::string payload(len, '\0');
        if (len > 0) r.bytes(payload.data(), len, name.c_str());
        sections[name] = std::move(payload);
    }
    return sections;
}

std::string store_blob(const ParamStore& store) {
    std::ostringstream out(std::ios::binary);
    BinaryWriter w(out);
    write_param_store(w, store);
    return out.str();
}

ParamStore store_from_blob(const std::string& blob) {
    std::istringstream in(blob, std::ios::binary);
    BinaryReader r(in);
    return read_param_store(r);
}

std::string trace_blob(const std::vector<double>& trace) {
    std::ostringstream out(std::ios::binary);
    BinaryWriter w(out);
    w.u64(trace.size());
    for (double v : trace) w.f64(v);
    return out.str();
}

std::vector<double> trace_from_blob(const std::string& blob) {
    std::istringstream in(blob, std::ios::binary);
    BinaryReader r(in);
    std::vector<double> trace(r.u64("loss trace length"));
    for (auto& v : trace) v = r.f64("loss trace");
    return trace;
}

const std::string& require(const Sections& s, const std::string& name, const std::string& path) {
    auto it = s.find(name);
    if (it == s.end()) throw ParseError("checkpoint " + path + " missing section `" + name + "`");
    return it->second;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainedModel& model) {
    Sections sections;
    sections["config"] = config_to_text(model.config);
    sections["params/stc"] = store_blob(model.stc.params);
    sections["params/mtd"] = store_blob(model.mtd.params);
    if (model.mae.has_value()) {
        sections["mae_config"] = mae_config_to_text(model.mae->cfg);
        sections["params/mae"] = store_blob(model.mae->params);
    }
    sections["loss_trace"] = trace_blob(model.loss_trace);
    write_container(path, sections);
}

TrainedModel load_checkpoint(const std::string& path) {
    const Sections sections = read_container(path);
    TrainedModel model;
    model.config = config_from_text(require(sections, "config", path));

    model.stc.cfg.n_channels = model.config.lr_channels;
    model.stc.cfg.n_samples = model.config.n_samples;
    model.stc.cfg.patch_len = model.config.stc_patch_len;
    model.stc.cfg.dim = model.config.stc_dim;
    model.stc.cfg.heads = model.config.stc_heads;
    model.stc.params = store_from_blob(require(sections, "params/stc", path));

    model.mtd.cfg.kernels = model.config.mtd_kernels;
    model.mtd.cfg.blocks = model.config.mtd_blocks;
    model.mtd.cfg.heads = model.config.mtd_heads;
    model.mtd.cfg.dim = model.config.mtd_dim;
    model.mtd.cfg.cond_dim = model.config.stc_dim;
    model.mtd.params = store_from_blob(require(sections, "params/mtd", path));

    if (sections.count("mae_config") != 0) {
        MaeCodec codec;
        codec.cfg = mae_config_from_text(sections.at("mae_config"));
        codec.params = store_from_blob(require(sections, "params/mae", path));
        model.mtd.cfg.latent_dim = codec.cfg.latent_dim;
        model.mae = std::move(codec);
    } else {
        model.mtd.cfg.latent_dim = model.config.window_len;
    }
    model.loss_trace = trace_from_blob(require(sections, "loss_trace", path));

    model.stc.cfg.validate();
    model.mtd.cfg.validate();
    return model;
}

void save_mae_checkpoint(const std::string& path, const MaeCodec& codec,
                         const std::vector<double>& loss_trace) {
    Sections sections;
    sections["mae_config"] = mae_config_to_text(codec.cfg);
    sections["params/mae"] = store_blob(codec.params);
    sections["loss_trace"] = trace_blob(loss_trace);
    write_container(path, sections);
}

MaeCodec load_mae_checkpoint(const std::string& path) {
    const Sections sections = read_container(path);
    MaeCodec codec;
    codec.cfg = mae_config_from_text(require(sections, "mae_config", path));
    codec.params = store_from_blob(require(sections, "params/mae", path));
    return codec;
}

}  // namespace stadm
