#include "stadm/config.hpp"

#include <fstream>
#include <sstream>

#include "stadm/errors.hpp"

namespace stadm {

TrainConfig desk_defaults() {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 50;
    cfg.diffusion_steps = 100;
    return cfg;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not a number: `" + v + "`");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not a non-negative integer: `" + v + "`");
    }
}

std::vector<std::size_t> parse_uint_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(static_cast<std::size_t>(parse_uint(key, item)));
    }
    if (out.empty()) throw ConfigError("config key " + key + ": empty list");
    return out;
}

}  // namespace

std::map<std::string, std::string> parse_flat_config(const std::string& text) {
    std::map<std::string, std::string> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected `key = value`");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ParseError("config line " + std::to_string(lineno) + ": empty key or value");
        entries[key] = value;
    }
    return entries;
}

void apply_config_entries(TrainConfig& cfg, const std::map<std::string, std::string>& entries) {
    for (const auto& [key, v] : entries) {
        if (key == "training.learning_rate") cfg.learning_rate = parse_double(key, v);
        else if (key == "training.batch_size") cfg.batch_size = parse_uint(key, v);
        else if (key == "training.epochs") cfg.epochs = parse_uint(key, v);
        else if (key == "training.validate_every") cfg.validate_every = parse_uint(key, v);
        else if (key == "diffusion.steps") cfg.diffusion_steps = static_cast<int>(parse_uint(key, v));
        else if (key == "diffusion.schedule") cfg.schedule = schedule_kind_from_string(v);
        else if (key == "seed") cfg.seed = parse_uint(key, v);
        else if (key == "latent.space") {
            if (v == "mae") cfg.latent_bypass = false;
            else if (v == "none") cfg.latent_bypass = true;
            else throw ConfigError("latent.space must be `mae` or `none`, got `" + v + "`");
        }
        else if (key == "latent.signal_scale_uv") cfg.signal_scale_uv = parse_double(key, v);
        else if (key == "latent.window_len") cfg.window_len = parse_uint(key, v);
        else if (key == "stc.patch_len") cfg.stc_patch_len = parse_uint(key, v);
        else if (key == "stc.dim") cfg.stc_dim = parse_uint(key, v);
        else if (key == "stc.heads") cfg.stc_heads = parse_uint(key, v);
        else if (key == "mtd.kernels") cfg.mtd_kernels = parse_uint_list(key, v);
        else if (key == "mtd.blocks") cfg.mtd_blocks = parse_uint(key, v);
        else if (key == "mtd.heads") cfg.mtd_heads = parse_uint(key, v);
        else if (key == "mtd.dim") cfg.mtd_dim = parse_uint(key, v);
        else if (key == "data.lr_montage") cfg.lr_montage = v;
        else if (key == "data.hr_montage") cfg.hr_montage = v;
        else if (key == "data.lr_channels") cfg.lr_channels = parse_uint(key, v);
        else if (key == "data.hr_channels") cfg.hr_channels = parse_uint(key, v);
        else if (key == "data.n_samples") cfg.n_samples = parse_uint(key, v);
        else if (key == "data.sample_rate_hz") cfg.sample_rate_hz = parse_double(key, v);
        else throw ConfigError("unknown config key: " + key);
    }
    if (cfg.batch_size < 2)
        throw ConfigError("training.batch_size must be at least 2 (train-mode batch norm)");
    if (cfg.epochs == 0 || cfg.diffusion_steps < 1 || cfg.learning_rate <= 0.0)
        throw ConfigError("training values must be positive");
}

TrainConfig config_from_text(const std::string& text) {
    TrainConfig cfg;
    apply_config_entries(cfg, parse_flat_config(text));
    return cfg;
}

std::string config_to_text(const TrainConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "training.learning_rate = " << cfg.learning_rate << "\n";
    out << "training.batch_size = " << cfg.batch_size << "\n";
    out << "training.epochs = " << cfg.epochs << "\n";
    out << "training.validate_every = " << cfg.validate_every << "\n";
    out << "diffusion.steps = " << cfg.diffusion_steps << "\n";
    out << "diffusion.schedule = " << to_string(cfg.schedule) << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "latent.space = " << (cfg.latent_bypass ? "none" : "mae") << "\n";
    out << "latent.signal_scale_uv = " << cfg.signal_scale_uv << "\n";
    out << "latent.window_len = " << cfg.window_len << "\n";
    out << "stc.patch_len = " << cfg.stc_patch_len << "\n";
    out << "stc.dim = " << cfg.stc_dim << "\n";
    out << "stc.heads = " << cfg.stc_heads << "\n";
    out << "mtd.kernels = ";
    for (std::size_t i = 0; i < cfg.mtd_kernels.size(); ++i)
        out << (i ? "," : "") << cfg.mtd_kernels[i];
    out << "\n";
    out << "mtd.blocks = " << cfg.mtd_blocks << "\n";
    out << "mtd.heads = " << cfg.mtd_heads << "\n";
    out << "mtd.dim = " << cfg.mtd_dim << "\n";
    if (!cfg.lr_montage.empty()) out << "data.lr_montage = " << cfg.lr_montage << "\n";
    if (!cfg.hr_montage.empty()) out << "data.hr_montage = " << cfg.hr_montage << "\n";
    if (cfg.lr_channels) out << "data.lr_channels = " << cfg.lr_channels << "\n";
    if (cfg.hr_channels) out << "data.hr_channels = " << cfg.hr_channels << "\n";
    if (cfg.n_samples) out << "data.n_samples = " << cfg.n_samples << "\n";
    if (cfg.sample_rate_hz > 0) out << "data.sample_rate_hz = " << cfg.sample_rate_hz << "\n";
    return out.str();
}

TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_text(ss.str());
}

}  // namespace stadm
