#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stadm/schedule.hpp"

namespace stadm {

/// Everything a training run needs, plus the data-shape snapshot recorded at
/// train time so checkpoints are self-describing.
struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t epochs = 300;
    int diffusion_steps = 1000;
    ScheduleKind schedule = ScheduleKind::cosine;
    std::uint64_t seed = 0;
    bool latent_bypass = false;      // latent.space = mae | none
    double signal_scale_uv = 100.0;  // bypass-mode token scaling
    std::size_t window_len = 0;      // 0 = auto
    std::size_t validate_every = 0;  // epochs between diagnostic decodes (0 = off)

    std::size_t stc_patch_len = 0;  // 0 = auto
    std::size_t stc_dim = 64;
    std::size_t stc_heads = 4;

    std::vector<std::size_t> mtd_kernels{3, 5, 7, 9};
    std::size_t mtd_blocks = 2;
    std::size_t mtd_heads = 16;
    std::size_t mtd_dim = 64;

    // filled in by train()
    std::string lr_montage, hr_montage;
    std::size_t lr_channels = 0, hr_channels = 0, n_samples = 0;
    double sample_rate_hz = 0.0;
};

/// Desk-scale defaults used by the test suites (small batches, T = 100).
TrainConfig desk_defaults();

/// Flat `key = value` text with `#` comments.
std::map<std::string, std::string> parse_flat_config(const std::string& text);
void apply_config_entries(TrainConfig& cfg, const std::map<std::string, std::string>& entries);
TrainConfig config_from_text(const std::string& text);
std::string config_to_text(const TrainConfig& cfg);
TrainConfig load_config_file(const std::string& path);

}  // namespace stadm
