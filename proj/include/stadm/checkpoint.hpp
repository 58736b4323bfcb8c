#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stadm/config.hpp"
#include "stadm/mae.hpp"
#include "stadm/mtd.hpp"
#include "stadm/stc.hpp"

namespace stadm {

/// A trained model: config snapshot, module parameters (batch-norm running
/// statistics ride along as non-trainable entries), frozen codec when the
/// run used the MAE latent space, and the loss trace.
struct TrainedModel {
    TrainConfig config;
    StcEncoder stc;
    MtdDenoiser mtd;
    std::optional<MaeCodec> mae;
    std::vector<double> loss_trace;
};

/// Checkpoint container ("STPK", version 1): named sections holding the
/// config text, per-module parameter blobs, and the loss trace. Writes are
/// atomic.
void save_checkpoint(const std::string& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::string& path);

/// Codec-only checkpoints produced by MAE pretraining.
void save_mae_checkpoint(const std::string& path, const MaeCodec& codec,
                         const std::vector<double>& loss_trace);
MaeCodec load_mae_checkpoint(const std::string& path);

}  // namespace stadm
