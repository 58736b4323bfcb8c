#pragma once

#include <string>
#include <vector>

#include "stadm/checkpoint.hpp"
#include "stadm/rng.hpp"
#include "stadm/schedule.hpp"

namespace stadm {

struct EpochPair {
    std::string name;
    EegEpoch lr, hr;
};

/// Pairs `<stem>.lr.stad` / `<stem>.hr.stad` in a directory, sorted by stem.
/// Unmatched files or an empty directory are data errors.
std::vector<EpochPair> load_pair_dataset(const std::string& dir);

/// Latent codec shared by training and sampling: MAE encoding, or (bypass
/// mode) signal windows scaled by 1/signal_scale_uv.
Array encode_latent(const TrainedModel& model, const EegEpoch& hr);
EegEpoch decode_latent(const TrainedModel& model, const Array& z0);

/// Builds the STC/MTD modules for a dataset shape; loads the codec from
/// mae_ckpt_path unless the config selects the bypass latent space. Fills
/// the config's data snapshot fields.
TrainedModel build_model(TrainConfig config, const EegEpoch& lr_sample,
                         const EegEpoch& hr_sample, const std::string& mae_ckpt_path);

/// One optimizer step over a batch: per sample draw t and noise, diffuse the
/// latent, condition on the LR epoch plus timestep token, regress the noise.
/// Gradients are zeroed at entry and left in place afterwards; the Adam
/// update is applied before returning the batch loss.
double training_step(TrainedModel& model, const std::vector<const EpochPair*>& batch,
                     const NoiseSchedule& sched, Rng& rng, AdamOptimizer& opt_stc,
                     AdamOptimizer& opt_mtd);

/// Full training run over a pair directory. Deterministic in (config, data):
/// parameter init, batch order, and per-step draws all derive from the seed.
TrainedModel train(TrainConfig config, const std::string& data_dir,
                   const std::string& mae_ckpt_path);

/// Ancestral sampling from z_T ~ N(0, I) guided by the LR epoch's condition
/// sequence; deterministic per seed.
EegEpoch super_resolve(const TrainedModel& model, const EegEpoch& lr, std::uint64_t seed,
                       SampleMode mode = SampleMode::standard);

}  // namespace stadm
