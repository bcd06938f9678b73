#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cstn/model.hpp"
#include "cstn/pipeline.hpp"
#include "cstn/rng.hpp"
#include "cstn/tape.hpp"

namespace cstn {

struct TrainConfig {
    int batch_size = 64;
    double base_lr = 1e-4;
    double lr_decay = 0.1;    // multiplier applied every lr_decay_every epochs
    int lr_decay_every = 200;
    int epochs = 700;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t seed = 1;
    bool shuffle = true;
    int threads = 0;              // 0 = hardware concurrency
    double stop_loss_ratio = 0.0; // >0: stop once mean loss < ratio * first-epoch mean

    void validate() const;
};

// Stepped schedule: base_lr * lr_decay^(epoch / lr_decay_every).
double learning_rate_at(const TrainConfig& cfg, int epoch);

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
};

// Builds the scalar loss subgraph for one sample on the given tape.
using SampleLossFn = std::function<Var(Tape&, int sample_index)>;
using EpochCallback = std::function<void(const EpochStats&)>;

// Minibatch Adam over `sample_count` samples.  Per batch, gradients are
// summed into a fixed number of buckets that partition the batch and merged
// in bucket order, so results are bitwise independent of the thread count.
// A non-finite loss aborts with the name of the tensor where it first arose.
// Returns one stats row per completed epoch, starting at `start_epoch`.
std::vector<EpochStats> train_loop(ParamGroup& params, int sample_count, const TrainConfig& cfg,
                                   const SampleLossFn& loss_fn, Rng& rng, int start_epoch = 0,
                                   const EpochCallback& on_epoch = nullptr);

// --- checkpoints ---

struct Checkpoint {
    CSTNConfig model;
    TrainConfig train;
    NormStats stats;
    int epochs_completed = 0;
    std::array<std::uint64_t, 4> rng_state{};
    ParamGroup params;  // values plus Adam moments
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Digest of the serialized model/train/stats block, stored in the header and
// verified on load.
std::uint64_t checkpoint_config_digest(const Checkpoint& ckpt);

}  // namespace cstn
