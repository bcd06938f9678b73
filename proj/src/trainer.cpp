#include "cstn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <thread>

#include "cstn/binio.hpp"
#include "cstn/errors.hpp"

namespace cstn {

namespace {
constexpr int kGradBuckets = 8;
constexpr char kCheckpointMagic[8] = {'C', 'S', 'T', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be non-negative");
    if (!(base_lr > 0.0)) throw std::invalid_argument("TrainConfig: base_lr must be positive");
    if (!(lr_decay > 0.0) || lr_decay > 1.0)
        throw std::invalid_argument("TrainConfig: lr_decay must lie in (0, 1]");
    if (lr_decay_every < 1) throw std::invalid_argument("TrainConfig: lr_decay_every must be positive");
    if (threads < 0) throw std::invalid_argument("TrainConfig: threads must be non-negative");
    if (stop_loss_ratio < 0.0 || stop_loss_ratio >= 1.0)
        throw std::invalid_argument("TrainConfig: stop_loss_ratio must lie in [0, 1)");
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
    if (epoch < 0) throw std::invalid_argument("learning_rate_at: negative epoch");
    return cfg.base_lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_every));
}

namespace {

struct BucketResult {
    GradRecord grads;
    double loss_sum = 0.0;
    bool aborted = false;
    int abort_position = -1;  // position within the batch, for deterministic blame
    int abort_sample = -1;
    std::string abort_label;
    std::string error;  // non-numerical failure propagated as-is
};

void run_bucket(const SampleLossFn& loss_fn, const ParamGroup& params, const std::vector<int>& order,
                int begin, int end, std::atomic<bool>& stop, BucketResult& out) {
    for (int pos = begin; pos < end; ++pos) {
        if (stop.load(std::memory_order_relaxed)) return;
        try {
            Tape tape;
            const Var loss = loss_fn(tape, order[pos]);
            const double lv = tape.value(loss)[0];
            if (!std::isfinite(lv)) {
                out.aborted = true;
                out.abort_position = pos;
                out.abort_sample = order[pos];
                out.abort_label = tape.first_nonfinite_label();
                if (out.abort_label.empty()) out.abort_label = "loss";
                stop.store(true, std::memory_order_relaxed);
                return;
            }
            out.loss_sum += lv;
            out.grads.accumulate(tape.backward(loss, params));
        } catch (const std::exception& e) {
            out.error = e.what();
            stop.store(true, std::memory_order_relaxed);
            return;
        }
    }
}

}  // namespace

std::vector<EpochStats> train_loop(ParamGroup& params, int sample_count, const TrainConfig& cfg,
                                   const SampleLossFn& loss_fn, Rng& rng, int start_epoch,
                                   const EpochCallback& on_epoch) {
    cfg.validate();
    if (sample_count < 1) throw std::invalid_argument("train_loop: no samples");
    if (start_epoch < 0) throw std::invalid_argument("train_loop: negative start epoch");

    int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, kGradBuckets));

    std::vector<int> order(static_cast<std::size_t>(sample_count));
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochStats> history;
    double first_epoch_loss = std::numeric_limits<double>::quiet_NaN();

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = learning_rate_at(cfg, epoch);
        if (cfg.shuffle) {
            // Restart from identity so each epoch's permutation is a function
            // of the generator position alone; a run resumed from a checkpoint
            // then replays the exact sample order of an uninterrupted run.
            std::iota(order.begin(), order.end(), 0);
            for (int i = sample_count - 1; i > 0; --i) {
                const int j = static_cast<int>(rng.index(static_cast<std::uint64_t>(i) + 1));
                std::swap(order[i], order[j]);
            }
        }

        double epoch_loss = 0.0;
        for (int batch_start = 0; batch_start < sample_count; batch_start += cfg.batch_size) {
            const int batch_len = std::min(cfg.batch_size, sample_count - batch_start);
            std::array<BucketResult, kGradBuckets> buckets;
            std::atomic<bool> stop{false};

            const int base = batch_len / kGradBuckets, rem = batch_len % kGradBuckets;
            auto bucket_begin = [&](int b) { return batch_start + b * base + std::min(b, rem); };
            auto bucket_end = [&](int b) { return bucket_begin(b) + base + (b < rem ? 1 : 0); };

            if (threads == 1) {
                for (int b = 0; b < kGradBuckets; ++b)
                    run_bucket(loss_fn, params, order, bucket_begin(b), bucket_end(b), stop, buckets[b]);
            } else {
                std::vector<std::thread> pool;
                for (int tid = 0; tid < threads; ++tid)
                    pool.emplace_back([&, tid] {
                        for (int b = tid; b < kGradBuckets; b += threads)
                            run_bucket(loss_fn, params, order, bucket_begin(b), bucket_end(b), stop,
                                       buckets[b]);
                    });
                for (auto& th : pool) th.join();
            }

            // Deterministic blame: earliest batch position wins.
            const BucketResult* abort = nullptr;
            for (const BucketResult& b : buckets) {
                if (!b.error.empty()) throw std::runtime_error(b.error);
                if (b.aborted && (abort == nullptr || b.abort_position < abort->abort_position))
                    abort = &b;
            }
            if (abort != nullptr)
                throw NumericalAbortError("training aborted: non-finite value first appeared in '" +
                                          abort->abort_label + "' (sample " +
                                          std::to_string(abort->abort_sample) + ", epoch " +
                                          std::to_string(epoch) + ")");

            GradRecord total;
            for (BucketResult& b : buckets) {
                total.accumulate(b.grads);
                epoch_loss += b.loss_sum;
            }
            total.scale_all(1.0 / static_cast<double>(batch_len));
            adam_step(params, total, lr, cfg.beta1, cfg.beta2, cfg.eps);
        }

        EpochStats stats{epoch, epoch_loss / static_cast<double>(sample_count), lr};
        history.push_back(stats);
        if (on_epoch) on_epoch(stats);
        if (std::isnan(first_epoch_loss)) first_epoch_loss = stats.mean_loss;
        if (cfg.stop_loss_ratio > 0.0 && stats.mean_loss < cfg.stop_loss_ratio * first_epoch_loss)
            break;
    }
    return history;
}

// --- checkpoints ---

namespace {

void write_model_config(ByteWriter& w, const CSTNConfig& m) {
    w.i32(m.grid_rows);
    w.i32(m.grid_cols);
    w.i32(m.input_steps);
    w.i32(m.horizon);
    w.i32(m.local_depth);
    w.i32(m.local_channels);
    w.i32(m.fuse_channels);
    w.i32(m.lstm_channels);
    w.i32(m.seq_channels);
    w.i32(m.sim_channels);
    w.i32(m.meteo_inputs);
    w.i32(m.meteo_hidden1);
    w.i32(m.meteo_hidden2);
    w.i32(m.meteo_embed);
    w.u8(m.destination_view ? 1 : 0);
    w.u8(m.meteo_enabled ? 1 : 0);
    w.u8(m.temporal_enabled ? 1 : 0);
    w.u8(m.correlation_enabled ? 1 : 0);
}

void read_model_config(ByteReader& r, CSTNConfig& m) {
    m.grid_rows = r.i32();
    m.grid_cols = r.i32();
    m.input_steps = r.i32();
    m.horizon = r.i32();
    m.local_depth = r.i32();
    m.local_channels = r.i32();
    m.fuse_channels = r.i32();
    m.lstm_channels = r.i32();
    m.seq_channels = r.i32();
    m.sim_channels = r.i32();
    m.meteo_inputs = r.i32();
    m.meteo_hidden1 = r.i32();
    m.meteo_hidden2 = r.i32();
    m.meteo_embed = r.i32();
    m.destination_view = r.u8() != 0;
    m.meteo_enabled = r.u8() != 0;
    m.temporal_enabled = r.u8() != 0;
    m.correlation_enabled = r.u8() != 0;
}

void write_train_config(ByteWriter& w, const TrainConfig& t) {
    w.i32(t.batch_size);
    w.f64(t.base_lr);
    w.f64(t.lr_decay);
    w.i32(t.lr_decay_every);
    w.i32(t.epochs);
    w.f64(t.beta1);
    w.f64(t.beta2);
    w.f64(t.eps);
    w.u64(t.seed);
    w.u8(t.shuffle ? 1 : 0);
    w.i32(t.threads);
    w.f64(t.stop_loss_ratio);
}

void read_train_config(ByteReader& r, TrainConfig& t) {
    t.batch_size = r.i32();
    t.base_lr = r.f64();
    t.lr_decay = r.f64();
    t.lr_decay_every = r.i32();
    t.epochs = r.i32();
    t.beta1 = r.f64();
    t.beta2 = r.f64();
    t.eps = r.f64();
    t.seed = r.u64();
    t.shuffle = r.u8() != 0;
    t.threads = r.i32();
    t.stop_loss_ratio = r.f64();
}

void write_norm_stats(ByteWriter& w, const NormStats& s) {
    w.f64(s.od_min);
    w.f64(s.od_max);
    for (int k = 0; k < kIndicatorCount; ++k) {
        w.f64(s.ind_min[k]);
        w.f64(s.ind_max[k]);
        w.f64(s.ind_mean[k]);
    }
}

void read_norm_stats(ByteReader& r, NormStats& s) {
    s.od_min = r.f64();
    s.od_max = r.f64();
    for (int k = 0; k < kIndicatorCount; ++k) {
        s.ind_min[k] = r.f64();
        s.ind_max[k] = r.f64();
        s.ind_mean[k] = r.f64();
    }
}

std::string config_block_bytes(const Checkpoint& ckpt) {
    ByteWriter w;
    write_model_config(w, ckpt.model);
    write_train_config(w, ckpt.train);
    write_norm_stats(w, ckpt.stats);
    return w.bytes();
}

}  // namespace

std::uint64_t checkpoint_config_digest(const Checkpoint& ckpt) {
    const std::string block = config_block_bytes(ckpt);
    return fnv1a64(block.data(), block.size());
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    ByteWriter w;
    w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
    w.u32(kCheckpointVersion);
    const std::string block = config_block_bytes(ckpt);
    w.u64(fnv1a64(block.data(), block.size()));
    w.raw(block.data(), block.size());
    w.i32(ckpt.epochs_completed);
    for (std::uint64_t s : ckpt.rng_state) w.u64(s);
    w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const std::string& name : ckpt.params.names()) {
        const Tensor& value = ckpt.params.value(name);
        const AdamState& adam = ckpt.params.state(name);
        w.str(name);
        w.u32(static_cast<std::uint32_t>(value.rank()));
        for (int d : value.shape()) w.i32(d);
        for (std::size_t i = 0; i < value.numel(); ++i) w.f64(value[i]);
        for (std::size_t i = 0; i < adam.m.numel(); ++i) w.f64(adam.m[i]);
        for (std::size_t i = 0; i < adam.v.numel(); ++i) w.f64(adam.v[i]);
        w.i64(adam.step);
    }
    w.to_file(path);
}

Checkpoint load_checkpoint(const std::string& path) {
    ByteReader r = ByteReader::from_file(path, "checkpoint");
    char magic[8];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) r.fail("bad magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
    const std::uint64_t stored_digest = r.u64();

    Checkpoint ckpt;
    read_model_config(r, ckpt.model);
    read_train_config(r, ckpt.train);
    read_norm_stats(r, ckpt.stats);
    if (checkpoint_config_digest(ckpt) != stored_digest) r.fail("config digest mismatch");

    ckpt.epochs_completed = r.i32();
    for (std::uint64_t& s : ckpt.rng_state) s = r.u64();
    const std::uint32_t param_count = r.u32();
    if (param_count > 1u << 20) r.fail("parameter count out of range");
    for (std::uint32_t p = 0; p < param_count; ++p) {
        const std::string name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) r.fail("tensor rank out of range for '" + name + "'");
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = r.i32();
            if (shape[i] <= 0 || shape[i] > (1 << 22)) r.fail("tensor dim out of range for '" + name + "'");
            numel *= static_cast<std::size_t>(shape[i]);
        }
        if (numel > (1u << 28)) r.fail("tensor too large for '" + name + "'");
        Tensor value(shape);
        for (std::size_t i = 0; i < numel; ++i) value[i] = r.f64();
        Tensor& stored = ckpt.params.add(name, std::move(value));
        (void)stored;
        AdamState& adam = ckpt.params.state(name);
        for (std::size_t i = 0; i < numel; ++i) adam.m[i] = r.f64();
        for (std::size_t i = 0; i < numel; ++i) adam.v[i] = r.f64();
        adam.step = r.i64();
    }
    if (!r.at_end()) r.fail("unexpected trailing bytes");
    try {
        ckpt.model.validate();
        ckpt.train.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    return ckpt;
}

}  // namespace cstn
