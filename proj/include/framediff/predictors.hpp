#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framediff/dataio.hpp"
#include "framediff/nn.hpp"
#include "framediff/rng.hpp"

namespace framediff {

struct PredictorConfig {
    int inventory_size = 73;
    int embed_dim = 128;
    int hidden = 256;
    int duration_kernel = 5;
    std::vector<int> energy_kernels = {7, 5};
    double dropout = 0.5;

    void validate() const;
};

// Normalizes across channels independently at every position, with a
// learnable per-channel gain and bias. Position-local by construction, so
// one position's output never depends on the rest of the sequence. Caches
// the normalized activations for backward.
class ChannelNorm {
public:
    ChannelNorm() = default;
    explicit ChannelNorm(int channels);

    void init();
    void forward(const Plane& x, Plane& y, bool train);
    void backward(const Plane& dy, Plane& dx);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);

    Param gamma, beta;

private:
    int ch_ = 0;
    Plane xhat_;
    std::vector<double> inv_sigma_;
};

// Inverted dropout: active only on the training path, identity at inference.
class Dropout {
public:
    Dropout() = default;
    explicit Dropout(double p);

    void forward(const Plane& x, Plane& y, bool train, Rng* rng);
    void backward(const Plane& dy, Plane& dx);

private:
    double p_ = 0.0;
    Plane mask_;
};

// Phoneme -> typical duration. Embedding, one masked-width conv stage,
// rectifier, normalization, dropout, then a linear head. The head regresses
// log-seconds; predict() exponentiates, which keeps durations positive.
class DurationPredictor {
public:
    DurationPredictor() = default;
    explicit DurationPredictor(PredictorConfig cfg);

    void init(Rng& rng);
    void collect(std::vector<ParamRef>& out);
    void zero_grad();
    const PredictorConfig& config() const { return cfg_; }

    // Writes one log-duration per input id. The training path caches
    // activations and draws dropout masks from rng.
    void forward(const std::vector<int>& ids, std::vector<double>& log_dur, bool train, Rng* rng);
    void backward(const std::vector<int>& ids, Span d_out);
    std::vector<double> predict(const std::vector<int>& ids);  // seconds

private:
    PredictorConfig cfg_;
    Embedding embed_;
    Conv1d conv_;
    ChannelNorm norm_;
    Dropout drop_;
    Conv1d head_;
    Plane e_, a_, r_, n_, d_, o_;
    Plane da_, dn_, dd_, de_, do_;
};

// Phoneme -> RMS energy. Embedding, two identical conv blocks
// (wide conv, narrower conv, rectifier, normalization, dropout), linear
// head. Raw output; predictions are clamped to [0, 1].
class EnergyPredictor {
public:
    EnergyPredictor() = default;
    explicit EnergyPredictor(PredictorConfig cfg);

    void init(Rng& rng);
    void collect(std::vector<ParamRef>& out);
    void zero_grad();
    const PredictorConfig& config() const { return cfg_; }

    void forward(const std::vector<int>& ids, std::vector<double>& energy, bool train, Rng* rng);
    void backward(const std::vector<int>& ids, Span d_out);
    std::vector<double> predict(const std::vector<int>& ids);  // clamped to [0, 1]

private:
    struct Block {
        Conv1d conv_a, conv_b;
        ChannelNorm norm;
        Dropout drop;
        Plane ca, cb, r, n, d;       // forward caches
        Plane d_ca, d_cb, d_n, d_d;  // backward scratch
    };
    PredictorConfig cfg_;
    Embedding embed_;
    std::vector<Block> blocks_;
    Conv1d head_;
    Plane e_, o_, de_, do_;
};

struct PredictorTrainConfig {
    long steps = 2000;
    int batch_size = 8;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;
    std::uint64_t seed = 1;
    long val_every = 200;
    std::string out_dir;

    void validate() const;
};

// One utterance's phoneme sequence and regression targets (log-seconds for
// duration, raw RMS for energy).
struct PredictorExample {
    std::vector<int> ids;
    std::vector<double> targets;
};

std::vector<PredictorExample> make_duration_examples(const std::vector<Utterance>& corpus,
                                                     const PhonemeInventory& inv);
std::vector<PredictorExample> make_energy_examples(const std::vector<Utterance>& corpus, const PhonemeInventory& inv);

struct PredictorTrainResult {
    long steps_done = 0;
    double last_loss = 0.0;
    double val_mse = 0.0;
    std::string checkpoint;
};

// which: "duration" or "energy". Logs `step<TAB>train_loss<TAB>val_mse` and
// writes the final checkpoint into out_dir.
PredictorTrainResult train_predictor(const std::vector<PredictorExample>& train_set,
                                     const std::vector<PredictorExample>& val_set, const std::string& which,
                                     const PredictorConfig& cfg, const PredictorTrainConfig& tcfg);

}  // namespace framediff
