#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "framediff/dataio.hpp"
#include "framediff/denoiser.hpp"
#include "framediff/framing.hpp"
#include "framediff/nn.hpp"
#include "framediff/rng.hpp"
#include "framediff/schedule.hpp"

namespace framediff {

struct TrainConfig {
    long steps = 10000;
    int batch_size = 4;
    double lr = 2e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;
    long checkpoint_every = 1000;
    bool mask_padding = true;
    std::uint64_t seed = 1;
    // Early stop when the mean loss over the trailing window drops below
    // stop_below; 0 disables.
    double stop_below = 0.0;
    int stop_window = 50;
    std::string out_dir;

    void validate() const;
};

// One teacher-forced training example: a noised frame, the clean previous
// frame's overlap context, the condition track and the target noise.
struct TrainExample {
    std::vector<double> x_s;
    std::vector<double> context;
    std::vector<double> eps;
    ConditionTrack track;
    int step = 0;
    int valid_len = 0;
};

// Builds the example for one (utterance, frame, diffusion step) triple.
// Frame 0 gets an all-zero context; later frames the overlap tail of the
// clean previous frame. The frame's zero-padded tail is recorded so the
// loss can mask it.
TrainExample make_example(const Utterance& utt, const FrameSpec& spec, std::size_t frame_index, int step,
                          const NoiseSchedule& sched, const PhonemeInventory& inv, const TrackRequest& want,
                          Rng& rng);

// Mean masked squared error over the batch. loss_and_grad also runs the
// backward pass, accumulating into the model's parameter grads.
double loss_and_grad(Denoiser& model, const std::vector<TrainExample>& batch);
double loss_only(Denoiser& model, const std::vector<TrainExample>& batch);

// Adaptive-moment optimizer over a fixed set of parameter arrays. Moments
// are exposed by name so checkpoints can carry them.
class Adam {
public:
    Adam(std::vector<ParamRef> refs, double lr, double beta1, double beta2, double eps);

    void step();
    long t() const { return t_; }
    void set_t(long t) { t_ = t; }
    const std::vector<ParamRef>& refs() const { return refs_; }
    std::vector<double>& moment1(std::size_t i) { return m_[i]; }
    std::vector<double>& moment2(std::size_t i) { return v_[i]; }

private:
    std::vector<ParamRef> refs_;
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
    long steps_done = 0;
    double last_loss = 0.0;
    double smoothed_loss = 0.0;
    std::string final_checkpoint;
};

using TrainHook = std::function<void(long step, double loss)>;

// Full training loop: deterministic single-threaded data order, loss log
// `step<TAB>loss` in out_dir, periodic resumable checkpoints. resume_path
// restores parameters, optimizer moments, data cursor and RNG state so the
// continuation is bit-identical to an uninterrupted run.
TrainResult train_denoiser(const std::vector<Utterance>& corpus, const PhonemeInventory& inv, const FrameSpec& spec,
                           const ScheduleSpec& sspec, const DenoiserConfig& dcfg, const TrainConfig& tcfg,
                           const std::string& resume_path = "", const TrainHook& hook = nullptr);

}  // namespace framediff
