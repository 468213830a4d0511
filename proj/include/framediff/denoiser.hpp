#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "framediff/dataio.hpp"
#include "framediff/nn.hpp"
#include "framediff/rng.hpp"

namespace framediff {

// Sinusoidal encoding of a diffusion step index: dim/2 sines then dim/2
// cosines with geometrically spaced frequencies. s=0 gives sines 0, cosines 1.
std::vector<double> step_embedding(int step, int dim);

struct DenoiserConfig {
    int num_layers = 36;
    int channels = 256;
    std::vector<int> dilation_cycle = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048};
    std::vector<int> cond_kernels = {3, 5, 7};
    int step_embed_dim = 128;
    int inventory_size = 73;
    bool use_context = true;
    bool use_phonemes = false;
    bool use_energy = false;
    bool use_pitch = false;

    void validate() const;
    int dilation_at(int layer) const;
    // Half-width of the residual stack's receptive field in samples
    // (kernel-3 dilated convs, so each layer contributes its dilation).
    std::int64_t receptive_half_width() const;
    bool conditional() const { return use_phonemes || use_energy || use_pitch; }
};

// Parallel dilated convolutions with different kernel sizes, summed.
// Injects one conditioning signal into the residual stream.
class MultiScaleConv {
public:
    MultiScaleConv() = default;
    MultiScaleConv(int in_ch, int out_ch, const std::vector<int>& kernels, int dilation);

    void init(Rng& rng);
    void forward(const Plane& x, Plane& y) const;             // y overwritten
    void forward_accumulate(const Plane& x, Plane& y) const;  // y += sum of branches
    void backward(const Plane& x, const Plane& dy, Plane* dx);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);

    std::vector<Conv1d> branches;
};

// The learned noise estimator: maps a noisy frame, the previous-frame
// context, optional condition tracks, and a step index to a same-length
// noise estimate. Non-causal dilated-conv residual stack with gated
// activations; every conditioning signal enters through its own
// MultiScaleConv per layer; skip outputs are summed into a two-layer head.
class Denoiser {
public:
    Denoiser() = default;
    explicit Denoiser(DenoiserConfig cfg);

    // Random init; the last head layer is zeroed so the initial output is 0.
    void init(Rng& rng);

    const DenoiserConfig& config() const { return cfg_; }
    void collect(std::vector<ParamRef>& out);
    void zero_grad();
    std::size_t param_count();

    // Inference path: no gradient state retained. Workspace buffers are
    // reused across calls, so repeated frames allocate nothing new.
    void forward(Span x_s, Span context, const ConditionTrack* track, int step, MutSpan eps_out);

    // Training path: retains per-layer activations for backward().
    void forward_train(Span x_s, Span context, const ConditionTrack* track, int step, MutSpan eps_out);

    // d_eps is dLoss/dOutput. Accumulates into every parameter's grad.
    void backward(Span d_eps);

private:
    struct Layer {
        Conv1d dilated;  // C -> 2C, kernel 3, layer dilation
        Dense step_proj;  // step_embed_dim -> C per-channel bias
        std::optional<MultiScaleConv> ctx_mrb;
        std::optional<MultiScaleConv> phon_mrb;
        std::optional<MultiScaleConv> energy_mrb;
        std::optional<MultiScaleConv> pitch_mrb;
        Conv1d out;  // C -> 2C (residual half, skip half), kernel 1
    };
    struct LayerCache {
        Plane u;   // dilated-conv input (h + step bias)
        Plane ta;  // tanh half of the gate
        Plane sb;  // sigmoid half of the gate
        Plane m;   // head-conv input (gate + condition sums)
    };

    void run(Span x_s, Span context, const ConditionTrack* track, int step, MutSpan eps_out, bool train);
    void check_track(std::size_t frame_len, const ConditionTrack* track) const;

    DenoiserConfig cfg_;
    Conv1d in_conv_;  // 1 -> C, kernel 1
    Dense step_fc1_, step_fc2_;
    std::optional<Embedding> embed_;  // inventory_size x C
    std::vector<Layer> layers_;
    Conv1d final1_;  // C -> C, kernel 1
    Conv1d final2_;  // C -> 1, kernel 1, zero-initialized

    // forward workspace
    Plane x_plane_, ctx_plane_, energy_plane_, pitch_plane_, embed_plane_;
    Plane h_, a0_, v_, w_, ssum_, a1_, r1_, out_;
    std::vector<double> e0_, p1_, e1_, p2_, e2_, bias_;
    LayerCache scratch_;

    // training cache
    std::vector<LayerCache> cache_;
    std::vector<int> ids_cache_;
    bool have_cache_ = false;

    // backward workspace
    Plane d_out_, d_r1_, d_ssum_, d_skip_, dw_, dm_, dv_, du_, dh_, d_embed_plane_;
    std::vector<double> dbias_, d_e2_, d_e1_, d_p_;
};

}  // namespace framediff
