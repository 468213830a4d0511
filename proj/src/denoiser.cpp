#include "framediff/denoiser.hpp"

#include <algorithm>
#include <cmath>

namespace framediff {

namespace {

// Pitch arrives in Hz; feed it to the network in kHz so the track is the
// same order of magnitude as the audio and energy inputs.
constexpr double kPitchScale = 1e-3;

}  // namespace

std::vector<double> step_embedding(int step, int dim) {
    if (step < 0) throw InputError("step_embedding: negative step");
    if (dim <= 0 || dim % 2 != 0) throw InputError("step_embedding: dim must be positive and even");
    const int half = dim / 2;
    std::vector<double> v(static_cast<std::size_t>(dim));
    const double denom = half > 1 ? static_cast<double>(half - 1) : 1.0;
    for (int j = 0; j < half; ++j) {
        double omega = std::exp(-std::log(10000.0) * static_cast<double>(j) / denom);
        v[static_cast<std::size_t>(j)] = std::sin(step * omega);
        v[static_cast<std::size_t>(half + j)] = std::cos(step * omega);
    }
    return v;
}

void DenoiserConfig::validate() const {
    if (num_layers <= 0 || channels <= 0) throw InputError("DenoiserConfig: non-positive layer/channel count");
    if (dilation_cycle.empty()) throw InputError("DenoiserConfig: empty dilation cycle");
    for (int d : dilation_cycle)
        if (d <= 0) throw InputError("DenoiserConfig: dilations must be positive");
    if (cond_kernels.empty()) throw InputError("DenoiserConfig: empty condition kernel list");
    for (int k : cond_kernels)
        if (k <= 0 || k % 2 == 0) throw InputError("DenoiserConfig: condition kernels must be odd");
    if (step_embed_dim <= 0 || step_embed_dim % 2 != 0) throw InputError("DenoiserConfig: step_embed_dim must be even");
    if (inventory_size <= 0) throw InputError("DenoiserConfig: bad inventory size");
}

int DenoiserConfig::dilation_at(int layer) const {
    return dilation_cycle[static_cast<std::size_t>(layer) % dilation_cycle.size()];
}

std::int64_t DenoiserConfig::receptive_half_width() const {
    std::int64_t acc = 0;
    for (int l = 0; l < num_layers; ++l) acc += dilation_at(l);  // kernel 3: (k-1)/2 = 1 per dilation step
    return acc;
}

MultiScaleConv::MultiScaleConv(int in_ch, int out_ch, const std::vector<int>& kernels, int dilation) {
    if (kernels.empty()) throw InputError("MultiScaleConv: no kernels");
    branches.reserve(kernels.size());
    for (int k : kernels) branches.emplace_back(in_ch, out_ch, k, dilation);
}

void MultiScaleConv::init(Rng& rng) {
    for (auto& c : branches) c.init(rng);
}

void MultiScaleConv::forward(const Plane& x, Plane& y) const {
    for (std::size_t i = 0; i < branches.size(); ++i) branches[i].forward(x, y, i > 0);
}

void MultiScaleConv::forward_accumulate(const Plane& x, Plane& y) const {
    for (const auto& c : branches) c.forward(x, y, true);
}

void MultiScaleConv::backward(const Plane& x, const Plane& dy, Plane* dx) {
    for (auto& c : branches) c.backward(x, dy, dx);
}

void MultiScaleConv::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    for (auto& c : branches) c.collect(prefix + ".k" + std::to_string(c.kernel()), out);
}

Denoiser::Denoiser(DenoiserConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int C = cfg_.channels;
    in_conv_ = Conv1d(1, C, 1);
    step_fc1_ = Dense(cfg_.step_embed_dim, cfg_.step_embed_dim);
    step_fc2_ = Dense(cfg_.step_embed_dim, cfg_.step_embed_dim);
    if (cfg_.use_phonemes) embed_.emplace(cfg_.inventory_size, C);
    layers_.resize(static_cast<std::size_t>(cfg_.num_layers));
    for (int l = 0; l < cfg_.num_layers; ++l) {
        auto& layer = layers_[static_cast<std::size_t>(l)];
        const int d = cfg_.dilation_at(l);
        layer.dilated = Conv1d(C, 2 * C, 3, d);
        layer.step_proj = Dense(cfg_.step_embed_dim, C);
        if (cfg_.use_context) layer.ctx_mrb.emplace(1, C, cfg_.cond_kernels, d);
        if (cfg_.use_phonemes) layer.phon_mrb.emplace(C, C, cfg_.cond_kernels, d);
        if (cfg_.use_energy) layer.energy_mrb.emplace(1, C, cfg_.cond_kernels, d);
        if (cfg_.use_pitch) layer.pitch_mrb.emplace(1, C, cfg_.cond_kernels, d);
        layer.out = Conv1d(C, 2 * C, 1);
    }
    final1_ = Conv1d(C, C, 1);
    final2_ = Conv1d(C, 1, 1);
    cache_.resize(layers_.size());
}

void Denoiser::init(Rng& rng) {
    in_conv_.init(rng);
    step_fc1_.init(rng);
    step_fc2_.init(rng);
    if (embed_) embed_->init(rng);
    for (auto& layer : layers_) {
        layer.dilated.init(rng);
        layer.step_proj.init(rng);
        if (layer.ctx_mrb) layer.ctx_mrb->init(rng);
        if (layer.phon_mrb) layer.phon_mrb->init(rng);
        if (layer.energy_mrb) layer.energy_mrb->init(rng);
        if (layer.pitch_mrb) layer.pitch_mrb->init(rng);
        layer.out.init(rng);
    }
    final1_.init(rng);
    // zeroed last layer: the untrained model predicts zero noise exactly
    final2_ = Conv1d(cfg_.channels, 1, 1);
}

void Denoiser::collect(std::vector<ParamRef>& out) {
    in_conv_.collect("in", out);
    step_fc1_.collect("step.fc1", out);
    step_fc2_.collect("step.fc2", out);
    if (embed_) embed_->collect("embed", out);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto& layer = layers_[l];
        const std::string p = "layer" + std::to_string(l);
        layer.dilated.collect(p + ".dilated", out);
        layer.step_proj.collect(p + ".step", out);
        if (layer.ctx_mrb) layer.ctx_mrb->collect(p + ".ctx", out);
        if (layer.phon_mrb) layer.phon_mrb->collect(p + ".phon", out);
        if (layer.energy_mrb) layer.energy_mrb->collect(p + ".energy", out);
        if (layer.pitch_mrb) layer.pitch_mrb->collect(p + ".pitch", out);
        layer.out.collect(p + ".out", out);
    }
    final1_.collect("final1", out);
    final2_.collect("final2", out);
}

void Denoiser::zero_grad() {
    std::vector<ParamRef> refs;
    collect(refs);
    for (auto& r : refs) r.p->zero_grad();
}

std::size_t Denoiser::param_count() {
    std::vector<ParamRef> refs;
    collect(refs);
    std::size_t n = 0;
    for (auto& r : refs) n += r.p->size();
    return n;
}

void Denoiser::check_track(std::size_t frame_len, const ConditionTrack* track) const {
    if (!cfg_.conditional()) {
        if (track && track->any())
            throw InputError("Denoiser: condition track supplied to an unconditional model");
        return;
    }
    if (!track || !track->any()) throw InputError("Denoiser: conditional model requires a condition track");
    if (track->has_phonemes() != cfg_.use_phonemes || track->has_energy() != cfg_.use_energy ||
        track->has_pitch() != cfg_.use_pitch)
        throw InputError("Denoiser: track channels do not match the model's condition channels");
    if (cfg_.use_phonemes && track->phoneme_ids.size() != frame_len)
        throw InputError("Denoiser: phoneme track length mismatch");
    if (cfg_.use_energy && track->energy.size() != frame_len)
        throw InputError("Denoiser: energy track length mismatch");
    if (cfg_.use_pitch && track->pitch.size() != frame_len)
        throw InputError("Denoiser: pitch track length mismatch");
}

void Denoiser::forward(Span x_s, Span context, const ConditionTrack* track, int step, MutSpan eps_out) {
    run(x_s, context, track, step, eps_out, false);
}

void Denoiser::forward_train(Span x_s, Span context, const ConditionTrack* track, int step, MutSpan eps_out) {
    run(x_s, context, track, step, eps_out, true);
}

void Denoiser::run(Span x_s, Span context, const ConditionTrack* track, int step, MutSpan eps_out, bool train) {
    const std::size_t L = x_s.size();
    if (L == 0) throw InputError("Denoiser: empty frame");
    if (context.size() != L) throw InputError("Denoiser: context length mismatch");
    if (eps_out.size() != L) throw InputError("Denoiser: output length mismatch");
    if (step < 0) throw InputError("Denoiser: negative step");
    check_track(L, track);

    const int C = cfg_.channels;
    const int D = cfg_.step_embed_dim;
    const std::size_t N = layers_.size();

    x_plane_.resize(1, L);
    std::copy(x_s.begin(), x_s.end(), x_plane_.row(0));
    if (cfg_.use_context) {
        ctx_plane_.resize(1, L);
        std::copy(context.begin(), context.end(), ctx_plane_.row(0));
    }
    if (cfg_.use_phonemes) {
        embed_plane_.resize(C, L);
        embed_->forward(track->phoneme_ids, embed_plane_);
        if (train) ids_cache_ = track->phoneme_ids;
    }
    if (cfg_.use_energy) {
        energy_plane_.resize(1, L);
        std::copy(track->energy.begin(), track->energy.end(), energy_plane_.row(0));
    }
    if (cfg_.use_pitch) {
        pitch_plane_.resize(1, L);
        double* p = pitch_plane_.row(0);
        for (std::size_t t = 0; t < L; ++t) p[t] = track->pitch[t] * kPitchScale;
    }

    e0_ = step_embedding(step, D);
    p1_.assign(static_cast<std::size_t>(D), 0.0);
    step_fc1_.forward(e0_, p1_);
    e1_.resize(static_cast<std::size_t>(D));
    for (int i = 0; i < D; ++i) e1_[static_cast<std::size_t>(i)] = silu(p1_[static_cast<std::size_t>(i)]);
    p2_.assign(static_cast<std::size_t>(D), 0.0);
    step_fc2_.forward(e1_, p2_);
    e2_.resize(static_cast<std::size_t>(D));
    for (int i = 0; i < D; ++i) e2_[static_cast<std::size_t>(i)] = silu(p2_[static_cast<std::size_t>(i)]);

    a0_.resize(C, L);
    in_conv_.forward(x_plane_, a0_);
    h_.resize(C, L);
    for (int c = 0; c < C; ++c) {
        const double* src = a0_.row(c);
        double* dst = h_.row(c);
        for (std::size_t t = 0; t < L; ++t) dst[t] = src[t] > 0.0 ? src[t] : 0.0;
    }

    ssum_.resize(C, L);
    ssum_.zero();
    v_.resize(2 * C, L);
    w_.resize(2 * C, L);
    bias_.assign(static_cast<std::size_t>(C), 0.0);

    for (std::size_t l = 0; l < N; ++l) {
        auto& layer = layers_[l];
        LayerCache& cc = train ? cache_[l] : scratch_;
        cc.u.resize(C, L);
        cc.ta.resize(C, L);
        cc.sb.resize(C, L);
        cc.m.resize(C, L);

        layer.step_proj.forward(e2_, bias_);
        for (int c = 0; c < C; ++c) {
            const double bc = bias_[static_cast<std::size_t>(c)];
            const double* hr = h_.row(c);
            double* ur = cc.u.row(c);
            for (std::size_t t = 0; t < L; ++t) ur[t] = hr[t] + bc;
        }

        layer.dilated.forward(cc.u, v_);
        for (int c = 0; c < C; ++c) {
            const double* va = v_.row(c);
            const double* vb = v_.row(C + c);
            double* ta = cc.ta.row(c);
            double* sb = cc.sb.row(c);
            double* m = cc.m.row(c);
            for (std::size_t t = 0; t < L; ++t) {
                ta[t] = std::tanh(va[t]);
                sb[t] = sigmoid(vb[t]);
                m[t] = ta[t] * sb[t];
            }
        }

        if (layer.ctx_mrb) layer.ctx_mrb->forward_accumulate(ctx_plane_, cc.m);
        if (layer.phon_mrb) layer.phon_mrb->forward_accumulate(embed_plane_, cc.m);
        if (layer.energy_mrb) layer.energy_mrb->forward_accumulate(energy_plane_, cc.m);
        if (layer.pitch_mrb) layer.pitch_mrb->forward_accumulate(pitch_plane_, cc.m);

        layer.out.forward(cc.m, w_);
        for (int c = 0; c < C; ++c) {
            const double* res = w_.row(c);
            const double* skip = w_.row(C + c);
            double* hr = h_.row(c);
            double* sr = ssum_.row(c);
            for (std::size_t t = 0; t < L; ++t) {
                hr[t] += res[t];
                sr[t] += skip[t];
            }
        }
    }

    const double skip_scale = 1.0 / std::sqrt(static_cast<double>(N));
    for (double& x : ssum_.data()) x *= skip_scale;

    a1_.resize(C, L);
    final1_.forward(ssum_, a1_);
    r1_.resize(C, L);
    for (int c = 0; c < C; ++c) {
        const double* src = a1_.row(c);
        double* dst = r1_.row(c);
        for (std::size_t t = 0; t < L; ++t) dst[t] = src[t] > 0.0 ? src[t] : 0.0;
    }
    out_.resize(1, L);
    final2_.forward(r1_, out_);
    std::copy(out_.row(0), out_.row(0) + L, eps_out.begin());

    have_cache_ = train;
}

void Denoiser::backward(Span d_eps) {
    if (!have_cache_) throw InputError("Denoiser: backward without a cached forward_train pass");
    const std::size_t L = x_plane_.length();
    if (d_eps.size() != L) throw InputError("Denoiser: d_eps length mismatch");
    const int C = cfg_.channels;
    const int D = cfg_.step_embed_dim;
    const std::size_t N = layers_.size();
    const double skip_scale = 1.0 / std::sqrt(static_cast<double>(N));

    d_out_.resize(1, L);
    std::copy(d_eps.begin(), d_eps.end(), d_out_.row(0));

    d_r1_.resize(C, L);
    d_r1_.zero();
    final2_.backward(r1_, d_out_, &d_r1_);
    relu_backward(a1_.data(), d_r1_.data());

    d_ssum_.resize(C, L);
    d_ssum_.zero();
    final1_.backward(ssum_, d_r1_, &d_ssum_);

    d_skip_.resize(C, L);
    {
        const double* src = d_ssum_.data().data();
        double* dst = d_skip_.data().data();
        for (std::size_t i = 0; i < d_skip_.data().size(); ++i) dst[i] = src[i] * skip_scale;
    }

    dh_.resize(C, L);
    dh_.zero();  // the residual trunk's final state feeds nothing downstream
    dw_.resize(2 * C, L);
    dm_.resize(C, L);
    dv_.resize(2 * C, L);
    du_.resize(C, L);
    dbias_.resize(static_cast<std::size_t>(C));
    d_e2_.assign(static_cast<std::size_t>(D), 0.0);
    if (cfg_.use_phonemes) {
        d_embed_plane_.resize(C, L);
        d_embed_plane_.zero();
    }

    for (std::size_t li = N; li-- > 0;) {
        auto& layer = layers_[li];
        LayerCache& cc = cache_[li];

        for (int c = 0; c < C; ++c) {
            std::copy(dh_.row(c), dh_.row(c) + L, dw_.row(c));
            std::copy(d_skip_.row(c), d_skip_.row(c) + L, dw_.row(C + c));
        }
        dm_.zero();
        layer.out.backward(cc.m, dw_, &dm_);

        if (layer.ctx_mrb) layer.ctx_mrb->backward(ctx_plane_, dm_, nullptr);
        if (layer.phon_mrb) layer.phon_mrb->backward(embed_plane_, dm_, &d_embed_plane_);
        if (layer.energy_mrb) layer.energy_mrb->backward(energy_plane_, dm_, nullptr);
        if (layer.pitch_mrb) layer.pitch_mrb->backward(pitch_plane_, dm_, nullptr);

        for (int c = 0; c < C; ++c) {
            const double* dg = dm_.row(c);
            const double* ta = cc.ta.row(c);
            const double* sb = cc.sb.row(c);
            double* dva = dv_.row(c);
            double* dvb = dv_.row(C + c);
            for (std::size_t t = 0; t < L; ++t) {
                dva[t] = dg[t] * sb[t] * (1.0 - ta[t] * ta[t]);
                dvb[t] = dg[t] * ta[t] * sb[t] * (1.0 - sb[t]);
            }
        }

        du_.zero();
        layer.dilated.backward(cc.u, dv_, &du_);

        for (int c = 0; c < C; ++c) {
            const double* dur = du_.row(c);
            double acc = 0.0;
            for (std::size_t t = 0; t < L; ++t) acc += dur[t];
            dbias_[static_cast<std::size_t>(c)] = acc;
        }
        layer.step_proj.backward(e2_, dbias_, d_e2_);

        for (int c = 0; c < C; ++c) {
            const double* dur = du_.row(c);
            double* dhr = dh_.row(c);
            for (std::size_t t = 0; t < L; ++t) dhr[t] += dur[t];
        }
    }

    relu_backward(a0_.data(), dh_.data());
    in_conv_.backward(x_plane_, dh_, nullptr);

    d_p_.resize(static_cast<std::size_t>(D));
    for (int i = 0; i < D; ++i) d_p_[static_cast<std::size_t>(i)] = d_e2_[static_cast<std::size_t>(i)] * silu_grad(p2_[static_cast<std::size_t>(i)]);
    d_e1_.assign(static_cast<std::size_t>(D), 0.0);
    step_fc2_.backward(e1_, d_p_, d_e1_);
    for (int i = 0; i < D; ++i) d_p_[static_cast<std::size_t>(i)] = d_e1_[static_cast<std::size_t>(i)] * silu_grad(p1_[static_cast<std::size_t>(i)]);
    step_fc1_.backward(e0_, d_p_, {});

    if (cfg_.use_phonemes) embed_->backward(ids_cache_, d_embed_plane_);

    have_cache_ = false;
}

}  // namespace framediff
