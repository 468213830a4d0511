#include "framediff/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace framediff {

namespace {

void check_finite(const std::vector<double>& x, int chain_step) {
    for (double v : x)
        if (!std::isfinite(v))
            throw NumericError("sample_frame: non-finite value at chain step " + std::to_string(chain_step));
}

}  // namespace

std::vector<double> sample_frame(const EpsFn& eps_fn, const NoiseSchedule& sched, std::size_t frame_len, Span context,
                                 const ConditionTrack* track, Rng& rng, const SampleOptions& opts,
                                 SampleTrace* trace) {
    if (frame_len == 0) throw InputError("sample_frame: empty frame");
    if (context.size() != frame_len) throw InputError("sample_frame: context length mismatch");
    const int S = sched.num_steps();

    std::vector<double> x(frame_len);
    for (auto& v : x) v = rng.gaussian();
    std::vector<double> eps_hat(frame_len);

    for (int s = S - 1; s >= 0; --s) {
        const bool final_step = s == 0;
        double c1 = 0.0, c2 = 0.0, sigma = 0.0;
        int eval_step = 0;
        bool skip_update = false;
        if (!opts.literal_update) {
            eval_step = s + 1;
            c1 = 1.0 / std::sqrt(sched.alpha(s + 1));
            c2 = sched.beta(s + 1) / std::sqrt(1.0 - sched.alpha_bar(s + 1));
            sigma = sched.sigma(s + 1);
        } else if (s == 0) {
            // printed form at s=0 degenerates to the identity: the leading
            // factor is 1/sqrt(alpha_bar(0)) = 1 and the noise coefficient
            // 1 - alpha(0) vanishes
            skip_update = true;
        } else {
            eval_step = s;
            c1 = 1.0 / std::sqrt(sched.alpha_bar(s));
            c2 = (1.0 - sched.alpha(s)) / std::sqrt(1.0 - sched.alpha_bar(s));
            sigma = sched.sigma(s);
        }

        if (!skip_update) {
            eps_fn(x, context, track, eval_step, eps_hat);
            for (std::size_t i = 0; i < frame_len; ++i) x[i] = c1 * (x[i] - c2 * eps_hat[i]);
        }
        const bool inject = !final_step && !opts.deterministic;
        if (inject) {
            for (auto& v : x) v += sigma * rng.gaussian();
        }
        check_finite(x, s);
        if (trace) {
            trace->steps.push_back(skip_update ? 0 : eval_step);
            trace->noise_scale.push_back(inject ? sigma : 0.0);
            trace->noise_injected.push_back(inject);
        }
    }

    if (opts.clamp_output)
        for (auto& v : x) v = std::clamp(v, -1.0, 1.0);
    return x;
}

EpsFn denoiser_eps(Denoiser& model) {
    return [&model](Span x, Span context, const ConditionTrack* track, int step, MutSpan out) {
        model.forward(x, context, track, step, out);
    };
}

SynthesisResult synthesize(const EpsFn& eps_fn, const NoiseSchedule& sched, const std::vector<SynthPiece>& pieces,
                           int overlap_len, Rng& rng, SampleSink& sink, const SampleOptions& opts) {
    if (pieces.empty()) throw InputError("synthesize: empty frame plan");
    if (overlap_len < 0) throw InputError("synthesize: negative overlap");

    SynthesisResult result;
    std::vector<double> prev;
    std::vector<double> context;
    for (std::size_t l = 0; l < pieces.size(); ++l) {
        const auto len = static_cast<std::size_t>(pieces[l].bound.len());
        if (len == 0) throw InputError("synthesize: zero-length frame in plan");
        if (l == 0) {
            context.assign(len, 0.0);  // silence starts the autoregression
        } else {
            context = make_context(prev, overlap_len, len);
        }
        const ConditionTrack* track = pieces[l].track ? &*pieces[l].track : nullptr;
        std::vector<double> frame = sample_frame(eps_fn, sched, len, context, track, rng, opts);
        const std::size_t skip = l == 0 ? 0 : static_cast<std::size_t>(overlap_len);
        sink.write(Span(frame).subspan(skip));
        result.total_samples += static_cast<std::int64_t>(frame.size() - skip);
        prev = std::move(frame);
    }
    result.frames = pieces.size();
    return result;
}

SynthesisResult generate_unconditional(const EpsFn& eps_fn, const NoiseSchedule& sched, int num_frames,
                                       const FrameSpec& spec, Rng& rng, SampleSink& sink, const SampleOptions& opts) {
    if (num_frames <= 0) throw InputError("generate_unconditional: need at least one frame");
    // Fixed geometry needs no materialized plan. Keeping only the previous
    // frame holds peak memory flat however many frames are requested.
    const auto len = static_cast<std::size_t>(spec.frame_len);
    SynthesisResult result;
    std::vector<double> prev;
    std::vector<double> context;
    for (int l = 0; l < num_frames; ++l) {
        if (l == 0)
            context.assign(len, 0.0);  // silence starts the autoregression
        else
            context = make_context(prev, spec.overlap_len, len);
        std::vector<double> frame = sample_frame(eps_fn, sched, len, context, nullptr, rng, opts);
        const std::size_t skip = l == 0 ? 0 : static_cast<std::size_t>(spec.overlap_len);
        sink.write(Span(frame).subspan(skip));
        result.total_samples += static_cast<std::int64_t>(frame.size() - skip);
        prev = std::move(frame);
        ++result.frames;
    }
    return result;
}

std::vector<SynthPiece> plan_synthesis(const Utterance& utt, const FrameSpec& spec, const PhonemeInventory& inv,
                                       const TrackRequest& want) {
    const std::int64_t total = utt.total_samples();
    FramePlan plan = plan_frames(utt.spans, spec, total, utt.rate_hz);
    std::vector<SynthPiece> pieces(plan.bounds.size());
    const bool any = want.phonemes || want.energy || want.pitch;
    for (std::size_t i = 0; i < plan.bounds.size(); ++i) {
        pieces[i].bound = plan.bounds[i];
        if (any) pieces[i].track = build_track(utt, plan.bounds[i].start, plan.bounds[i].end, inv, want);
    }
    return pieces;
}

}  // namespace framediff
