#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "framediff/dataio.hpp"
#include "framediff/denoiser.hpp"
#include "framediff/framing.hpp"
#include "framediff/rng.hpp"
#include "framediff/schedule.hpp"
#include "framediff/wav.hpp"

namespace framediff {

// Noise estimator abstraction so the reverse chain can be exercised with
// closed-form stand-ins in tests. Arguments: noisy frame, context, track
// (may be null), step; writes the estimate into the last span.
using EpsFn = std::function<void(Span, Span, const ConditionTrack*, int, MutSpan)>;

struct SampleOptions {
    // The reference derivation's printed update uses cumulative-product
    // coefficients throughout; kept behind this flag for comparison runs.
    // The default is the standard ancestral update.
    bool literal_update = false;
    bool clamp_output = true;
    // Suppresses every noise injection (z = 0 at all steps), leaving the
    // deterministic part of the chain; used by oracle tests.
    bool deterministic = false;
};

struct SampleTrace {
    std::vector<int> steps;            // chain step index s+1 applied at each update
    std::vector<double> noise_scale;   // sigma actually multiplied into z
    std::vector<bool> noise_injected;  // false exactly at the final update
};

// Reverse diffusion for one frame: x_S ~ N(0, I), then the ancestral update
// down to x_0 with z = 0 at the final step. Output clamped to [-1, 1].
std::vector<double> sample_frame(const EpsFn& eps_fn, const NoiseSchedule& sched, std::size_t frame_len, Span context,
                                 const ConditionTrack* track, Rng& rng, const SampleOptions& opts = {},
                                 SampleTrace* trace = nullptr);

// Convenience wrapper binding a denoiser's inference path.
EpsFn denoiser_eps(Denoiser& model);

// Per-frame conditioning for synthesize: the track covering [start, end)
// of the planned utterance, or nullopt for unconditional models.
struct SynthPiece {
    FramePlan::Bound bound;
    std::optional<ConditionTrack> track;
};

struct SynthesisResult {
    std::int64_t total_samples = 0;
    std::size_t frames = 0;
};

// Autoregressive utterance loop. Frame 0 is conditioned on silence; frame l
// on the overlap tail of generated frame l-1. Output streams into the sink,
// so peak live memory depends on the longest frame, never on the total
// duration.
SynthesisResult synthesize(const EpsFn& eps_fn, const NoiseSchedule& sched, const std::vector<SynthPiece>& pieces,
                           int overlap_len, Rng& rng, SampleSink& sink, const SampleOptions& opts = {});

// Unconditional generation of num_frames fixed-size frames.
SynthesisResult generate_unconditional(const EpsFn& eps_fn, const NoiseSchedule& sched, int num_frames,
                                       const FrameSpec& spec, Rng& rng, SampleSink& sink,
                                       const SampleOptions& opts = {});

// Builds the per-frame condition pieces for a planned utterance.
std::vector<SynthPiece> plan_synthesis(const Utterance& utt, const FrameSpec& spec, const PhonemeInventory& inv,
                                       const TrackRequest& want);

}  // namespace framediff
