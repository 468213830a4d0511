#pragma once

#include <cstdint>
#include <vector>

#include "framediff/common.hpp"

namespace framediff {

// Frame geometry. Configured in milliseconds and converted to sample counts
// at the corpus rate; frame_len/overlap_len are the derived counts.
struct FrameSpec {
    double frame_len_ms = 0.0;
    double overlap_ms = 0.0;
    int sample_rate_hz = 0;
    int frame_len = 0;
    int overlap_len = 0;

    int hop() const { return frame_len - overlap_len; }

    static FrameSpec from_ms(double frame_ms, double overlap_ms, int rate_hz);
    static FrameSpec from_samples(int frame_len, int overlap_len, int rate_hz);
};

// One utterance's frame boundaries, [start, end) in samples. Lengths may
// deviate from the nominal frame length; consecutive frames always share
// exactly overlap_len samples.
struct FramePlan {
    struct Bound {
        std::int64_t start = 0;
        std::int64_t end = 0;
        std::int64_t len() const { return end - start; }
    };
    std::vector<Bound> bounds;

    std::size_t frame_count() const { return bounds.size(); }
    static FramePlan fixed(std::size_t num_frames, const FrameSpec& spec);
};

// A training frame; the tail past valid_len is zero padding.
struct Frame {
    std::vector<double> samples;
    int valid_len = 0;
};

// Fixed-length segmentation with hop frame_len - overlap_len. The final
// partial frame is zero-padded and its valid length recorded.
std::vector<Frame> segment(Span waveform, const FrameSpec& spec);

// Moves the last overlap_len samples of a frame into its leading positions
// and zeros the rest. Equivalent to multiplying by the block matrix
// [[0, I],[0, 0]] but implemented as copy + zero-fill.
std::vector<double> overlap_shift(Span frame, const FrameSpec& spec);

// Variable-length generalization used by the sampler: out[i] = prev tail
// sample for i < overlap_len, 0 otherwise.
std::vector<double> make_context(Span prev_frame, int overlap_len, std::size_t out_len);

// Concatenates generated frames: frame 0 verbatim, then everything after the
// first overlap_len samples of each subsequent frame.
std::vector<double> assemble(const std::vector<std::vector<double>>& frames, const FramePlan& plan);

std::vector<double> silence_frame(const FrameSpec& spec);

}  // namespace framediff
