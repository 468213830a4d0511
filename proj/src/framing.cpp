#include "framediff/framing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace framediff {

FrameSpec FrameSpec::from_ms(double frame_ms, double overlap_ms, int rate_hz) {
    if (rate_hz <= 0) throw InputError("FrameSpec: sample rate must be positive");
    if (!(frame_ms > 0.0) || !(overlap_ms > 0.0)) throw InputError("FrameSpec: durations must be positive");
    FrameSpec s;
    s.frame_len_ms = frame_ms;
    s.overlap_ms = overlap_ms;
    s.sample_rate_hz = rate_hz;
    s.frame_len = static_cast<int>(std::llround(frame_ms * rate_hz / 1000.0));
    s.overlap_len = static_cast<int>(std::llround(overlap_ms * rate_hz / 1000.0));
    if (!(s.overlap_len > 0 && s.overlap_len < s.frame_len))
        throw InputError("FrameSpec: need 0 < overlap < frame length after rounding");
    return s;
}

FrameSpec FrameSpec::from_samples(int frame_len, int overlap_len, int rate_hz) {
    if (rate_hz <= 0) throw InputError("FrameSpec: sample rate must be positive");
    if (!(overlap_len > 0 && overlap_len < frame_len))
        throw InputError("FrameSpec: need 0 < overlap < frame length");
    FrameSpec s;
    s.frame_len = frame_len;
    s.overlap_len = overlap_len;
    s.sample_rate_hz = rate_hz;
    s.frame_len_ms = 1000.0 * frame_len / rate_hz;
    s.overlap_ms = 1000.0 * overlap_len / rate_hz;
    return s;
}

FramePlan FramePlan::fixed(std::size_t num_frames, const FrameSpec& spec) {
    FramePlan plan;
    plan.bounds.reserve(num_frames);
    for (std::size_t l = 0; l < num_frames; ++l) {
        std::int64_t start = static_cast<std::int64_t>(l) * spec.hop();
        plan.bounds.push_back({start, start + spec.frame_len});
    }
    return plan;
}

std::vector<Frame> segment(Span waveform, const FrameSpec& spec) {
    const std::size_t total = waveform.size();
    const std::size_t frame_len = static_cast<std::size_t>(spec.frame_len);
    if (total < frame_len) throw InputError("segment: waveform shorter than one frame");
    std::vector<Frame> frames;
    std::size_t start = 0;
    const std::size_t hop = static_cast<std::size_t>(spec.hop());
    for (;;) {
        Frame f;
        f.samples.assign(frame_len, 0.0);
        std::size_t avail = std::min(frame_len, total - start);
        std::copy_n(waveform.begin() + static_cast<std::ptrdiff_t>(start), avail, f.samples.begin());
        f.valid_len = static_cast<int>(avail);
        frames.push_back(std::move(f));
        if (start + frame_len >= total) break;
        start += hop;
    }
    return frames;
}

std::vector<double> overlap_shift(Span frame, const FrameSpec& spec) {
    if (frame.size() != static_cast<std::size_t>(spec.frame_len))
        throw InputError("overlap_shift: frame length does not match spec");
    return make_context(frame, spec.overlap_len, frame.size());
}

std::vector<double> make_context(Span prev_frame, int overlap_len, std::size_t out_len) {
    if (overlap_len < 0 || static_cast<std::size_t>(overlap_len) > prev_frame.size())
        throw InputError("make_context: overlap exceeds previous frame length");
    std::vector<double> out(out_len, 0.0);
    std::size_t n = std::min(static_cast<std::size_t>(overlap_len), out_len);
    const double* tail = prev_frame.data() + (prev_frame.size() - static_cast<std::size_t>(overlap_len));
    std::copy_n(tail, n, out.begin());
    return out;
}

std::vector<double> assemble(const std::vector<std::vector<double>>& frames, const FramePlan& plan) {
    if (frames.size() != plan.frame_count()) throw InputError("assemble: frame count does not match plan");
    if (frames.empty()) throw InputError("assemble: no frames");
    for (std::size_t l = 0; l < frames.size(); ++l) {
        if (static_cast<std::int64_t>(frames[l].size()) != plan.bounds[l].len())
            throw InputError("assemble: frame " + std::to_string(l) + " length does not match plan");
        if (l > 0) {
            std::int64_t overlap = plan.bounds[l - 1].end - plan.bounds[l].start;
            if (overlap < 0 || overlap > static_cast<std::int64_t>(frames[l].size()))
                throw InputError("assemble: plan overlap out of range at frame " + std::to_string(l));
        }
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(plan.bounds.back().end - plan.bounds.front().start));
    out.insert(out.end(), frames[0].begin(), frames[0].end());
    for (std::size_t l = 1; l < frames.size(); ++l) {
        std::int64_t overlap = plan.bounds[l - 1].end - plan.bounds[l].start;
        out.insert(out.end(), frames[l].begin() + overlap, frames[l].end());
    }
    return out;
}

std::vector<double> silence_frame(const FrameSpec& spec) {
    return std::vector<double>(static_cast<std::size_t>(spec.frame_len), 0.0);
}

}  // namespace framediff
