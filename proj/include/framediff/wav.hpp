#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "framediff/common.hpp"

namespace framediff {

struct WavData {
    std::vector<double> samples;  // scaled to [-1, 1]
    int sample_rate_hz = 0;
};

// Mono 16-bit PCM or 32-bit float WAV. If expected_rate_hz > 0, a file at any
// other rate is rejected; there is no silent resampling.
WavData read_wav(const std::string& path, int expected_rate_hz = 0);

// 16-bit PCM output, samples clamped to [-1, 1].
void write_wav(const std::string& path, Span samples, int sample_rate_hz);

// Destination for streamed synthesis output.
struct SampleSink {
    virtual ~SampleSink() = default;
    virtual void write(Span samples) = 0;
};

struct VectorSink final : SampleSink {
    std::vector<double> samples;
    void write(Span s) override { samples.insert(samples.end(), s.begin(), s.end()); }
};

// Counts samples without retaining them.
struct CountSink final : SampleSink {
    std::size_t count = 0;
    void write(Span s) override { count += s.size(); }
};

// Streams 16-bit PCM to disk, patching the header sizes on close so memory
// stays independent of output duration.
class WavFileSink final : public SampleSink {
  public:
    WavFileSink(const std::string& path, int sample_rate_hz);
    ~WavFileSink() override;
    void write(Span samples) override;
    void close();
    std::size_t samples_written() const { return count_; }

  private:
    std::FILE* f_ = nullptr;
    std::size_t count_ = 0;
    std::string path_;
};

}  // namespace framediff
