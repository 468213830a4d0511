#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "framediff/common.hpp"
#include "framediff/dataio.hpp"
#include "framediff/framing.hpp"
#include "framediff/wav.hpp"

namespace framediff {

// Continuity diagnostics at each frame junction of an assembled waveform.
// jump_ratio compares the junction's first difference to the median first
// difference in a +-20 ms surrounding window; rms_ratio compares a narrow
// (+-2.5 ms) seam neighborhood's RMS to the window RMS. ref_ratio is the
// junction difference relative to a reference waveform's difference at the
// same position (1 when both match bit-exactly) and is present only when a
// reference is supplied.
struct SeamBoundary {
    std::size_t boundary_index = 0;
    std::int64_t sample = 0;
    double jump_abs = 0.0;
    double jump_ratio = 0.0;
    double rms_ratio = 0.0;
    std::optional<double> ref_ratio;
};

struct SeamReport {
    std::vector<SeamBoundary> boundaries;
    double median_jump_ratio = 0.0;
    double median_rms_ratio = 0.0;
    std::optional<double> median_ref_ratio;
};

SeamReport seam_report(Span waveform, const FramePlan& plan, int rate_hz, std::optional<Span> reference = {});
void write_seam_tsv(const SeamReport& report, const std::string& path);

// Peak transient allocation while synthesizing each requested duration.
// runner synthesizes `seconds` of audio into the sink and returns the
// sample count. Needs the allocation probe linked into the binary.
struct MemoryRow {
    double seconds = 0.0;
    std::int64_t samples = 0;
    std::uint64_t peak_bytes = 0;
};

struct MemoryProfile {
    std::vector<MemoryRow> rows;
    double flatness_ratio = 0.0;  // max peak / min peak
};

using SynthRunner = std::function<std::int64_t(double seconds, SampleSink& sink)>;

MemoryProfile memory_profile(const SynthRunner& runner, const std::vector<double>& lengths_s);
void write_memory_tsv(const MemoryProfile& profile, const std::string& path);

// Across-seed spread of per-span RMS energy for repeated syntheses of one
// utterance. synth maps a seed to a full waveform; spans come from the
// utterance spec driving the synthesis.
struct VarianceRow {
    std::size_t span_index = 0;
    std::string phoneme;
    double mean_rms = 0.0;
    double std_rms = 0.0;  // sample standard deviation over seeds
};

struct VarianceReport {
    std::vector<VarianceRow> rows;
    std::size_t num_seeds = 0;
};

using SeededSynth = std::function<std::vector<double>(std::uint64_t seed)>;

VarianceReport variance_report(const SeededSynth& synth, const Utterance& spec_utt,
                               const std::vector<std::uint64_t>& seeds);
void write_variance_tsv(const VarianceReport& report, const std::string& path);

// Span-wise pairing of two variance reports over the same utterance;
// fraction_tighter is the share of spans where the first report's std is
// strictly smaller.
struct VarianceComparison {
    std::size_t spans = 0;
    std::size_t tighter = 0;
    double fraction_tighter = 0.0;
};

VarianceComparison compare_variance(const VarianceReport& a, const VarianceReport& b);

}  // namespace framediff
