#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "framediff/common.hpp"
#include "framediff/framing.hpp"

namespace framediff {

// Phoneme label set. Index 0 is reserved for padding/silence ("sil"); the
// remaining symbols occupy 1..size()-1, so the embedding table needs
// size()+... no extra rows beyond num_ids().
class PhonemeInventory {
  public:
    // 72 symbols plus the reserved silence/padding row.
    static PhonemeInventory default_inventory();
    static PhonemeInventory from_file(const std::string& path);
    explicit PhonemeInventory(std::vector<std::string> symbols);

    static constexpr int kPadId = 0;

    int num_ids() const { return static_cast<int>(symbols_.size()) + 1; }
    int num_symbols() const { return static_cast<int>(symbols_.size()); }
    int id_of(const std::string& symbol) const;       // throws on unknown
    std::optional<int> try_id(const std::string& symbol) const;
    const std::string& symbol_of(int id) const;

  private:
    std::vector<std::string> symbols_;  // ids 1..n
    std::unordered_map<std::string, int> index_;
};

struct PhonemeSpan {
    std::string phoneme;
    double start_s = 0.0;
    double end_s = 0.0;
    std::optional<double> energy;  // RMS over the span, when known

    double duration() const { return end_s - start_s; }
};

// Fixed-hop pitch series; 0 Hz marks unvoiced.
struct PitchSeries {
    double hop_s = 0.0;
    std::vector<double> f0_hz;

    // zero-order hold lookup
    double at_time(double t_s) const;
};

struct Utterance {
    std::vector<double> samples;  // in [-1, 1]
    int rate_hz = 0;
    std::vector<PhonemeSpan> spans;  // sorted, gap-free over [0, duration]
    std::optional<PitchSeries> pitch;

    double duration_s() const { return static_cast<double>(samples.size()) / rate_hz; }
    std::int64_t span_start_sample(const PhonemeSpan& s) const;
    std::int64_t span_end_sample(const PhonemeSpan& s) const;
    // Waveform length when present; otherwise the length implied by the
    // span table (synthesis-only utterances carry no samples).
    std::int64_t total_samples() const;
};

// Per-sample conditioning for one frame. A channel is present exactly when
// its vector is non-empty; present channels are frame-length.
struct ConditionTrack {
    std::vector<int> phoneme_ids;
    std::vector<double> energy;
    std::vector<double> pitch;  // 0 = unvoiced/absent

    bool has_phonemes() const { return !phoneme_ids.empty(); }
    bool has_energy() const { return !energy.empty(); }
    bool has_pitch() const { return !pitch.empty(); }
    bool any() const { return has_phonemes() || has_energy() || has_pitch(); }
    std::size_t length() const;
};

// TSV `phoneme<TAB>start_seconds<TAB>end_seconds`, one span per line.
// Returns sorted spans with gaps filled by explicit "sil" spans.
std::vector<PhonemeSpan> load_alignment(const std::string& path, const PhonemeInventory& inv);

// TSV `time_seconds<TAB>f0_hz` at a fixed hop.
PitchSeries load_pitch(const std::string& path);

// sqrt(mean of squared samples) over [start_sample, end_sample).
double phoneme_rms(Span samples, std::int64_t start_sample, std::int64_t end_sample);

// Fills span energies from the waveform.
void compute_span_energies(Utterance& utt);

struct TrackRequest {
    bool phonemes = false;
    bool energy = false;
    bool pitch = false;
};

// Builds the per-sample track for samples [start, end); positions past the
// utterance end get pad id / zero energy / zero pitch.
ConditionTrack build_track(const Utterance& utt, std::int64_t start, std::int64_t end, const PhonemeInventory& inv,
                           const TrackRequest& want);

// Greedy inference plan: every frame's end is the smallest phoneme
// end-boundary at or past start + frame_len, clipped to the utterance end.
// A frame may stretch up to 2x the nominal length; a phoneme forcing more
// than that is an error.
FramePlan plan_frames(const std::vector<PhonemeSpan>& spans, const FrameSpec& spec, std::int64_t total_samples,
                      int rate_hz);

struct ManifestEntry {
    std::string wav_path;
    std::string alignment_path;
    std::string pitch_path;  // optional, empty when absent
};

// TSV `wav<TAB>alignment[<TAB>pitch]`, one utterance per line.
std::vector<ManifestEntry> load_manifest(const std::string& path);

Utterance load_utterance(const ManifestEntry& entry, const PhonemeInventory& inv, int expected_rate_hz);

// One line per phoneme: `phoneme[<TAB>duration_seconds][<TAB>energy]`.
// Missing fields are later supplied by the predictors.
struct SynthSpecEntry {
    std::string phoneme;
    std::optional<double> duration_s;
    std::optional<double> energy;
};

std::vector<SynthSpecEntry> load_synth_spec(const std::string& path, const PhonemeInventory& inv);

}  // namespace framediff
