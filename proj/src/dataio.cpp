#include "framediff/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "framediff/wav.hpp"

namespace framediff {

namespace {

// ARPAbet with stress marks (15 vowels x 3) plus 24 consonants and the
// pause/noise/punctuation markers emitted by common aligner setups.
const char* kDefaultSymbols[] = {
    "AA0", "AA1", "AA2", "AE0", "AE1", "AE2", "AH0", "AH1", "AH2", "AO0", "AO1", "AO2",
    "AW0", "AW1", "AW2", "AY0", "AY1", "AY2", "EH0", "EH1", "EH2", "ER0", "ER1", "ER2",
    "EY0", "EY1", "EY2", "IH0", "IH1", "IH2", "IY0", "IY1", "IY2", "OW0", "OW1", "OW2",
    "OY0", "OY1", "OY2", "UH0", "UH1", "UH2", "UW0", "UW1", "UW2",
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R",
    "S", "SH", "T", "TH", "V", "W", "Y", "Z", "ZH",
    "sp", "spn", "punc",
};

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t tab = line.find('\t', pos);
        if (tab == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, tab - pos));
        pos = tab + 1;
    }
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw InputError(where + ": bad number '" + s + "'");
    }
}

}  // namespace

PhonemeInventory PhonemeInventory::default_inventory() {
    std::vector<std::string> symbols(std::begin(kDefaultSymbols), std::end(kDefaultSymbols));
    return PhonemeInventory(std::move(symbols));
}

PhonemeInventory PhonemeInventory::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("PhonemeInventory: cannot open " + path);
    std::vector<std::string> symbols;
    std::string line;
    while (std::getline(f, line)) {
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        symbols.push_back(line);
    }
    return PhonemeInventory(std::move(symbols));
}

PhonemeInventory::PhonemeInventory(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        if (symbols_[i] == "sil") throw InputError("PhonemeInventory: 'sil' is reserved for the padding row");
        auto [it, inserted] = index_.emplace(symbols_[i], static_cast<int>(i) + 1);
        (void)it;
        if (!inserted) throw InputError("PhonemeInventory: duplicate symbol " + symbols_[i]);
    }
}

int PhonemeInventory::id_of(const std::string& symbol) const {
    auto id = try_id(symbol);
    if (!id) throw InputError("PhonemeInventory: unknown phoneme '" + symbol + "'");
    return *id;
}

std::optional<int> PhonemeInventory::try_id(const std::string& symbol) const {
    if (symbol == "sil") return kPadId;
    auto it = index_.find(symbol);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::string& PhonemeInventory::symbol_of(int id) const {
    static const std::string kSil = "sil";
    if (id == kPadId) return kSil;
    if (id < 1 || id > num_symbols()) throw InputError("PhonemeInventory: id out of range");
    return symbols_[static_cast<std::size_t>(id) - 1];
}

double PitchSeries::at_time(double t_s) const {
    if (f0_hz.empty()) return 0.0;
    if (t_s <= 0.0 || hop_s <= 0.0) return f0_hz.front();
    auto idx = static_cast<std::size_t>(t_s / hop_s);
    if (idx >= f0_hz.size()) idx = f0_hz.size() - 1;
    return f0_hz[idx];
}

std::int64_t Utterance::span_start_sample(const PhonemeSpan& s) const {
    return static_cast<std::int64_t>(std::llround(s.start_s * rate_hz));
}

std::int64_t Utterance::span_end_sample(const PhonemeSpan& s) const {
    return static_cast<std::int64_t>(std::llround(s.end_s * rate_hz));
}

std::int64_t Utterance::total_samples() const {
    if (!samples.empty()) return static_cast<std::int64_t>(samples.size());
    if (spans.empty()) return 0;
    return static_cast<std::int64_t>(std::llround(spans.back().end_s * rate_hz));
}

std::size_t ConditionTrack::length() const {
    if (has_phonemes()) return phoneme_ids.size();
    if (has_energy()) return energy.size();
    if (has_pitch()) return pitch.size();
    return 0;
}

std::vector<PhonemeSpan> load_alignment(const std::string& path, const PhonemeInventory& inv) {
    std::ifstream f(path);
    if (!f) throw InputError("load_alignment: cannot open " + path);
    std::vector<PhonemeSpan> spans;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        auto where = path + ":" + std::to_string(lineno);
        auto fields = split_tabs(line);
        if (fields.size() != 3) throw InputError(where + ": expected phoneme<TAB>start<TAB>end");
        PhonemeSpan span;
        span.phoneme = fields[0];
        if (!inv.try_id(span.phoneme)) throw InputError(where + ": unknown phoneme '" + span.phoneme + "'");
        span.start_s = parse_double(fields[1], where);
        span.end_s = parse_double(fields[2], where);
        if (!(span.end_s > span.start_s)) throw InputError(where + ": non-positive span duration");
        spans.push_back(std::move(span));
    }
    std::sort(spans.begin(), spans.end(), [](const PhonemeSpan& a, const PhonemeSpan& b) { return a.start_s < b.start_s; });
    // validate monotonicity, fill gaps with explicit silence
    std::vector<PhonemeSpan> out;
    double cursor = 0.0;
    for (auto& s : spans) {
        if (s.start_s < cursor - 1e-9)
            throw InputError(path + ": overlapping spans near t=" + std::to_string(s.start_s));
        if (s.start_s > cursor + 1e-9) out.push_back({"sil", cursor, s.start_s, std::nullopt});
        cursor = s.end_s;
        out.push_back(std::move(s));
    }
    return out;
}

PitchSeries load_pitch(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("load_pitch: cannot open " + path);
    PitchSeries series;
    std::vector<double> times;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        auto where = path + ":" + std::to_string(lineno);
        auto fields = split_tabs(line);
        if (fields.size() != 2) throw InputError(where + ": expected time<TAB>f0");
        times.push_back(parse_double(fields[0], where));
        series.f0_hz.push_back(parse_double(fields[1], where));
    }
    if (times.size() < 2) {
        series.hop_s = times.empty() ? 0.0 : times[0];
        if (!times.empty() && times[0] != 0.0) throw InputError(path + ": single-entry series must start at t=0");
        return series;
    }
    double hop = times[1] - times[0];
    if (!(hop > 0)) throw InputError(path + ": non-increasing time axis");
    for (std::size_t i = 1; i < times.size(); ++i) {
        double d = times[i] - times[i - 1];
        if (std::abs(d - hop) > 1e-6) throw InputError(path + ": hop is not fixed (line " + std::to_string(i + 1) + ")");
    }
    series.hop_s = hop;
    return series;
}

double phoneme_rms(Span samples, std::int64_t start_sample, std::int64_t end_sample) {
    if (start_sample < 0 || end_sample > static_cast<std::int64_t>(samples.size()))
        throw InputError("phoneme_rms: span outside the utterance");
    if (end_sample <= start_sample) throw InputError("phoneme_rms: empty span");
    double acc = 0.0;
    for (std::int64_t i = start_sample; i < end_sample; ++i) acc += samples[static_cast<std::size_t>(i)] * samples[static_cast<std::size_t>(i)];
    return std::sqrt(acc / static_cast<double>(end_sample - start_sample));
}

void compute_span_energies(Utterance& utt) {
    for (auto& s : utt.spans) {
        std::int64_t a = utt.span_start_sample(s);
        std::int64_t b = std::min<std::int64_t>(utt.span_end_sample(s), static_cast<std::int64_t>(utt.samples.size()));
        if (b <= a) {
            s.energy = 0.0;
            continue;
        }
        s.energy = phoneme_rms(utt.samples, a, b);
    }
}

ConditionTrack build_track(const Utterance& utt, std::int64_t start, std::int64_t end, const PhonemeInventory& inv,
                           const TrackRequest& want) {
    if (start < 0 || end <= start) throw InputError("build_track: bad frame bounds");
    const auto len = static_cast<std::size_t>(end - start);
    ConditionTrack track;
    if (want.phonemes) track.phoneme_ids.assign(len, PhonemeInventory::kPadId);
    if (want.energy) track.energy.assign(len, 0.0);
    if (want.pitch) track.pitch.assign(len, 0.0);
    if (!want.phonemes && !want.energy && !want.pitch) return track;

    const std::int64_t total = utt.total_samples();
    // walk spans once; spans are sorted and gap-free over [0, total)
    for (const auto& s : utt.spans) {
        std::int64_t a = std::max(start, utt.span_start_sample(s));
        std::int64_t b = std::min({end, utt.span_end_sample(s), total});
        if (b <= a) continue;
        if (want.phonemes) {
            int id = inv.id_of(s.phoneme);
            std::fill(track.phoneme_ids.begin() + (a - start), track.phoneme_ids.begin() + (b - start), id);
        }
        if (want.energy) {
            if (!s.energy) throw InputError("build_track: span '" + s.phoneme + "' has no energy value");
            std::fill(track.energy.begin() + (a - start), track.energy.begin() + (b - start), *s.energy);
        }
    }
    if (want.pitch) {
        if (!utt.pitch) throw InputError("build_track: pitch requested but utterance has no pitch series");
        std::int64_t b = std::min(end, total);
        for (std::int64_t i = start; i < b; ++i)
            track.pitch[static_cast<std::size_t>(i - start)] = utt.pitch->at_time(static_cast<double>(i) / utt.rate_hz);
    }
    // positions past the utterance end keep pad id / zeros
    return track;
}

FramePlan plan_frames(const std::vector<PhonemeSpan>& spans, const FrameSpec& spec, std::int64_t total_samples,
                      int rate_hz) {
    if (total_samples <= 0) throw InputError("plan_frames: empty utterance");
    std::vector<std::int64_t> boundaries;
    boundaries.reserve(spans.size());
    for (const auto& s : spans) {
        auto e = static_cast<std::int64_t>(std::llround(s.end_s * rate_hz));
        if (e > 0 && e <= total_samples) boundaries.push_back(e);
    }
    std::sort(boundaries.begin(), boundaries.end());
    boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());

    FramePlan plan;
    std::int64_t start = 0;
    const std::int64_t nominal = spec.frame_len;
    const std::int64_t max_len = 2 * nominal;
    while (start < total_samples) {
        std::int64_t want = start + nominal;
        std::int64_t end;
        if (want >= total_samples) {
            end = total_samples;
        } else {
            auto it = std::lower_bound(boundaries.begin(), boundaries.end(), want);
            end = (it == boundaries.end()) ? total_samples : *it;
        }
        if (end - start > max_len)
            throw InputError("plan_frames: phoneme span forces frame of " + std::to_string(end - start) +
                             " samples, above the 2x limit " + std::to_string(max_len));
        plan.bounds.push_back({start, end});
        if (end >= total_samples) break;
        start = end - spec.overlap_len;
    }
    return plan;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("load_manifest: cannot open " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields.size() < 2 || fields.size() > 3)
            throw InputError(path + ":" + std::to_string(lineno) + ": expected wav<TAB>alignment[<TAB>pitch]");
        ManifestEntry e;
        e.wav_path = fields[0];
        e.alignment_path = fields[1];
        if (fields.size() == 3) e.pitch_path = fields[2];
        entries.push_back(std::move(e));
    }
    return entries;
}

Utterance load_utterance(const ManifestEntry& entry, const PhonemeInventory& inv, int expected_rate_hz) {
    WavData wav = read_wav(entry.wav_path, expected_rate_hz);
    Utterance utt;
    utt.samples = std::move(wav.samples);
    utt.rate_hz = wav.sample_rate_hz;
    utt.spans = load_alignment(entry.alignment_path, inv);
    double dur = utt.duration_s();
    if (!utt.spans.empty() && utt.spans.back().end_s > dur + 1.0 / utt.rate_hz)
        throw InputError(entry.alignment_path + ": alignment extends past the waveform end");
    // trailing silence so every sample is covered
    double cursor = utt.spans.empty() ? 0.0 : utt.spans.back().end_s;
    if (cursor < dur - 1e-9) utt.spans.push_back({"sil", cursor, dur, std::nullopt});
    if (!utt.spans.empty()) utt.spans.back().end_s = std::max(utt.spans.back().end_s, dur);
    if (!entry.pitch_path.empty()) utt.pitch = load_pitch(entry.pitch_path);
    compute_span_energies(utt);
    return utt;
}

std::vector<SynthSpecEntry> load_synth_spec(const std::string& path, const PhonemeInventory& inv) {
    std::ifstream f(path);
    if (!f) throw InputError("load_synth_spec: cannot open " + path);
    std::vector<SynthSpecEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        auto where = path + ":" + std::to_string(lineno);
        auto fields = split_tabs(line);
        if (fields.empty() || fields.size() > 3) throw InputError(where + ": expected phoneme[<TAB>duration][<TAB>energy]");
        SynthSpecEntry e;
        e.phoneme = fields[0];
        if (!inv.try_id(e.phoneme)) throw InputError(where + ": unknown phoneme '" + e.phoneme + "'");
        if (fields.size() >= 2 && !fields[1].empty()) {
            e.duration_s = parse_double(fields[1], where);
            if (*e.duration_s <= 0) throw InputError(where + ": non-positive duration");
        }
        if (fields.size() == 3 && !fields[2].empty()) e.energy = parse_double(fields[2], where);
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw InputError(path + ": empty synthesis spec");
    return entries;
}

}  // namespace framediff
