#include "framediff/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "framediff/allocprobe.hpp"

namespace framediff {

namespace {

double median(std::vector<double> v) {
    if (v.empty()) throw InputError("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double window_rms(Span w, std::int64_t lo, std::int64_t hi) {
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min<std::int64_t>(hi, static_cast<std::int64_t>(w.size()));
    if (hi <= lo) return 0.0;
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) acc += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
    return std::sqrt(acc / static_cast<double>(hi - lo));
}

}  // namespace

SeamReport seam_report(Span waveform, const FramePlan& plan, int rate_hz, std::optional<Span> reference) {
    if (plan.bounds.empty()) throw InputError("seam_report: empty plan");
    if (rate_hz <= 0) throw InputError("seam_report: bad sample rate");
    const auto total = static_cast<std::int64_t>(waveform.size());
    if (plan.bounds.back().end != total)
        throw InputError("seam_report: plan covers " + std::to_string(plan.bounds.back().end) +
                         " samples but the waveform has " + std::to_string(total));
    if (reference && reference->size() != waveform.size())
        throw InputError("seam_report: reference length mismatch");

    const auto wide = static_cast<std::int64_t>(std::llround(0.020 * rate_hz));
    const auto narrow = static_cast<std::int64_t>(std::llround(0.0025 * rate_hz));

    SeamReport report;
    std::vector<double> jump_ratios, rms_ratios, ref_ratios;
    for (std::size_t l = 0; l + 1 < plan.bounds.size(); ++l) {
        const std::int64_t j = plan.bounds[l].end;  // first sample owned by frame l+1
        if (j <= 0 || j >= total) throw InputError("seam_report: junction outside the waveform");
        SeamBoundary b;
        b.boundary_index = l;
        b.sample = j;
        b.jump_abs = std::abs(waveform[static_cast<std::size_t>(j)] - waveform[static_cast<std::size_t>(j - 1)]);

        std::vector<double> interior;
        const std::int64_t lo = std::max<std::int64_t>(1, j - wide);
        const std::int64_t hi = std::min<std::int64_t>(total, j + wide);
        for (std::int64_t i = lo; i < hi; ++i) {
            if (i == j) continue;  // the junction's own difference stays out of its baseline
            interior.push_back(std::abs(waveform[static_cast<std::size_t>(i)] - waveform[static_cast<std::size_t>(i - 1)]));
        }
        const double med = interior.empty() ? 0.0 : median(interior);
        b.jump_ratio = med > 0.0 ? b.jump_abs / med : (b.jump_abs > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);

        const double rms_n = window_rms(waveform, j - narrow, j + narrow);
        const double rms_w = window_rms(waveform, j - wide, j + wide);
        b.rms_ratio = rms_w > 0.0 ? rms_n / rms_w : 1.0;

        if (reference) {
            const double dw = waveform[static_cast<std::size_t>(j)] - waveform[static_cast<std::size_t>(j - 1)];
            const double dr = (*reference)[static_cast<std::size_t>(j)] - (*reference)[static_cast<std::size_t>(j - 1)];
            double r;
            if (dw == dr)
                r = 1.0;  // covers the bit-exact case including 0/0
            else if (dr != 0.0)
                r = std::abs(dw) / std::abs(dr);
            else
                r = std::numeric_limits<double>::infinity();
            b.ref_ratio = r;
            ref_ratios.push_back(r);
        }

        jump_ratios.push_back(b.jump_ratio);
        rms_ratios.push_back(b.rms_ratio);
        report.boundaries.push_back(std::move(b));
    }
    if (!jump_ratios.empty()) {
        report.median_jump_ratio = median(jump_ratios);
        report.median_rms_ratio = median(rms_ratios);
        if (!ref_ratios.empty()) report.median_ref_ratio = median(ref_ratios);
    }
    return report;
}

void write_seam_tsv(const SeamReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ResourceError("write_seam_tsv: cannot open " + path);
    f << "boundary\tsample\tjump_abs\tjump_ratio\trms_ratio\tref_ratio\n";
    for (const auto& b : report.boundaries) {
        f << b.boundary_index << '\t' << b.sample << '\t' << b.jump_abs << '\t' << b.jump_ratio << '\t' << b.rms_ratio
          << '\t';
        if (b.ref_ratio)
            f << *b.ref_ratio;
        else
            f << "-";
        f << '\n';
    }
    f << "# median_jump_ratio\t" << report.median_jump_ratio << '\n';
    f << "# median_rms_ratio\t" << report.median_rms_ratio << '\n';
    if (report.median_ref_ratio) f << "# median_ref_ratio\t" << *report.median_ref_ratio << '\n';
}

MemoryProfile memory_profile(const SynthRunner& runner, const std::vector<double>& lengths_s) {
    if (lengths_s.empty()) throw InputError("memory_profile: no lengths requested");
    for (double s : lengths_s)
        if (s <= 0.0) throw InputError("memory_profile: non-positive length");
    if (!alloc_probe_enabled())
        throw ResourceError("memory_profile: allocation probe is not linked into this binary");

    MemoryProfile profile;
    for (double seconds : lengths_s) {
        CountSink sink;
        const std::uint64_t baseline = alloc_probe_read().current;
        alloc_probe_reset_peak();
        std::int64_t samples = runner(seconds, sink);
        const std::uint64_t peak = alloc_probe_read().peak;
        MemoryRow row;
        row.seconds = seconds;
        row.samples = samples;
        row.peak_bytes = peak > baseline ? peak - baseline : 0;
        profile.rows.push_back(row);
    }
    std::uint64_t lo = profile.rows[0].peak_bytes, hi = profile.rows[0].peak_bytes;
    for (const auto& r : profile.rows) {
        lo = std::min(lo, r.peak_bytes);
        hi = std::max(hi, r.peak_bytes);
    }
    profile.flatness_ratio = lo > 0 ? static_cast<double>(hi) / static_cast<double>(lo)
                                    : std::numeric_limits<double>::infinity();
    return profile;
}

void write_memory_tsv(const MemoryProfile& profile, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ResourceError("write_memory_tsv: cannot open " + path);
    f << "seconds\tsamples\tpeak_bytes\n";
    for (const auto& r : profile.rows) f << r.seconds << '\t' << r.samples << '\t' << r.peak_bytes << '\n';
    f << "# flatness_ratio\t" << profile.flatness_ratio << '\n';
}

VarianceReport variance_report(const SeededSynth& synth, const Utterance& spec_utt,
                               const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw InputError("variance_report: need at least 2 seeds");
    if (spec_utt.spans.empty()) throw InputError("variance_report: utterance has no spans");

    const std::size_t S = spec_utt.spans.size();
    std::vector<std::vector<double>> rms_per_span(S);
    std::size_t successes = 0;
    for (auto seed : seeds) {
        std::vector<double> wave = synth(seed);
        if (wave.empty()) continue;
        ++successes;
        for (std::size_t i = 0; i < S; ++i) {
            const auto a = std::max<std::int64_t>(spec_utt.span_start_sample(spec_utt.spans[i]), 0);
            const auto b = std::min<std::int64_t>(spec_utt.span_end_sample(spec_utt.spans[i]),
                                                  static_cast<std::int64_t>(wave.size()));
            rms_per_span[i].push_back(b > a ? phoneme_rms(wave, a, b) : 0.0);
        }
    }
    if (successes < 2) throw InputError("variance_report: fewer than 2 successful syntheses");

    VarianceReport report;
    report.num_seeds = successes;
    for (std::size_t i = 0; i < S; ++i) {
        const auto& xs = rms_per_span[i];
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= static_cast<double>(xs.size() - 1);
        VarianceRow row;
        row.span_index = i;
        row.phoneme = spec_utt.spans[i].phoneme;
        row.mean_rms = mean;
        row.std_rms = std::sqrt(var);
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_variance_tsv(const VarianceReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ResourceError("write_variance_tsv: cannot open " + path);
    f << "span\tphoneme\tmean_rms\tstd_rms\n";
    for (const auto& r : report.rows) f << r.span_index << '\t' << r.phoneme << '\t' << r.mean_rms << '\t' << r.std_rms << '\n';
    f << "# seeds\t" << report.num_seeds << '\n';
}

VarianceComparison compare_variance(const VarianceReport& a, const VarianceReport& b) {
    if (a.rows.size() != b.rows.size()) throw InputError("compare_variance: span count mismatch");
    VarianceComparison cmp;
    cmp.spans = a.rows.size();
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (a.rows[i].phoneme != b.rows[i].phoneme) throw InputError("compare_variance: span phonemes differ");
        if (a.rows[i].std_rms < b.rows[i].std_rms) ++cmp.tighter;
    }
    cmp.fraction_tighter = cmp.spans > 0 ? static_cast<double>(cmp.tighter) / static_cast<double>(cmp.spans) : 0.0;
    return cmp;
}

}  // namespace framediff
