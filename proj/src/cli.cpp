#include "framediff/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <new>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "framediff/checkpoint.hpp"
#include "framediff/common.hpp"
#include "framediff/dataio.hpp"
#include "framediff/denoiser.hpp"
#include "framediff/evalkit.hpp"
#include "framediff/framing.hpp"
#include "framediff/predictors.hpp"
#include "framediff/rng.hpp"
#include "framediff/sampler.hpp"
#include "framediff/schedule.hpp"
#include "framediff/trainer.hpp"
#include "framediff/wav.hpp"

namespace framediff {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Held-out utterances per split end (validation and test each take this
// many records off the tail of the manifest).
std::size_t split_holdout(std::size_t n) { return std::min<std::size_t>(131, n / 100); }

DenoiserConfig config_for_mode(const std::string& mode) {
    DenoiserConfig cfg;
    if (mode == "uncond") {
    } else if (mode == "phoneme") {
        cfg.use_phonemes = true;
    } else if (mode == "cond") {
        cfg.use_phonemes = true;
        cfg.use_energy = true;
    } else if (mode == "cond+pitch") {
        cfg.use_phonemes = true;
        cfg.use_energy = true;
        cfg.use_pitch = true;
    } else {
        throw InputError("unknown mode: " + mode);
    }
    return cfg;
}

std::string mode_of(const DenoiserConfig& cfg) {
    if (cfg.use_pitch) return "cond+pitch";
    if (cfg.use_energy) return "cond";
    if (cfg.use_phonemes) return "phoneme";
    return "uncond";
}

TrackRequest want_of(const DenoiserConfig& cfg) {
    TrackRequest want;
    want.phonemes = cfg.use_phonemes;
    want.energy = cfg.use_energy;
    want.pitch = cfg.use_pitch;
    return want;
}

struct Corpus {
    std::vector<Utterance> utts;
    int rate_hz = 0;
};

Corpus load_corpus(const std::string& manifest_path, const PhonemeInventory& inv, int expected_rate) {
    Corpus c;
    c.rate_hz = expected_rate;
    auto entries = load_manifest(manifest_path);
    if (entries.empty()) throw InputError("manifest is empty: " + manifest_path);
    c.utts.reserve(entries.size());
    for (const auto& e : entries) {
        Utterance u = load_utterance(e, inv, c.rate_hz);
        if (c.rate_hz == 0) c.rate_hz = u.rate_hz;
        c.utts.push_back(std::move(u));
    }
    return c;
}

json frame_to_json(const FrameSpec& spec) {
    return json{{"frame_ms", spec.frame_len_ms},
                {"overlap_ms", spec.overlap_ms},
                {"sample_rate_hz", spec.sample_rate_hz},
                {"frame_len", spec.frame_len},
                {"overlap_len", spec.overlap_len}};
}

json bounds_to_json(const std::vector<FramePlan::Bound>& bounds) {
    json arr = json::array();
    for (const auto& b : bounds) arr.push_back(json::array({b.start, b.end}));
    return arr;
}

FramePlan bounds_from_json(const json& arr) {
    FramePlan plan;
    for (const auto& b : arr) {
        FramePlan::Bound bd;
        bd.start = b.at(0).get<std::int64_t>();
        bd.end = b.at(1).get<std::int64_t>();
        plan.bounds.push_back(bd);
    }
    return plan;
}

json spans_to_json(const std::vector<PhonemeSpan>& spans) {
    json arr = json::array();
    for (const auto& s : spans) {
        json row{{"phoneme", s.phoneme}, {"start_s", s.start_s}, {"end_s", s.end_s}};
        if (s.energy) row["energy"] = *s.energy;
        arr.push_back(row);
    }
    return arr;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ResourceError("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw ResourceError("write failed: " + path);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
    return j;
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
    std::string manifest;
    std::string out_dir;
    int rate = 0;
};

int cmd_prepare(const PrepareArgs& a) {
    auto inv = PhonemeInventory::default_inventory();
    auto entries = load_manifest(a.manifest);
    if (entries.empty()) throw InputError("manifest is empty: " + a.manifest);
    fs::create_directories(fs::path(a.out_dir) / "spans");

    std::ofstream index(fs::path(a.out_dir) / "index.tsv", std::ios::trunc);
    if (!index) throw ResourceError("cannot write index.tsv in " + a.out_dir);
    index << std::setprecision(17);
    index << "wav\talignment\tpitch\trate_hz\tduration_s\tspans\tspan_table\n";

    int rate = a.rate;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        Utterance u = load_utterance(e, inv, rate);
        if (rate == 0) rate = u.rate_hz;

        char stem[16];
        std::snprintf(stem, sizeof stem, "%06zu", i);
        const fs::path span_path = fs::path(a.out_dir) / "spans" / (std::string(stem) + ".tsv");
        std::ofstream sp(span_path, std::ios::trunc);
        if (!sp) throw ResourceError("cannot write " + span_path.string());
        sp << std::setprecision(17);
        sp << "phoneme\tstart_s\tend_s\tenergy\n";
        for (const auto& s : u.spans)
            sp << s.phoneme << '\t' << s.start_s << '\t' << s.end_s << '\t' << (s.energy ? *s.energy : 0.0) << '\n';
        if (!sp) throw ResourceError("write failed: " + span_path.string());

        index << e.wav_path << '\t' << e.alignment_path << '\t' << e.pitch_path << '\t' << u.rate_hz << '\t'
              << u.duration_s() << '\t' << u.spans.size() << '\t' << span_path.string() << '\n';
    }
    if (!index) throw ResourceError("write failed: index.tsv");

    const std::size_t n = entries.size();
    const std::size_t k = split_holdout(n);
    const std::size_t n_train = n - 2 * k;
    auto write_split = [&](const std::string& name, std::size_t lo, std::size_t hi) {
        std::ofstream out(fs::path(a.out_dir) / name, std::ios::trunc);
        if (!out) throw ResourceError("cannot write " + name + " in " + a.out_dir);
        for (std::size_t i = lo; i < hi; ++i) {
            out << entries[i].wav_path << '\t' << entries[i].alignment_path;
            if (!entries[i].pitch_path.empty()) out << '\t' << entries[i].pitch_path;
            out << '\n';
        }
    };
    write_split("train.tsv", 0, n_train);
    write_split("val.tsv", n_train, n_train + k);
    write_split("test.tsv", n_train + k, n);

    write_json_file((fs::path(a.out_dir) / "prepare.json").string(),
                    json{{"command", "prepare"},
                         {"manifest", a.manifest},
                         {"records", n},
                         {"rate_hz", rate},
                         {"split", json{{"train", n_train}, {"val", k}, {"test", k}}}});

    std::printf("prepared %zu records (train %zu / val %zu / test %zu) -> %s\n", n, n_train, k, k,
                a.out_dir.c_str());
    return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string manifest, out_dir, mode = "uncond", resume;
    double frame_ms = 0.0, overlap_ms = 0.0;
    int diffusion_steps = 200;
    double beta_min = 1e-4, beta_max = 0.02;
    long steps = 10000;
    int batch = 4;
    double lr = 2e-4, clip = 1.0;
    long checkpoint_every = 1000;
    std::uint64_t seed = 1;
    double stop_below = 0.0;
    int stop_window = 50;
    int rate = 0;
    int layers = 36, channels = 256, step_dim = 128;
    std::vector<int> dilations;
    long log_every = 100;
};

int cmd_train(const TrainArgs& a) {
    auto inv = PhonemeInventory::default_inventory();
    Corpus corpus = load_corpus(a.manifest, inv, a.rate);

    // Frame defaults follow the mode: long frames for unconditional
    // generation, shorter ones when conditioning carries the structure.
    double frame_ms = a.frame_ms;
    double overlap_ms = a.overlap_ms;
    if (frame_ms <= 0.0) frame_ms = (a.mode == "uncond") ? 1000.0 : 500.0;
    if (overlap_ms <= 0.0) overlap_ms = frame_ms / 2.0;
    FrameSpec spec = FrameSpec::from_ms(frame_ms, overlap_ms, corpus.rate_hz);

    DenoiserConfig dcfg = config_for_mode(a.mode);
    dcfg.num_layers = a.layers;
    dcfg.channels = a.channels;
    dcfg.step_embed_dim = a.step_dim;
    dcfg.inventory_size = inv.num_ids();
    if (!a.dilations.empty()) dcfg.dilation_cycle = a.dilations;

    ScheduleSpec sspec;
    sspec.steps = a.diffusion_steps;
    sspec.beta_min = a.beta_min;
    sspec.beta_max = a.beta_max;

    TrainConfig tcfg;
    tcfg.steps = a.steps;
    tcfg.batch_size = a.batch;
    tcfg.lr = a.lr;
    tcfg.clip_norm = a.clip;
    tcfg.checkpoint_every = a.checkpoint_every;
    tcfg.seed = a.seed;
    tcfg.stop_below = a.stop_below;
    tcfg.stop_window = a.stop_window;
    tcfg.out_dir = a.out_dir;

    TrainHook hook;
    if (a.log_every > 0) {
        long every = a.log_every;
        hook = [every](long step, double loss) {
            if (step == 1 || step % every == 0) {
                std::printf("step %ld  loss %.6f\n", step, loss);
                std::fflush(stdout);
            }
        };
    }

    TrainResult res = train_denoiser(corpus.utts, inv, spec, sspec, dcfg, tcfg, a.resume, hook);
    std::printf("trained %ld steps (last loss %.6f, window mean %.6f)\ncheckpoint: %s\n", res.steps_done,
                res.last_loss, res.smoothed_loss, res.final_checkpoint.c_str());
    return 0;
}

// -------------------------------------------------------- train-predictor

struct TrainPredictorArgs {
    std::string manifest, out_dir, which = "duration";
    long steps = 2000;
    int batch = 8;
    double lr = 1e-3, clip = 1.0;
    std::uint64_t seed = 1;
    long val_every = 200;
    int rate = 0;
    int embed_dim = 128, hidden = 256;
    double dropout = 0.5;
};

int cmd_train_predictor(const TrainPredictorArgs& a) {
    auto inv = PhonemeInventory::default_inventory();
    Corpus corpus = load_corpus(a.manifest, inv, a.rate);
    auto examples = (a.which == "duration") ? make_duration_examples(corpus.utts, inv)
                                            : make_energy_examples(corpus.utts, inv);
    if (examples.empty()) throw InputError("no usable training examples in " + a.manifest);

    std::size_t k = split_holdout(examples.size());
    if (k == 0 && examples.size() >= 10) k = examples.size() / 10;
    std::vector<PredictorExample> train_set(examples.begin(), examples.end() - static_cast<long>(k));
    std::vector<PredictorExample> val_set(examples.end() - static_cast<long>(k), examples.end());

    PredictorConfig cfg;
    cfg.inventory_size = inv.num_ids();
    cfg.embed_dim = a.embed_dim;
    cfg.hidden = a.hidden;
    cfg.dropout = a.dropout;

    PredictorTrainConfig tcfg;
    tcfg.steps = a.steps;
    tcfg.batch_size = a.batch;
    tcfg.lr = a.lr;
    tcfg.clip_norm = a.clip;
    tcfg.seed = a.seed;
    tcfg.val_every = a.val_every;
    tcfg.out_dir = a.out_dir;

    PredictorTrainResult res = train_predictor(train_set, val_set, a.which, cfg, tcfg);
    std::printf("trained %s predictor: %ld steps, train loss %.6f, val mse %.6f\ncheckpoint: %s\n",
                a.which.c_str(), res.steps_done, res.last_loss, res.val_mse, res.checkpoint.c_str());
    return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
    std::string spec_path, out_path;
    std::string duration_ck, energy_ck;
};

int cmd_predict(const PredictArgs& a) {
    auto inv = PhonemeInventory::default_inventory();
    auto entries = load_synth_spec(a.spec_path, inv);
    if (entries.empty()) throw InputError("spec file is empty: " + a.spec_path);

    std::vector<int> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) ids.push_back(inv.id_of(e.phoneme));

    const bool miss_dur = std::any_of(entries.begin(), entries.end(),
                                      [](const SynthSpecEntry& e) { return !e.duration_s; });
    const bool miss_energy = std::any_of(entries.begin(), entries.end(),
                                         [](const SynthSpecEntry& e) { return !e.energy; });

    std::vector<double> pred_dur, pred_energy;
    if (miss_dur) {
        if (a.duration_ck.empty())
            throw InputError("spec has spans without durations; pass --duration-ck");
        pred_dur = load_duration_checkpoint(a.duration_ck)->predict(ids);
    }
    if (miss_energy && !a.energy_ck.empty()) pred_energy = load_energy_checkpoint(a.energy_ck)->predict(ids);

    std::ofstream out(a.out_path, std::ios::trunc);
    if (!out) throw ResourceError("cannot write " + a.out_path);
    out << std::setprecision(17);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const double dur = e.duration_s ? *e.duration_s : pred_dur[i];
        out << e.phoneme << '\t' << dur;
        if (e.energy)
            out << '\t' << *e.energy;
        else if (!pred_energy.empty())
            out << '\t' << pred_energy[i];
        out << '\n';
    }
    if (!out) throw ResourceError("write failed: " + a.out_path);
    std::printf("wrote %s: %zu spans\n", a.out_path.c_str(), entries.size());
    return 0;
}

// ------------------------------------------------------------------ synth

// Turns a phoneme spec into a span table with concrete durations and
// energies, either taken from the file or predicted.
Utterance build_spec_utterance(const std::vector<SynthSpecEntry>& entries, const PhonemeInventory& inv, int rate_hz,
                               const std::string& durations_mode, const std::string& energy_mode,
                               const std::string& duration_ck, const std::string& energy_ck, bool need_energy,
                               const std::string& pitch_path, bool need_pitch) {
    if (entries.empty()) throw InputError("synthesis spec is empty");
    std::vector<int> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) ids.push_back(inv.id_of(e.phoneme));

    std::vector<double> durations(entries.size());
    if (durations_mode == "predicted") {
        if (duration_ck.empty()) throw InputError("--durations predicted needs --duration-ck");
        durations = load_duration_checkpoint(duration_ck)->predict(ids);
    } else {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!entries[i].duration_s)
                throw InputError("span " + std::to_string(i) + " (" + entries[i].phoneme +
                                 ") has no duration; add one or pass --durations predicted");
            durations[i] = *entries[i].duration_s;
        }
    }
    for (std::size_t i = 0; i < durations.size(); ++i)
        if (!(durations[i] > 0.0))
            throw InputError("span " + std::to_string(i) + " has non-positive duration");

    std::vector<double> energies;
    if (need_energy) {
        if (energy_mode == "predicted") {
            if (energy_ck.empty()) throw InputError("--energy predicted needs --energy-ck");
            energies = load_energy_checkpoint(energy_ck)->predict(ids);
        } else {
            energies.resize(entries.size());
            for (std::size_t i = 0; i < entries.size(); ++i) {
                if (!entries[i].energy)
                    throw InputError("span " + std::to_string(i) + " (" + entries[i].phoneme +
                                     ") has no energy; add one or pass --energy predicted");
                energies[i] = *entries[i].energy;
            }
        }
    }

    Utterance utt;
    utt.rate_hz = rate_hz;
    utt.spans.reserve(entries.size());
    double t = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        PhonemeSpan s;
        s.phoneme = entries[i].phoneme;
        s.start_s = t;
        t += durations[i];
        s.end_s = t;
        if (need_energy) s.energy = energies[i];
        utt.spans.push_back(std::move(s));
    }
    if (need_pitch && pitch_path.empty())
        throw InputError("checkpoint conditions on pitch; pass --pitch");
    if (!pitch_path.empty()) utt.pitch = load_pitch(pitch_path);
    return utt;
}

struct SynthArgs {
    std::string checkpoint, spec_path, out_wav;
    std::string duration_ck, energy_ck, pitch_path;
    std::string durations_mode = "given", energy_mode = "given";
    std::uint64_t seed = 1;
    bool literal_update = false;
};

int cmd_synth(const SynthArgs& a) {
    auto inv = PhonemeInventory::default_inventory();
    LoadedDenoiser ld = load_denoiser_checkpoint(a.checkpoint);
    auto entries = load_synth_spec(a.spec_path, inv);
    Utterance utt =
        build_spec_utterance(entries, inv, ld.frame.sample_rate_hz, a.durations_mode, a.energy_mode, a.duration_ck,
                             a.energy_ck, ld.config.use_energy, a.pitch_path, ld.config.use_pitch);

    auto pieces = plan_synthesis(utt, ld.frame, inv, want_of(ld.config));
    NoiseSchedule sched = ld.schedule.build();
    Rng rng(a.seed);
    SampleOptions opts;
    opts.literal_update = a.literal_update;

    EpsFn eps = denoiser_eps(*ld.model);
    WavFileSink sink(a.out_wav, ld.frame.sample_rate_hz);
    SynthesisResult res = synthesize(eps, sched, pieces, ld.frame.overlap_len, rng, sink, opts);
    sink.close();

    std::vector<FramePlan::Bound> bounds;
    bounds.reserve(pieces.size());
    for (const auto& p : pieces) bounds.push_back(p.bound);
    write_json_file(a.out_wav + ".json",
                    json{{"command", "synth"},
                         {"seed", a.seed},
                         {"mode", mode_of(ld.config)},
                         {"frame", frame_to_json(ld.frame)},
                         {"schedule", schedule_spec_to_json(ld.schedule)},
                         {"checkpoint", json{{"path", a.checkpoint}, {"hash", hex64(ld.file_hash)}}},
                         {"durations", a.durations_mode},
                         {"energy", ld.config.use_energy ? a.energy_mode : "unused"},
                         {"literal_update", a.literal_update},
                         {"total_samples", res.total_samples},
                         {"frames", res.frames},
                         {"bounds", bounds_to_json(bounds)},
                         {"spans", spans_to_json(utt.spans)}});

    std::printf("wrote %s: %lld samples, %zu frames\n", a.out_wav.c_str(),
                static_cast<long long>(res.total_samples), res.frames);
    return 0;
}

// --------------------------------------------------------------- generate

struct GenerateArgs {
    std::string checkpoint, out_wav;
    int frames = 1;
    std::uint64_t seed = 1;
    double frame_ms = 0.0, overlap_ms = 0.0;
    bool literal_update = false;
};

int cmd_generate(const GenerateArgs& a) {
    LoadedDenoiser ld = load_denoiser_checkpoint(a.checkpoint);
    if (ld.config.conditional())
        throw InputError("checkpoint was trained with conditioning (" + mode_of(ld.config) +
                         "); use synth with a phoneme spec");
    if (a.frames < 1) throw InputError("--frames must be at least 1");

    // The sampler accepts frame geometries other than the training one.
    FrameSpec spec = ld.frame;
    if (a.frame_ms > 0.0) {
        const double overlap = a.overlap_ms > 0.0 ? a.overlap_ms : a.frame_ms / 2.0;
        spec = FrameSpec::from_ms(a.frame_ms, overlap, ld.frame.sample_rate_hz);
    }

    NoiseSchedule sched = ld.schedule.build();
    Rng rng(a.seed);
    SampleOptions opts;
    opts.literal_update = a.literal_update;

    EpsFn eps = denoiser_eps(*ld.model);
    WavFileSink sink(a.out_wav, spec.sample_rate_hz);
    SynthesisResult res = generate_unconditional(eps, sched, a.frames, spec, rng, sink, opts);
    sink.close();

    FramePlan plan = FramePlan::fixed(res.frames, spec);
    write_json_file(a.out_wav + ".json",
                    json{{"command", "generate"},
                         {"seed", a.seed},
                         {"mode", "uncond"},
                         {"frame", frame_to_json(spec)},
                         {"schedule", schedule_spec_to_json(ld.schedule)},
                         {"checkpoint", json{{"path", a.checkpoint}, {"hash", hex64(ld.file_hash)}}},
                         {"literal_update", a.literal_update},
                         {"total_samples", res.total_samples},
                         {"frames", res.frames},
                         {"bounds", bounds_to_json(plan.bounds)}});

    std::printf("wrote %s: %lld samples, %zu frames\n", a.out_wav.c_str(),
                static_cast<long long>(res.total_samples), res.frames);
    return 0;
}

// --------------------------------------------------------------- eval

struct EvalSeamsArgs {
    std::string wav_path, meta_path, out_path;
    bool reassemble = false;
    double frame_ms = 0.0, overlap_ms = 0.0;
};

int cmd_eval_seams(const EvalSeamsArgs& a) {
    WavData wav = read_wav(a.wav_path);
    SeamReport report;
    if (a.reassemble) {
        // Control experiment: re-segment a real waveform, put it back
        // together, and verify the junction statistics on a signal with no
        // synthesis artifacts at all.
        if (a.frame_ms <= 0.0) throw InputError("--reassemble needs --frame-ms");
        const double overlap = a.overlap_ms > 0.0 ? a.overlap_ms : a.frame_ms / 2.0;
        FrameSpec spec = FrameSpec::from_ms(a.frame_ms, overlap, wav.sample_rate_hz);
        auto frames = segment(wav.samples, spec);
        if (frames.size() < 2) throw InputError("waveform shorter than two frames at this frame size");

        std::vector<double> rebuilt;
        rebuilt.reserve(wav.samples.size());
        FramePlan plan;
        for (std::size_t l = 0; l < frames.size(); ++l) {
            const std::int64_t start = static_cast<std::int64_t>(l) * spec.hop();
            const std::size_t skip = (l == 0) ? 0 : static_cast<std::size_t>(spec.overlap_len);
            const std::size_t stop = static_cast<std::size_t>(frames[l].valid_len);
            for (std::size_t i = skip; i < stop; ++i) rebuilt.push_back(frames[l].samples[i]);
            FramePlan::Bound b;
            b.start = start;
            b.end = start + frames[l].valid_len;
            plan.bounds.push_back(b);
        }
        if (rebuilt.size() != wav.samples.size())
            throw NumericError("reassembly length mismatch");
        report = seam_report(rebuilt, plan, wav.sample_rate_hz, Span(wav.samples));
    } else {
        const std::string meta_path = a.meta_path.empty() ? a.wav_path + ".json" : a.meta_path;
        json meta = read_json_file(meta_path);
        if (!meta.contains("bounds")) throw InputError(meta_path + " carries no frame bounds");
        FramePlan plan = bounds_from_json(meta["bounds"]);
        report = seam_report(wav.samples, plan, wav.sample_rate_hz, {});
    }
    write_seam_tsv(report, a.out_path);

    std::printf("%zu boundaries: median jump ratio %.4f, median rms ratio %.4f", report.boundaries.size(),
                report.median_jump_ratio, report.median_rms_ratio);
    if (report.median_ref_ratio) std::printf(", median reference ratio %.6f", *report.median_ref_ratio);
    std::printf("\nwrote %s\n", a.out_path.c_str());
    return 0;
}

struct EvalMemoryArgs {
    std::string checkpoint, out_path;
    std::vector<double> lengths;
    std::uint64_t seed = 1;
};

int cmd_eval_memory(const EvalMemoryArgs& a) {
    LoadedDenoiser ld = load_denoiser_checkpoint(a.checkpoint);
    if (ld.config.conditional())
        throw InputError("memory profiling runs the unconditional path; load an unconditional checkpoint");
    NoiseSchedule sched = ld.schedule.build();
    EpsFn eps = denoiser_eps(*ld.model);
    const FrameSpec spec = ld.frame;

    std::vector<double> lengths = a.lengths;
    if (lengths.empty()) lengths = {4.0, 8.0, 16.0, 32.0, 64.0};

    SynthRunner runner = [&](double seconds, SampleSink& sink) -> std::int64_t {
        const std::int64_t target = std::llround(seconds * spec.sample_rate_hz);
        int frames = 1;
        if (target > spec.frame_len)
            frames = 1 + static_cast<int>((target - spec.frame_len + spec.hop() - 1) / spec.hop());
        Rng rng(a.seed);
        return generate_unconditional(eps, sched, frames, spec, rng, sink, {}).total_samples;
    };

    // Warm-up so the model's reusable workspace is allocated before any
    // measured run; afterwards every run sees the same steady state.
    {
        CountSink warm;
        runner(lengths.front(), warm);
    }

    MemoryProfile prof = memory_profile(runner, lengths);
    write_memory_tsv(prof, a.out_path);
    for (const auto& row : prof.rows)
        std::printf("%8.1f s  %10lld samples  peak %llu bytes\n", row.seconds,
                    static_cast<long long>(row.samples), static_cast<unsigned long long>(row.peak_bytes));
    std::printf("flatness ratio (max peak / min peak): %.4f\nwrote %s\n", prof.flatness_ratio, a.out_path.c_str());
    return 0;
}

struct EvalVarianceArgs {
    std::string checkpoint, spec_path, out_path, compare_checkpoint, compare_out, pitch_path;
    int num_seeds = 5;
    std::uint64_t seed_base = 1;
};

int cmd_eval_variance(const EvalVarianceArgs& a) {
    auto inv = PhonemeInventory::default_inventory();
    LoadedDenoiser primary = load_denoiser_checkpoint(a.checkpoint);
    std::optional<LoadedDenoiser> other;
    bool need_energy = primary.config.use_energy;
    bool need_pitch = primary.config.use_pitch;
    if (!a.compare_checkpoint.empty()) {
        other.emplace(load_denoiser_checkpoint(a.compare_checkpoint));
        if (other->frame.sample_rate_hz != primary.frame.sample_rate_hz)
            throw InputError("comparison checkpoints use different sample rates");
        need_energy = need_energy || other->config.use_energy;
        need_pitch = need_pitch || other->config.use_pitch;
    }
    if (a.num_seeds < 2) throw InputError("--seeds must be at least 2");

    // Both models must see identical span timing, so durations and energies
    // come from the spec file only.
    auto entries = load_synth_spec(a.spec_path, inv);
    Utterance utt = build_spec_utterance(entries, inv, primary.frame.sample_rate_hz, "given", "given", "", "",
                                         need_energy, a.pitch_path, need_pitch);

    std::vector<std::uint64_t> seeds;
    seeds.reserve(static_cast<std::size_t>(a.num_seeds));
    for (int i = 0; i < a.num_seeds; ++i) seeds.push_back(a.seed_base + static_cast<std::uint64_t>(i));

    auto make_synth = [&](LoadedDenoiser* ld) -> SeededSynth {
        return [&, ld](std::uint64_t seed) -> std::vector<double> {
            auto pieces = plan_synthesis(utt, ld->frame, inv, want_of(ld->config));
            NoiseSchedule sched = ld->schedule.build();
            Rng rng(seed);
            VectorSink sink;
            EpsFn eps = denoiser_eps(*ld->model);
            synthesize(eps, sched, pieces, ld->frame.overlap_len, rng, sink, {});
            return std::move(sink.samples);
        };
    };

    VarianceReport ra = variance_report(make_synth(&primary), utt, seeds);
    write_variance_tsv(ra, a.out_path);
    std::printf("%s: %zu spans over %zu seeds -> %s\n", mode_of(primary.config).c_str(), ra.rows.size(),
                ra.num_seeds, a.out_path.c_str());

    if (other) {
        VarianceReport rb = variance_report(make_synth(&*other), utt, seeds);
        const std::string bout = a.compare_out.empty() ? a.out_path + ".compare.tsv" : a.compare_out;
        write_variance_tsv(rb, bout);
        VarianceComparison cmp = compare_variance(ra, rb);
        write_json_file(a.out_path + ".compare.json",
                        json{{"primary", mode_of(primary.config)},
                             {"other", mode_of(other->config)},
                             {"spans", cmp.spans},
                             {"tighter", cmp.tighter},
                             {"fraction_tighter", cmp.fraction_tighter}});
        std::printf("%s vs %s: tighter spread on %zu/%zu spans (%.1f%%)\n", mode_of(primary.config).c_str(),
                    mode_of(other->config).c_str(), cmp.tighter, cmp.spans, 100.0 * cmp.fraction_tighter);
    }
    return 0;
}

// ---------------------------------------------------------------- wiring

int run_parsed(int argc, char** argv) {
    CLI::App app{"Autoregressive diffusion waveform synthesizer"};
    app.set_config("--config", "", "Read option defaults from a TOML/INI file; command-line flags win");
    app.require_subcommand(1);

    PrepareArgs pa;
    auto* sp = app.add_subcommand("prepare", "Validate a corpus manifest and write the dataset index and splits");
    sp->add_option("--manifest", pa.manifest, "TSV: wav<TAB>alignment[<TAB>pitch]")->required();
    sp->add_option("--out", pa.out_dir, "Output directory")->required();
    sp->add_option("--rate", pa.rate, "Expected sample rate (0 = take from the first file)");

    TrainArgs ta;
    auto* st = app.add_subcommand("train", "Train the frame denoiser");
    st->add_option("--manifest", ta.manifest, "Training manifest (e.g. prepare's train.tsv)")->required();
    st->add_option("--out", ta.out_dir, "Checkpoint/log directory")->required();
    st->add_option("--mode", ta.mode, "Conditioning mode")
        ->check(CLI::IsMember({"uncond", "phoneme", "cond", "cond+pitch"}));
    st->add_option("--steps", ta.steps, "Optimizer steps");
    st->add_option("--batch", ta.batch, "Batch size");
    st->add_option("--lr", ta.lr, "Learning rate");
    st->add_option("--clip", ta.clip, "Gradient-norm clip");
    st->add_option("--frame-ms", ta.frame_ms, "Frame length in ms (0 = mode default)");
    st->add_option("--overlap-ms", ta.overlap_ms, "Overlap in ms (0 = half the frame)");
    st->add_option("--diffusion-steps", ta.diffusion_steps, "Diffusion chain length S");
    st->add_option("--beta-min", ta.beta_min, "Schedule beta at step 1");
    st->add_option("--beta-max", ta.beta_max, "Schedule beta at step S");
    st->add_option("--layers", ta.layers, "Residual layers");
    st->add_option("--channels", ta.channels, "Residual channels");
    st->add_option("--step-dim", ta.step_dim, "Step embedding width");
    st->add_option("--dilations", ta.dilations, "Dilation cycle, comma separated")->delimiter(',');
    st->add_option("--checkpoint-every", ta.checkpoint_every, "Steps between checkpoints");
    st->add_option("--seed", ta.seed, "RNG seed");
    st->add_option("--stop-below", ta.stop_below, "Early stop when windowed loss falls below this (0 = off)");
    st->add_option("--stop-window", ta.stop_window, "Early-stop window size");
    st->add_option("--resume", ta.resume, "Checkpoint to resume from");
    st->add_option("--rate", ta.rate, "Expected sample rate (0 = take from the first file)");
    st->add_option("--log-every", ta.log_every, "Console log interval in steps (0 = quiet)");

    TrainPredictorArgs tpa;
    auto* stp = app.add_subcommand("train-predictor", "Train the duration or energy predictor");
    stp->add_option("--which", tpa.which, "Predictor kind")->check(CLI::IsMember({"duration", "energy"}))->required();
    stp->add_option("--manifest", tpa.manifest, "Training manifest")->required();
    stp->add_option("--out", tpa.out_dir, "Checkpoint/log directory")->required();
    stp->add_option("--steps", tpa.steps, "Optimizer steps");
    stp->add_option("--batch", tpa.batch, "Batch size");
    stp->add_option("--lr", tpa.lr, "Learning rate");
    stp->add_option("--clip", tpa.clip, "Gradient-norm clip");
    stp->add_option("--seed", tpa.seed, "RNG seed");
    stp->add_option("--val-every", tpa.val_every, "Steps between validation passes");
    stp->add_option("--embed-dim", tpa.embed_dim, "Phoneme embedding width");
    stp->add_option("--hidden", tpa.hidden, "Hidden channels");
    stp->add_option("--dropout", tpa.dropout, "Dropout probability");
    stp->add_option("--rate", tpa.rate, "Expected sample rate (0 = take from the first file)");

    PredictArgs pra;
    auto* spr = app.add_subcommand("predict", "Fill missing durations/energies in a phoneme spec");
    spr->add_option("--spec", pra.spec_path, "Phoneme spec: phoneme[<TAB>duration][<TAB>energy]")->required();
    spr->add_option("--out", pra.out_path, "Completed spec path")->required();
    spr->add_option("--duration-ck", pra.duration_ck, "Duration predictor checkpoint");
    spr->add_option("--energy-ck", pra.energy_ck, "Energy predictor checkpoint");

    SynthArgs sa;
    auto* ss = app.add_subcommand("synth", "Synthesize an utterance from a phoneme spec");
    ss->add_option("--checkpoint", sa.checkpoint, "Denoiser checkpoint")->required();
    ss->add_option("--spec", sa.spec_path, "Phoneme spec: phoneme[<TAB>duration][<TAB>energy]")->required();
    ss->add_option("--out", sa.out_wav, "Output WAV path")->required();
    ss->add_option("--seed", sa.seed, "RNG seed");
    ss->add_option("--durations", sa.durations_mode, "Span durations: from the spec or predicted")
        ->check(CLI::IsMember({"given", "predicted"}));
    ss->add_option("--energy", sa.energy_mode, "Span energies: from the spec or predicted")
        ->check(CLI::IsMember({"given", "predicted"}));
    ss->add_option("--duration-ck", sa.duration_ck, "Duration predictor checkpoint");
    ss->add_option("--energy-ck", sa.energy_ck, "Energy predictor checkpoint");
    ss->add_option("--pitch", sa.pitch_path, "Pitch TSV (required for pitch-conditioned checkpoints)");
    ss->add_flag("--literal-update", sa.literal_update, "Use the cumulative-coefficient reverse update");

    GenerateArgs ga;
    auto* sg = app.add_subcommand("generate", "Generate unconditional audio");
    sg->add_option("--checkpoint", ga.checkpoint, "Unconditional denoiser checkpoint")->required();
    sg->add_option("--out", ga.out_wav, "Output WAV path")->required();
    sg->add_option("--frames", ga.frames, "Number of frames");
    sg->add_option("--seed", ga.seed, "RNG seed");
    sg->add_option("--frame-ms", ga.frame_ms, "Override frame length in ms (0 = training geometry)");
    sg->add_option("--overlap-ms", ga.overlap_ms, "Override overlap in ms (0 = half the frame)");
    sg->add_flag("--literal-update", ga.literal_update, "Use the cumulative-coefficient reverse update");

    auto* se = app.add_subcommand("eval", "Evaluation reports");
    se->require_subcommand(1);

    EvalSeamsArgs esa;
    auto* ses = se->add_subcommand("seams", "Frame-junction discontinuity report");
    ses->add_option("--wav", esa.wav_path, "Waveform to analyze")->required();
    ses->add_option("--out", esa.out_path, "Report TSV path")->required();
    ses->add_option("--meta", esa.meta_path, "Metadata sidecar with frame bounds (default: <wav>.json)");
    ses->add_flag("--reassemble", esa.reassemble, "Segment and reassemble the waveform, compare to the original");
    ses->add_option("--frame-ms", esa.frame_ms, "Frame length for --reassemble");
    ses->add_option("--overlap-ms", esa.overlap_ms, "Overlap for --reassemble (0 = half the frame)");

    EvalMemoryArgs ema;
    auto* sem = se->add_subcommand("memory", "Peak-allocation flatness across output durations");
    sem->add_option("--checkpoint", ema.checkpoint, "Unconditional denoiser checkpoint")->required();
    sem->add_option("--out", ema.out_path, "Report TSV path")->required();
    sem->add_option("--lengths", ema.lengths, "Durations in seconds, comma separated")->delimiter(',');
    sem->add_option("--seed", ema.seed, "RNG seed");

    EvalVarianceArgs eva;
    auto* sev = se->add_subcommand("variance", "Across-seed spread of per-phoneme energy");
    sev->add_option("--checkpoint", eva.checkpoint, "Denoiser checkpoint")->required();
    sev->add_option("--spec", eva.spec_path, "Phoneme spec with durations (and energies if conditioned)")
        ->required();
    sev->add_option("--out", eva.out_path, "Report TSV path")->required();
    sev->add_option("--seeds", eva.num_seeds, "Number of seeds");
    sev->add_option("--seed-base", eva.seed_base, "First seed; the rest are consecutive");
    sev->add_option("--compare-checkpoint", eva.compare_checkpoint, "Second checkpoint to compare spread against");
    sev->add_option("--compare-out", eva.compare_out, "Report TSV for the comparison checkpoint");
    sev->add_option("--pitch", eva.pitch_path, "Pitch TSV for pitch-conditioned checkpoints");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (app.got_subcommand(sp)) return cmd_prepare(pa);
    if (app.got_subcommand(st)) return cmd_train(ta);
    if (app.got_subcommand(stp)) return cmd_train_predictor(tpa);
    if (app.got_subcommand(spr)) return cmd_predict(pra);
    if (app.got_subcommand(ss)) return cmd_synth(sa);
    if (app.got_subcommand(sg)) return cmd_generate(ga);
    if (app.got_subcommand(se)) {
        if (se->got_subcommand(ses)) return cmd_eval_seams(esa);
        if (se->got_subcommand(sem)) return cmd_eval_memory(ema);
        if (se->got_subcommand(sev)) return cmd_eval_variance(eva);
    }
    return 2;
}

}  // namespace

int run_cli(int argc, char** argv) {
    try {
        return run_parsed(argc, argv);
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const ResourceError& e) {
        std::fprintf(stderr, "resource error: %s\n", e.what());
        return 4;
    } catch (const std::bad_alloc&) {
        std::fprintf(stderr, "resource error: out of memory\n");
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

}  // namespace framediff
