#include "framediff/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>

#include "framediff/checkpoint.hpp"

namespace framediff {

void TrainConfig::validate() const {
    if (steps <= 0 || batch_size <= 0) throw InputError("TrainConfig: non-positive steps or batch size");
    if (lr <= 0 || clip_norm <= 0) throw InputError("TrainConfig: non-positive learning rate or clip norm");
    if (checkpoint_every <= 0) throw InputError("TrainConfig: non-positive checkpoint cadence");
    if (stop_window <= 0) throw InputError("TrainConfig: non-positive stop window");
}

TrainExample make_example(const Utterance& utt, const FrameSpec& spec, std::size_t frame_index, int step,
                          const NoiseSchedule& sched, const PhonemeInventory& inv, const TrackRequest& want,
                          Rng& rng) {
    auto frames = segment(utt.samples, spec);
    if (frame_index >= frames.size()) throw InputError("make_example: frame index out of range");
    const Frame& fr = frames[frame_index];
    const auto L = fr.samples.size();

    TrainExample ex;
    ex.step = step;
    ex.valid_len = fr.valid_len;
    ex.context = frame_index == 0 ? silence_frame(spec) : overlap_shift(frames[frame_index - 1].samples, spec);
    ex.eps.resize(L);
    for (auto& e : ex.eps) e = rng.gaussian();
    ex.x_s = q_sample(fr.samples, step, ex.eps, sched);

    if (want.phonemes || want.energy || want.pitch) {
        const std::int64_t start = static_cast<std::int64_t>(frame_index) * spec.hop();
        ex.track = build_track(utt, start, start + static_cast<std::int64_t>(L), inv, want);
    }
    return ex;
}

namespace {

double run_batch(Denoiser& model, const std::vector<TrainExample>& batch, bool with_grad) {
    if (batch.empty()) throw InputError("loss: empty batch");
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    std::vector<double> eps_hat, d_eps;
    double total = 0.0;
    for (const auto& ex : batch) {
        const std::size_t L = ex.x_s.size();
        const auto valid = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(ex.valid_len), L));
        if (valid == 0) throw InputError("loss: example with no valid samples");
        eps_hat.assign(L, 0.0);
        const ConditionTrack* track = ex.track.any() ? &ex.track : nullptr;
        if (with_grad)
            model.forward_train(ex.x_s, ex.context, track, ex.step, eps_hat);
        else
            model.forward(ex.x_s, ex.context, track, ex.step, eps_hat);

        double acc = 0.0;
        for (std::size_t i = 0; i < valid; ++i) {
            double err = eps_hat[i] - ex.eps[i];
            acc += err * err;
        }
        total += acc / static_cast<double>(valid);

        if (with_grad) {
            d_eps.assign(L, 0.0);
            const double scale = 2.0 * inv_batch / static_cast<double>(valid);
            for (std::size_t i = 0; i < valid; ++i) d_eps[i] = scale * (eps_hat[i] - ex.eps[i]);
            model.backward(d_eps);
        }
    }
    return total * inv_batch;
}

}  // namespace

double loss_and_grad(Denoiser& model, const std::vector<TrainExample>& batch) { return run_batch(model, batch, true); }

double loss_only(Denoiser& model, const std::vector<TrainExample>& batch) { return run_batch(model, batch, false); }

Adam::Adam(std::vector<ParamRef> refs, double lr, double beta1, double beta2, double eps)
    : refs_(std::move(refs)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.resize(refs_.size());
    v_.resize(refs_.size());
    for (std::size_t i = 0; i < refs_.size(); ++i) {
        m_[i].assign(refs_[i].p->size(), 0.0);
        v_[i].assign(refs_[i].p->size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < refs_.size(); ++i) {
        Param& p = *refs_[i].p;
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = p.g[j];
            m[j] = b1_ * m[j] + (1.0 - b1_) * g;
            v[j] = b2_ * v[j] + (1.0 - b2_) * g * g;
            p.v[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
        }
    }
}

namespace {

// Fisher-Yates driven by the train rng so the order is checkpointable.
void shuffle_order(std::vector<std::size_t>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
}

struct DataCursor {
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    long epoch = 0;

    std::size_t next(std::size_t n, Rng& rng) {
        if (order.size() != n) {
            order.resize(n);
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            pos = order.size();  // force a reshuffle on first use
        }
        if (pos >= order.size()) {
            shuffle_order(order, rng);
            pos = 0;
            ++epoch;
        }
        return order[pos++];
    }
};

void save_train_checkpoint(const std::string& path, Denoiser& model, Adam& adam, const ScheduleSpec& sspec,
                           const TrainConfig& tcfg, const FrameSpec& spec, long step, const DataCursor& cursor,
                           Rng& rng) {
    Checkpoint ck;
    ck.kind = "denoiser";
    ck.meta["config"] = denoiser_config_to_json(model.config());
    ck.meta["schedule"] = schedule_spec_to_json(sspec);
    ck.meta["frame"] = {{"frame_ms", spec.frame_len_ms},
                        {"overlap_ms", spec.overlap_ms},
                        {"rate_hz", spec.sample_rate_hz}};
    ck.meta["train"] = {{"step", step},
                        {"seed", tcfg.seed},
                        {"adam_t", adam.t()},
                        {"rng", rng.save_state()},
                        {"epoch", cursor.epoch},
                        {"order", cursor.order},
                        {"pos", cursor.pos}};
    const auto& refs = adam.refs();
    for (std::size_t i = 0; i < refs.size(); ++i) {
        ck.arrays.emplace_back("param." + refs[i].name, refs[i].p->v);
        ck.arrays.emplace_back("adam.m." + refs[i].name, adam.moment1(i));
        ck.arrays.emplace_back("adam.v." + refs[i].name, adam.moment2(i));
    }
    save_checkpoint(path, ck);
}

}  // namespace

TrainResult train_denoiser(const std::vector<Utterance>& corpus, const PhonemeInventory& inv, const FrameSpec& spec,
                           const ScheduleSpec& sspec, const DenoiserConfig& dcfg, const TrainConfig& tcfg,
                           const std::string& resume_path, const TrainHook& hook) {
    tcfg.validate();
    dcfg.validate();
    if (corpus.empty()) throw InputError("train: empty corpus");
    if (tcfg.out_dir.empty()) throw InputError("train: out_dir not set");
    std::filesystem::create_directories(tcfg.out_dir);

    NoiseSchedule sched = sspec.build();
    Denoiser model(dcfg);
    Rng rng(tcfg.seed);
    model.init(rng);

    std::vector<ParamRef> refs;
    model.collect(refs);
    Adam adam(refs, tcfg.lr, tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);

    DataCursor cursor;
    long start_step = 0;

    if (!resume_path.empty()) {
        Checkpoint ck = load_checkpoint(resume_path);
        if (ck.kind != "denoiser") throw InputError("resume: checkpoint kind is '" + ck.kind + "', expected denoiser");
        DenoiserConfig saved = denoiser_config_from_json(ck.meta.at("config"));
        if (denoiser_config_to_json(saved) != denoiser_config_to_json(dcfg))
            throw InputError("resume: checkpoint architecture does not match the requested config");
        for (std::size_t i = 0; i < refs.size(); ++i) {
            auto restore = [&](const std::string& name, std::vector<double>& dst) {
                const auto* src = ck.find(name);
                if (!src || src->size() != dst.size()) throw InputError("resume: missing or mis-sized array " + name);
                dst = *src;
            };
            restore("param." + refs[i].name, refs[i].p->v);
            restore("adam.m." + refs[i].name, adam.moment1(i));
            restore("adam.v." + refs[i].name, adam.moment2(i));
        }
        const auto& train = ck.meta.at("train");
        start_step = train.at("step").get<long>();
        adam.set_t(train.at("adam_t").get<long>());
        rng.load_state(train.at("rng").get<std::string>());
        cursor.epoch = train.at("epoch").get<long>();
        cursor.order = train.at("order").get<std::vector<std::size_t>>();
        cursor.pos = train.at("pos").get<std::size_t>();
    }

    TrackRequest want{dcfg.use_phonemes, dcfg.use_energy, dcfg.use_pitch};
    if (want.phonemes || want.energy) {
        for (const auto& utt : corpus)
            if (utt.spans.empty()) throw InputError("train: conditional training requires alignments for every utterance");
    }
    if (want.pitch) {
        for (const auto& utt : corpus)
            if (!utt.pitch) throw InputError("train: pitch conditioning requires a pitch series for every utterance");
    }

    // frame counts are fixed per utterance; precompute for the frame draw
    std::vector<int> frame_counts(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto frames = segment(corpus[i].samples, spec);
        frame_counts[i] = static_cast<int>(frames.size());
    }

    std::ofstream loss_log(tcfg.out_dir + "/loss.tsv", start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!loss_log) throw ResourceError("train: cannot open loss log in " + tcfg.out_dir);

    std::deque<double> window;
    double wsum = 0.0;
    TrainResult result;
    std::vector<TrainExample> batch;
    std::vector<std::size_t> batch_ids;

    for (long step = start_step; step < tcfg.steps; ++step) {
        batch.clear();
        batch_ids.clear();
        for (int b = 0; b < tcfg.batch_size; ++b) {
            std::size_t idx = cursor.next(corpus.size(), rng);
            batch_ids.push_back(idx);
            int frame = rng.uniform_int(0, frame_counts[idx] - 1);
            int s = rng.uniform_int(1, sched.num_steps());
            auto ex = make_example(corpus[idx], spec, static_cast<std::size_t>(frame), s, sched, inv, want, rng);
            if (!tcfg.mask_padding) ex.valid_len = static_cast<int>(ex.x_s.size());
            batch.push_back(std::move(ex));
        }

        model.zero_grad();
        double loss = loss_and_grad(model, batch);
        if (!std::isfinite(loss)) {
            std::string ids;
            for (auto id : batch_ids) ids += (ids.empty() ? "" : ",") + std::to_string(id);
            throw NumericError("train: non-finite loss at step " + std::to_string(step + 1) + " (batch utterances " +
                               ids + ")");
        }
        clip_grad_norm(refs, tcfg.clip_norm);
        adam.step();

        long done = step + 1;
        loss_log << done << '\t' << loss << '\n';
        loss_log.flush();
        if (hook) hook(done, loss);

        window.push_back(loss);
        wsum += loss;
        if (static_cast<int>(window.size()) > tcfg.stop_window) {
            wsum -= window.front();
            window.pop_front();
        }
        result.steps_done = done;
        result.last_loss = loss;
        result.smoothed_loss = wsum / static_cast<double>(window.size());

        bool stop = tcfg.stop_below > 0.0 && static_cast<int>(window.size()) == tcfg.stop_window &&
                    result.smoothed_loss < tcfg.stop_below;
        if (done % tcfg.checkpoint_every == 0 || done == tcfg.steps || stop) {
            char name[32];
            std::snprintf(name, sizeof(name), "ck_%08ld.fdck", done);
            std::string path = tcfg.out_dir + "/" + name;
            save_train_checkpoint(path, model, adam, sspec, tcfg, spec, done, cursor, rng);
            result.final_checkpoint = path;
        }
        if (stop) break;
    }
    if (result.final_checkpoint.empty()) {
        std::string path = tcfg.out_dir + "/ck_final.fdck";
        save_train_checkpoint(path, model, adam, sspec, tcfg, spec, result.steps_done, cursor, rng);
        result.final_checkpoint = path;
    }
    return result;
}

}  // namespace framediff
