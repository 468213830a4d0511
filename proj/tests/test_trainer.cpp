#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "framediff/checkpoint.hpp"
#include "framediff/common.hpp"
#include "framediff/trainer.hpp"
#include "testutil.hpp"

using namespace framediff;
using testutil::TempDir;

namespace {

DenoiserConfig tiny_config() {
    DenoiserConfig cfg;
    cfg.num_layers = 2;
    cfg.channels = 4;
    cfg.dilation_cycle = {1, 2};
    cfg.step_embed_dim = 8;
    return cfg;
}

Utterance ramp_utterance(std::size_t n, int rate_hz) {
    Utterance utt;
    utt.rate_hz = rate_hz;
    utt.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        utt.samples[i] = 0.5 * std::sin(2.0 * 3.14159265358979323846 * 220.0 * static_cast<double>(i) / rate_hz);
    return utt;
}

}  // namespace

TEST_CASE("training example construction") {
    auto utt = ramp_utterance(1000, 8000);
    auto spec = FrameSpec::from_samples(400, 200, 8000);
    auto sched = build_linear_schedule(10, 1e-4, 0.02);
    auto inv = PhonemeInventory::default_inventory();
    TrackRequest want;

    // the stored noise is exactly the rng's gaussian stream
    Rng rng(7);
    Rng clone(0);
    clone.load_state(rng.save_state());
    auto ex = make_example(utt, spec, 0, 3, sched, inv, want, rng);
    REQUIRE(ex.x_s.size() == 400);
    for (std::size_t i = 0; i < 400; ++i) CHECK(ex.eps[i] == clone.gaussian());

    // frame 0: silence context; the noised frame matches the closed form
    for (double v : ex.context) CHECK(v == 0.0);
    auto frames = segment(utt.samples, spec);
    auto expect = q_sample(frames[0].samples, 3, ex.eps, sched);
    CHECK(ex.x_s == expect);
    CHECK(ex.valid_len == 400);
    CHECK(!ex.track.has_phonemes());

    // frame 1: context is the overlap shift of the clean previous frame
    auto ex1 = make_example(utt, spec, 1, 3, sched, inv, want, rng);
    CHECK(ex1.context == overlap_shift(frames[0].samples, spec));

    // final partial frame keeps its valid length
    auto exl = make_example(utt, spec, frames.size() - 1, 3, sched, inv, want, rng);
    CHECK(exl.valid_len == frames.back().valid_len);

    CHECK_THROWS_AS(make_example(utt, spec, frames.size(), 3, sched, inv, want, rng), InputError);
}

TEST_CASE("uniform step draws pass a chi-square test") {
    // the training loop draws s ~ U{1..S}; S=50, 1e5 draws, dof 49,
    // 1% critical value 74.919
    Rng rng(123);
    std::vector<long> counts(50, 0);
    const long N = 100000;
    for (long i = 0; i < N; ++i) {
        int s = rng.uniform_int(1, 50);
        REQUIRE(s >= 1);
        REQUIRE(s <= 50);
        ++counts[static_cast<std::size_t>(s - 1)];
    }
    const double expect = static_cast<double>(N) / 50.0;
    double chi2 = 0.0;
    for (long c : counts) {
        double d = static_cast<double>(c) - expect;
        chi2 += d * d / expect;
    }
    CHECK(chi2 < 74.919);
}

TEST_CASE("masked loss oracle on a zero-output model") {
    Denoiser model(tiny_config());
    Rng rng(1);
    model.init(rng);  // head zero-initialized: eps_hat is identically 0

    TrainExample ex;
    ex.x_s.assign(4, 0.0);
    ex.context.assign(4, 0.0);
    ex.eps = {1.0, 1.0, 1.0, 3.0};
    ex.step = 1;
    ex.valid_len = 3;  // the 3.0 sits in the padded tail and must not count
    CHECK(loss_only(model, {ex}) == 1.0);

    ex.valid_len = 4;
    CHECK(loss_only(model, {ex}) == 3.0);

    TrainExample zero = ex;
    zero.eps.assign(4, 0.0);
    CHECK(loss_only(model, {ex, zero}) == 1.5);

    CHECK_THROWS_AS(loss_only(model, {}), InputError);
    TrainExample none = ex;
    none.valid_len = 0;
    CHECK_THROWS_AS(loss_only(model, {none}), InputError);
}

TEST_CASE("initial loss on unit noise is near one") {
    // large sample: mean of squared standard normals, zero model output
    Denoiser model(tiny_config());
    Rng rng(2);
    model.init(rng);

    Rng noise(99);
    std::vector<TrainExample> batch;
    const std::size_t L = 512;
    for (int b = 0; b < 32; ++b) {
        TrainExample ex;
        ex.x_s.assign(L, 0.0);
        ex.context.assign(L, 0.0);
        ex.eps.resize(L);
        for (auto& e : ex.eps) e = noise.gaussian();
        ex.step = 1;
        ex.valid_len = static_cast<int>(L);
        batch.push_back(std::move(ex));
    }
    double loss = loss_only(model, batch);
    // var of mean of n chi-square(1) draws is 2/n; allow 4 standard errors
    double se = std::sqrt(2.0 / (32.0 * static_cast<double>(L)));
    CHECK(std::abs(loss - 1.0) < 4.0 * se);
}

TEST_CASE("loss gradient matches finite differences") {
    auto cfg = tiny_config();
    Denoiser model(cfg);
    Rng rng(5);
    model.init(rng);
    std::vector<ParamRef> params;
    model.collect(params);
    Rng jitter(6);
    for (auto& pr : params)
        for (auto& v : pr.p->v) v += 0.05 * jitter.gaussian();

    auto utt = ramp_utterance(96, 8000);
    auto spec = FrameSpec::from_samples(32, 16, 8000);
    auto sched = build_linear_schedule(5, 1e-4, 0.02);
    auto inv = PhonemeInventory::default_inventory();
    TrackRequest want;
    Rng data(7);
    std::vector<TrainExample> batch;
    batch.push_back(make_example(utt, spec, 0, 2, sched, inv, want, data));
    batch.push_back(make_example(utt, spec, 1, 4, sched, inv, want, data));

    model.zero_grad();
    loss_and_grad(model, batch);

    const double h = 1e-5;
    for (auto& pr : params) {
        const std::size_t n = pr.p->size();
        for (std::size_t k = 0; k < 2; ++k) {
            std::size_t idx = (k * n) / 2;
            if (idx >= n) idx = n - 1;
            double saved = pr.p->v[idx];
            pr.p->v[idx] = saved + h;
            double lp = loss_only(model, batch);
            pr.p->v[idx] = saved - h;
            double lm = loss_only(model, batch);
            pr.p->v[idx] = saved;
            double fd = (lp - lm) / (2.0 * h);
            double an = pr.p->g[idx];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            INFO(pr.name << "[" << idx << "]");
            CHECK(std::abs(fd - an) / denom < 1e-3);
        }
    }
}

TEST_CASE("batch order does not change loss or gradients") {
    auto cfg = tiny_config();
    Denoiser model(cfg);
    Rng rng(8);
    model.init(rng);
    std::vector<ParamRef> params;
    model.collect(params);
    Rng jitter(9);
    for (auto& pr : params)
        for (auto& v : pr.p->v) v += 0.05 * jitter.gaussian();

    auto utt = ramp_utterance(96, 8000);
    auto spec = FrameSpec::from_samples(32, 16, 8000);
    auto sched = build_linear_schedule(5, 1e-4, 0.02);
    auto inv = PhonemeInventory::default_inventory();
    Rng data(11);
    std::vector<TrainExample> batch;
    for (int f = 0; f < 3; ++f)
        batch.push_back(make_example(utt, spec, static_cast<std::size_t>(f), f + 1, sched, inv, {}, data));
    std::vector<TrainExample> reversed(batch.rbegin(), batch.rend());

    model.zero_grad();
    double la = loss_and_grad(model, batch);
    std::vector<std::vector<double>> ga;
    for (auto& pr : params) ga.push_back(pr.p->g);

    model.zero_grad();
    double lb = loss_and_grad(model, reversed);
    CHECK(la == doctest::Approx(lb).epsilon(1e-12));
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < ga[i].size(); ++j)
            CHECK(params[i].p->g[j] == doctest::Approx(ga[i][j]).epsilon(1e-9));
}

TEST_CASE("adam matches a scalar reference") {
    // single parameter, fixed gradient: hand-computed two steps
    Param p;
    p.resize(1);
    p.v[0] = 1.0;
    std::vector<ParamRef> refs = {{"p", &p}};
    Adam adam(refs, 0.1, 0.9, 0.999, 1e-8);

    p.g[0] = 2.0;
    adam.step();
    // m=0.2, v=0.004, mhat=2, vhat=4: step = 0.1*2/(2+1e-8)
    CHECK(p.v[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));

    double m = 0.2, v2 = 0.004, x = p.v[0];
    p.g[0] = -1.0;
    adam.step();
    m = 0.9 * m + 0.1 * -1.0;
    v2 = 0.999 * v2 + 0.001 * 1.0;
    double mhat = m / (1.0 - 0.81);
    double vhat = v2 / (1.0 - 0.999 * 0.999);
    CHECK(p.v[0] == doctest::Approx(x - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-12));
    CHECK(adam.t() == 2);
}

TEST_CASE("training runs are reproducible") {
    TempDir dir;
    auto inv = PhonemeInventory::default_inventory();
    std::vector<Utterance> corpus = {ramp_utterance(1024, 8000)};
    auto spec = FrameSpec::from_samples(256, 128, 8000);
    ScheduleSpec sspec{10, 1e-4, 0.02};
    auto dcfg = tiny_config();

    TrainConfig tcfg;
    tcfg.steps = 6;
    tcfg.batch_size = 2;
    tcfg.lr = 1e-3;
    tcfg.checkpoint_every = 100;
    tcfg.seed = 42;

    std::vector<double> la, lb;
    tcfg.out_dir = dir.file("a");
    auto ra = train_denoiser(corpus, inv, spec, sspec, dcfg, tcfg, "",
                             [&](long, double l) { la.push_back(l); });
    tcfg.out_dir = dir.file("b");
    auto rb = train_denoiser(corpus, inv, spec, sspec, dcfg, tcfg, "",
                             [&](long, double l) { lb.push_back(l); });

    REQUIRE(la.size() == 6);
    CHECK(la == lb);  // bitwise identical loss traces
    CHECK(ra.steps_done == 6);
    CHECK(ra.last_loss == la.back());

    // the loss actually moves once the head leaves zero
    CHECK(la[0] != la.back());

    // final checkpoints carry identical parameters
    auto cka = load_checkpoint(ra.final_checkpoint);
    auto ckb = load_checkpoint(rb.final_checkpoint);
    REQUIRE(cka.arrays.size() == ckb.arrays.size());
    for (std::size_t i = 0; i < cka.arrays.size(); ++i) {
        CHECK(cka.arrays[i].first == ckb.arrays[i].first);
        CHECK(cka.arrays[i].second == ckb.arrays[i].second);
    }

    // loss log records step<TAB>loss per step
    std::ifstream log(dir.file("a") + "/loss.tsv");
    REQUIRE(log.good());
    std::string line;
    long lines = 0;
    while (std::getline(log, line)) {
        ++lines;
        CHECK(line.find('\t') != std::string::npos);
    }
    CHECK(lines == 6);
}

TEST_CASE("resume continues bit-identically") {
    TempDir dir;
    auto inv = PhonemeInventory::default_inventory();
    std::vector<Utterance> corpus = {ramp_utterance(1024, 8000), ramp_utterance(900, 8000)};
    auto spec = FrameSpec::from_samples(256, 128, 8000);
    ScheduleSpec sspec{10, 1e-4, 0.02};
    auto dcfg = tiny_config();

    TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.lr = 1e-3;
    tcfg.checkpoint_every = 5;
    tcfg.seed = 7;

    // uninterrupted 10-step run
    tcfg.steps = 10;
    tcfg.out_dir = dir.file("full");
    std::vector<double> full_losses;
    train_denoiser(corpus, inv, spec, sspec, dcfg, tcfg, "",
                   [&](long, double l) { full_losses.push_back(l); });

    // 5 steps, then resume to 10 in a fresh directory
    tcfg.steps = 5;
    tcfg.out_dir = dir.file("half");
    auto half = train_denoiser(corpus, inv, spec, sspec, dcfg, tcfg);
    tcfg.steps = 10;
    tcfg.out_dir = dir.file("resumed");
    std::vector<double> tail_losses;
    auto resumed = train_denoiser(corpus, inv, spec, sspec, dcfg, tcfg, half.final_checkpoint,
                                  [&](long, double l) { tail_losses.push_back(l); });

    REQUIRE(tail_losses.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(tail_losses[i] == full_losses[i + 5]);

    auto ck_full = load_checkpoint(dir.file("full") + "/ck_00000010.fdck");
    auto ck_res = load_checkpoint(resumed.final_checkpoint);
    REQUIRE(ck_full.arrays.size() == ck_res.arrays.size());
    for (std::size_t i = 0; i < ck_full.arrays.size(); ++i) {
        CHECK(ck_full.arrays[i].first == ck_res.arrays[i].first);
        CHECK(ck_full.arrays[i].second == ck_res.arrays[i].second);
    }
    CHECK(ck_full.meta.at("train").at("rng") == ck_res.meta.at("train").at("rng"));

    // resuming with a mismatched architecture is rejected
    auto other = dcfg;
    other.channels = 8;
    tcfg.out_dir = dir.file("bad");
    CHECK_THROWS_AS(train_denoiser(corpus, inv, spec, sspec, other, tcfg, half.final_checkpoint), InputError);
}

TEST_CASE("early stop fires when the windowed loss is low enough") {
    TempDir dir;
    auto inv = PhonemeInventory::default_inventory();
    std::vector<Utterance> corpus = {ramp_utterance(512, 8000)};
    auto spec = FrameSpec::from_samples(256, 128, 8000);
    ScheduleSpec sspec{5, 1e-4, 0.02};

    TrainConfig tcfg;
    tcfg.steps = 100;
    tcfg.batch_size = 1;
    tcfg.checkpoint_every = 1000;
    tcfg.seed = 3;
    tcfg.stop_below = 100.0;  // any realistic loss qualifies
    tcfg.stop_window = 3;
    tcfg.out_dir = dir.file("stop");

    auto res = train_denoiser(corpus, inv, spec, sspec, tiny_config(), tcfg);
    CHECK(res.steps_done == 3);
    CHECK(res.smoothed_loss < 100.0);
    CHECK(std::ifstream(res.final_checkpoint).good());
}

TEST_CASE("divergence raises a numeric error naming the step") {
    TempDir dir;
    auto inv = PhonemeInventory::default_inventory();
    std::vector<Utterance> corpus = {ramp_utterance(512, 8000)};
    auto spec = FrameSpec::from_samples(256, 128, 8000);
    ScheduleSpec sspec{5, 1e-4, 0.02};

    TrainConfig tcfg;
    tcfg.steps = 10;
    tcfg.batch_size = 1;
    tcfg.lr = 1e160;  // update magnitude ~lr: overflows the loss immediately
    tcfg.checkpoint_every = 1000;
    tcfg.seed = 3;
    tcfg.out_dir = dir.file("boom");

    try {
        train_denoiser(corpus, inv, spec, sspec, tiny_config(), tcfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("conditional training validates corpus annotations") {
    TempDir dir;
    auto inv = PhonemeInventory::default_inventory();
    std::vector<Utterance> corpus = {ramp_utterance(512, 8000)};  // no spans
    auto spec = FrameSpec::from_samples(256, 128, 8000);
    ScheduleSpec sspec{5, 1e-4, 0.02};
    auto dcfg = tiny_config();
    dcfg.use_phonemes = true;

    TrainConfig tcfg;
    tcfg.steps = 2;
    tcfg.batch_size = 1;
    tcfg.out_dir = dir.file("c");
    CHECK_THROWS_AS(train_denoiser(corpus, inv, spec, sspec, dcfg, tcfg), InputError);

    dcfg.use_phonemes = false;
    dcfg.use_pitch = true;
    CHECK_THROWS_AS(train_denoiser(corpus, inv, spec, sspec, dcfg, tcfg), InputError);
}

TEST_CASE("train config validation") {
    TrainConfig ok;
    ok.validate();
    TrainConfig bad = ok;
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = ok;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = ok;
    bad.stop_window = 0;
    CHECK_THROWS_AS(bad.validate(), InputError);
}
