#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "framediff/common.hpp"
#include "framediff/sampler.hpp"
#include "testutil.hpp"

using namespace framediff;

namespace {

const EpsFn kZeroEps = [](Span, Span, const ConditionTrack*, int, MutSpan out) {
    std::fill(out.begin(), out.end(), 0.0);
};

SampleOptions unclamped_deterministic() {
    SampleOptions o;
    o.clamp_output = false;
    o.deterministic = true;
    return o;
}

}  // namespace

TEST_CASE("single-step chain reproduces the update formula exactly") {
    NoiseSchedule sched(1, {0.1});
    const std::size_t L = 16;
    std::vector<double> ctx(L, 0.0);

    // an estimator with real structure so the formula is exercised
    EpsFn fn = [](Span x, Span, const ConditionTrack*, int step, MutSpan out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.25 * std::tanh(x[i]) + 0.01 * step;
    };

    Rng rng(41);
    Rng clone(0);
    clone.load_state(rng.save_state());

    SampleOptions opts;
    opts.clamp_output = false;
    auto x0 = sample_frame(fn, sched, L, ctx, nullptr, rng, opts);

    // replay: initial draw, one update with sigma(1) = 0 and no injection
    std::vector<double> x1(L);
    for (auto& v : x1) v = clone.gaussian();
    const double c1 = 1.0 / std::sqrt(sched.alpha(1));
    const double c2 = sched.beta(1) / std::sqrt(1.0 - sched.alpha_bar(1));
    std::vector<double> eps(L);
    fn(x1, ctx, nullptr, 1, eps);
    for (std::size_t i = 0; i < L; ++i)
        CHECK(x0[i] == doctest::Approx(c1 * (x1[i] - c2 * eps[i])).epsilon(1e-14));
}

TEST_CASE("zero-estimator chain collapses to a closed-form scaling") {
    NoiseSchedule sched(3, {0.1, 0.2, 0.3});
    const std::size_t L = 32;
    std::vector<double> ctx(L, 0.0);

    Rng rng(17);
    Rng clone(0);
    clone.load_state(rng.save_state());
    std::vector<double> x3(L);
    for (auto& v : x3) v = clone.gaussian();

    SUBCASE("standard ancestral update") {
        auto x0 = sample_frame(kZeroEps, sched, L, ctx, nullptr, rng, unclamped_deterministic());
        // product of 1/sqrt(alpha_s) over the chain: 1/sqrt(alpha_bar(3)),
        // alpha_bar(3) = 0.9 * 0.8 * 0.7 = 0.504
        for (std::size_t i = 0; i < L; ++i)
            CHECK(x0[i] == doctest::Approx(x3[i] / std::sqrt(0.504)).epsilon(1e-12));
    }

    SUBCASE("cumulative-coefficient variant") {
        auto opts = unclamped_deterministic();
        opts.literal_update = true;
        auto x0 = sample_frame(kZeroEps, sched, L, ctx, nullptr, rng, opts);
        // leading factors 1/sqrt(alpha_bar(2)) and 1/sqrt(alpha_bar(1)),
        // then an identity step: 1/sqrt(0.72 * 0.9) = 1/sqrt(0.648)
        for (std::size_t i = 0; i < L; ++i)
            CHECK(x0[i] == doctest::Approx(x3[i] / std::sqrt(0.648)).epsilon(1e-12));
    }
}

TEST_CASE("trace records the chain structure") {
    NoiseSchedule sched(3, {0.1, 0.2, 0.3});
    const std::size_t L = 8;
    std::vector<double> ctx(L, 0.0);

    SUBCASE("standard chain with noise") {
        Rng rng(5);
        SampleTrace trace;
        sample_frame(kZeroEps, sched, L, ctx, nullptr, rng, {}, &trace);
        REQUIRE(trace.steps.size() == 3);
        CHECK(trace.steps == std::vector<int>{3, 2, 1});
        CHECK(trace.noise_injected == std::vector<bool>{true, true, false});
        CHECK(trace.noise_scale[0] == sched.sigma(3));
        CHECK(trace.noise_scale[1] == sched.sigma(2));
        CHECK(trace.noise_scale.back() == 0.0);
    }

    SUBCASE("deterministic chain never injects") {
        Rng rng(5);
        SampleTrace trace;
        auto opts = unclamped_deterministic();
        sample_frame(kZeroEps, sched, L, ctx, nullptr, rng, opts, &trace);
        CHECK(trace.noise_injected == std::vector<bool>{false, false, false});
    }

    SUBCASE("cumulative variant ends with an identity step") {
        Rng rng(5);
        SampleTrace trace;
        auto opts = unclamped_deterministic();
        opts.literal_update = true;
        sample_frame(kZeroEps, sched, L, ctx, nullptr, rng, opts, &trace);
        CHECK(trace.steps == std::vector<int>{2, 1, 0});
    }
}

TEST_CASE("every update equals the posterior-mean form") {
    // record each (x, eps) the chain visits and verify both algebraic forms
    // of the transition agree with the value the chain actually produced
    NoiseSchedule sched = build_linear_schedule(5, 0.05, 0.3);
    const std::size_t L = 12;
    std::vector<double> ctx(L, 0.0);

    std::vector<std::vector<double>> xs, epses;
    EpsFn fn = [&](Span x, Span, const ConditionTrack*, int step, MutSpan out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.2 * std::sin(x[i] + step);
        xs.emplace_back(x.begin(), x.end());
        epses.emplace_back(out.begin(), out.end());
    };

    Rng rng(29);
    auto x_final = sample_frame(fn, sched, L, ctx, nullptr, rng, unclamped_deterministic());
    REQUIRE(xs.size() == 5);

    for (int k = 0; k < 5; ++k) {
        const int s = 5 - k;  // the step this record was evaluated at
        const auto& x = xs[static_cast<std::size_t>(k)];
        const auto& eh = epses[static_cast<std::size_t>(k)];
        const auto& next = k == 4 ? x_final : xs[static_cast<std::size_t>(k) + 1];

        const double ab = sched.alpha_bar(s);
        const double ab_prev = sched.alpha_bar(s - 1);
        const double beta = sched.beta(s);
        for (std::size_t i = 0; i < L; ++i) {
            const double update = (x[i] - beta / std::sqrt(1.0 - ab) * eh[i]) / std::sqrt(sched.alpha(s));
            const double x0_hat = (x[i] - std::sqrt(1.0 - ab) * eh[i]) / std::sqrt(ab);
            const double mu = std::sqrt(ab_prev) * beta / (1.0 - ab) * x0_hat +
                              std::sqrt(sched.alpha(s)) * (1.0 - ab_prev) / (1.0 - ab) * x[i];
            CHECK(next[i] == doctest::Approx(update).epsilon(1e-12));
            CHECK(mu == doctest::Approx(update).epsilon(1e-12));
        }
    }
}

TEST_CASE("same seed gives identical frames, different seeds differ") {
    NoiseSchedule sched = build_linear_schedule(8, 1e-3, 0.1);
    const std::size_t L = 64;
    std::vector<double> ctx(L, 0.0);

    Rng a(100), b(100), c(101);
    auto xa = sample_frame(kZeroEps, sched, L, ctx, nullptr, a);
    auto xb = sample_frame(kZeroEps, sched, L, ctx, nullptr, b);
    auto xc = sample_frame(kZeroEps, sched, L, ctx, nullptr, c);
    CHECK(xa == xb);
    CHECK(xa != xc);

    // output respects the clamp
    for (double v : xa) {
        CHECK(v <= 1.0);
        CHECK(v >= -1.0);
    }
}

TEST_CASE("frame sampling validates its inputs") {
    NoiseSchedule sched(1, {0.1});
    Rng rng(1);
    std::vector<double> ctx(8, 0.0);
    CHECK_THROWS_AS(sample_frame(kZeroEps, sched, 0, Span(ctx).first(0), nullptr, rng), InputError);
    CHECK_THROWS_AS(sample_frame(kZeroEps, sched, 9, ctx, nullptr, rng), InputError);

    EpsFn bad = [](Span, Span, const ConditionTrack*, int, MutSpan out) {
        std::fill(out.begin(), out.end(), std::numeric_limits<double>::infinity());
    };
    CHECK_THROWS_AS(sample_frame(bad, sched, 8, ctx, nullptr, rng), NumericError);
}

TEST_CASE("utterance synthesis chains frames through their overlap") {
    auto spec = FrameSpec::from_samples(1000, 500, 8000);
    NoiseSchedule sched = build_linear_schedule(4, 1e-3, 0.1);
    const int S = sched.num_steps();

    // record the context passed at the first chain step of every frame
    std::vector<std::vector<double>> first_ctx;
    EpsFn fn = [&](Span, Span ctx, const ConditionTrack*, int step, MutSpan out) {
        if (step == S) first_ctx.emplace_back(ctx.begin(), ctx.end());
        std::fill(out.begin(), out.end(), 0.0);
    };

    FramePlan plan = FramePlan::fixed(3, spec);
    std::vector<SynthPiece> pieces(3);
    for (std::size_t i = 0; i < 3; ++i) pieces[i].bound = plan.bounds[i];

    Rng rng(7);
    VectorSink sink;
    auto res = synthesize(fn, sched, pieces, spec.overlap_len, rng, sink);
    CHECK(res.frames == 3);
    CHECK(res.total_samples == 2000);
    CHECK(sink.samples.size() == 2000);

    REQUIRE(first_ctx.size() == 3);
    for (double v : first_ctx[0]) CHECK(v == 0.0);  // silence start
    // frame 1's context is the tail of frame 0 (sink holds frame 0 verbatim)
    for (std::size_t i = 0; i < 500; ++i)
        CHECK(first_ctx[1][i] == sink.samples[500 + i]);
    for (std::size_t i = 500; i < 1000; ++i) CHECK(first_ctx[1][i] == 0.0);

    CHECK_THROWS_AS(synthesize(fn, sched, {}, 500, rng, sink), InputError);
    CHECK_THROWS_AS(synthesize(fn, sched, pieces, -1, rng, sink), InputError);
}

TEST_CASE("unconditional generation emits the planned length") {
    auto spec = FrameSpec::from_samples(400, 100, 8000);
    NoiseSchedule sched = build_linear_schedule(3, 1e-3, 0.1);

    Rng rng(9);
    VectorSink one;
    auto r1 = generate_unconditional(kZeroEps, sched, 1, spec, rng, one);
    CHECK(r1.frames == 1);
    CHECK(one.samples.size() == 400);

    Rng rng2(9);
    VectorSink three;
    auto r3 = generate_unconditional(kZeroEps, sched, 3, spec, rng2, three);
    CHECK(r3.frames == 3);
    CHECK(three.samples.size() == 400 + 2 * 300);

    // the first frame of both runs used the same draws
    for (std::size_t i = 0; i < 400; ++i) CHECK(one.samples[i] == three.samples[i]);

    Rng rng3(9);
    CHECK_THROWS_AS(generate_unconditional(kZeroEps, sched, 0, spec, rng3, one), InputError);
}

TEST_CASE("synthesis planning attaches per-frame tracks") {
    auto inv = PhonemeInventory::default_inventory();
    auto utt = testutil::build_utterance({{"AA1", 0.06, 0.3}, {"B", 0.06, 0.5}, {"T", 0.08, 0.4}}, 8000);
    auto spec = FrameSpec::from_samples(480, 160, 8000);

    TrackRequest want;
    want.phonemes = true;
    want.energy = true;
    auto pieces = plan_synthesis(utt, spec, inv, want);
    auto plan = plan_frames(utt.spans, spec, utt.total_samples(), 8000);
    REQUIRE(pieces.size() == plan.bounds.size());
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        CHECK(pieces[i].bound.start == plan.bounds[i].start);
        CHECK(pieces[i].bound.end == plan.bounds[i].end);
        REQUIRE(pieces[i].track.has_value());
        CHECK(pieces[i].track->length() == static_cast<std::size_t>(pieces[i].bound.len()));
        CHECK(pieces[i].track->has_phonemes());
        CHECK(pieces[i].track->has_energy());
        CHECK(!pieces[i].track->has_pitch());
    }

    auto bare = plan_synthesis(utt, spec, inv, {});
    for (const auto& p : bare) CHECK(!p.track.has_value());
}
