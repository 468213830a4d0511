#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "framediff/common.hpp"
#include "framediff/denoiser.hpp"
#include "framediff/nn.hpp"
#include "framediff/rng.hpp"

using namespace framediff;

namespace {

DenoiserConfig toy_config() {
    DenoiserConfig cfg;
    cfg.num_layers = 4;
    cfg.channels = 8;
    cfg.dilation_cycle = {1, 2, 4, 8};
    cfg.step_embed_dim = 16;
    return cfg;
}

}  // namespace

TEST_CASE("step embedding basics") {
    auto e0 = step_embedding(0, 8);
    REQUIRE(e0.size() == 8);
    for (int j = 0; j < 4; ++j) CHECK(e0[static_cast<std::size_t>(j)] == 0.0);
    for (int j = 4; j < 8; ++j) CHECK(e0[static_cast<std::size_t>(j)] == 1.0);

    // first sine channel oscillates at unit frequency
    auto e3 = step_embedding(3, 8);
    CHECK(e3[0] == doctest::Approx(std::sin(3.0)).epsilon(1e-12));
    CHECK(e3[4] == doctest::Approx(std::cos(3.0)).epsilon(1e-12));

    // last channel pair uses the 1/10000 frequency
    CHECK(e3[3] == doctest::Approx(std::sin(3.0 / 10000.0)).epsilon(1e-12));

    // dim=2 has a single frequency pair and must not divide by zero
    auto e2 = step_embedding(5, 2);
    REQUIRE(e2.size() == 2);
    CHECK(e2[0] == doctest::Approx(std::sin(5.0)).epsilon(1e-12));
    CHECK(e2[1] == doctest::Approx(std::cos(5.0)).epsilon(1e-12));

    CHECK_THROWS_AS(step_embedding(1, 3), InputError);
    CHECK_THROWS_AS(step_embedding(-1, 8), InputError);
}

TEST_CASE("step embedding separates every step index") {
    const int dim = 32;
    std::set<std::vector<double>> seen;
    for (int s = 0; s <= 200; ++s) seen.insert(step_embedding(s, dim));
    CHECK(seen.size() == 201);
}

TEST_CASE("config validation and receptive field") {
    DenoiserConfig cfg;  // defaults
    cfg.validate();
    CHECK(cfg.receptive_half_width() == 12285);
    CHECK(cfg.dilation_at(0) == 1);
    CHECK(cfg.dilation_at(11) == 2048);
    CHECK(cfg.dilation_at(12) == 1);  // cycle wraps
    CHECK(cfg.dilation_at(35) == 2048);

    auto toy = toy_config();
    toy.validate();
    CHECK(toy.receptive_half_width() == 15);

    DenoiserConfig bad = toy;
    bad.num_layers = 0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = toy;
    bad.channels = 0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = toy;
    bad.dilation_cycle.clear();
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = toy;
    bad.step_embed_dim = 7;  // must be even
    CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("multi-scale conv zero and locality properties") {
    Rng rng(11);
    MultiScaleConv mrb(3, 5, {3, 5, 7}, 4);
    mrb.init(rng);
    REQUIRE(mrb.branches.size() == 3);
    for (auto& br : mrb.branches) std::fill(br.b.v.begin(), br.b.v.end(), 0.0);

    const std::size_t len = 80;
    Plane x(3, len), y(5, len);

    // zero input with zero bias gives exactly zero output
    mrb.forward(x, y);
    for (double v : y.data()) CHECK(v == 0.0);

    // an impulse reaches at most 3*dilation positions to each side (kernel 7)
    x.at(1, 40) = 1.0;
    mrb.forward(x, y);
    bool outside_clean = true;
    for (int c = 0; c < 5; ++c)
        for (std::size_t t = 0; t < len; ++t) {
            auto dist = t > 40 ? t - 40 : 40 - t;
            if (dist > 12 && y.at(c, t) != 0.0) outside_clean = false;
        }
    CHECK(outside_clean);

    // accumulate adds on top of existing contents
    Plane y2(5, len);
    for (auto& v : y2.data()) v = 1.5;
    mrb.forward_accumulate(x, y2);
    for (int c = 0; c < 5; ++c)
        for (std::size_t t = 0; t < len; ++t)
            CHECK(y2.at(c, t) == doctest::Approx(1.5 + y.at(c, t)).epsilon(1e-12));
}

TEST_CASE("fresh model outputs exactly zero") {
    auto cfg = toy_config();
    Denoiser model(cfg);
    Rng rng(3);
    model.init(rng);

    const std::size_t L = 64;
    std::vector<double> x(L), ctx(L), out(L, 123.0);
    Rng data(5);
    for (auto& v : x) v = data.gaussian();
    for (auto& v : ctx) v = data.gaussian();

    model.forward(Span(x), Span(ctx), nullptr, 7, MutSpan(out));
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("forward output length and determinism") {
    auto cfg = toy_config();
    cfg.use_phonemes = true;
    cfg.use_energy = true;
    cfg.use_pitch = true;
    Denoiser model(cfg);
    Rng rng(3);
    model.init(rng);

    // perturb the zero-initialized head so the output is nontrivial
    std::vector<ParamRef> params;
    model.collect(params);
    Rng jitter(9);
    for (auto& pr : params)
        for (auto& v : pr.p->v) v += 0.01 * jitter.gaussian();

    const std::size_t L = 50;
    ConditionTrack track;
    track.phoneme_ids.assign(L, 3);
    track.energy.assign(L, 0.25);
    track.pitch.assign(L, 120.0);

    std::vector<double> x(L), ctx(L), a(L), b(L);
    Rng data(5);
    for (auto& v : x) v = data.gaussian();
    for (auto& v : ctx) v = data.gaussian();

    model.forward(Span(x), Span(ctx), &track, 2, MutSpan(a));
    model.forward(Span(x), Span(ctx), &track, 2, MutSpan(b));
    CHECK(a == b);  // workspace reuse must not leak state

    bool nontrivial = false;
    for (double v : a)
        if (v != 0.0) nontrivial = true;
    CHECK(nontrivial);

    // a different step changes the output
    model.forward(Span(x), Span(ctx), &track, 3, MutSpan(b));
    CHECK(a != b);

    // training path computes the same function
    model.forward_train(Span(x), Span(ctx), &track, 2, MutSpan(b));
    for (std::size_t i = 0; i < L; ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-12));
}

TEST_CASE("condition track requirements are enforced") {
    auto cfg = toy_config();
    cfg.use_phonemes = true;
    Denoiser model(cfg);
    Rng rng(3);
    model.init(rng);

    const std::size_t L = 32;
    std::vector<double> x(L, 0.0), ctx(L, 0.0), out(L);

    CHECK_THROWS_AS(model.forward(Span(x), Span(ctx), nullptr, 1, MutSpan(out)), InputError);

    ConditionTrack short_track;
    short_track.phoneme_ids.assign(L - 1, 1);
    CHECK_THROWS_AS(model.forward(Span(x), Span(ctx), &short_track, 1, MutSpan(out)), InputError);

    ConditionTrack bad_id;
    bad_id.phoneme_ids.assign(L, cfg.inventory_size);  // one past the last row
    CHECK_THROWS_AS(model.forward(Span(x), Span(ctx), &bad_id, 1, MutSpan(out)), InputError);

    ConditionTrack ok;
    ok.phoneme_ids.assign(L, 1);
    CHECK_NOTHROW(model.forward(Span(x), Span(ctx), &ok, 1, MutSpan(out)));

    // an unconditional model rejects a supplied track
    auto plain = toy_config();
    Denoiser uncond(plain);
    uncond.init(rng);
    CHECK_THROWS_AS(uncond.forward(Span(x), Span(ctx), &ok, 1, MutSpan(out)), InputError);

    // mismatched context length
    std::vector<double> shraw(L - 3, 0.0);
    CHECK_THROWS_AS(model.forward(Span(x), Span(shraw), &ok, 1, MutSpan(out)), InputError);
}

TEST_CASE("parameter inventory covers every conditioning block") {
    auto cfg = toy_config();
    cfg.use_phonemes = true;
    cfg.use_energy = true;
    cfg.use_pitch = true;
    Denoiser model(cfg);
    Rng rng(3);
    model.init(rng);

    std::vector<ParamRef> params;
    model.collect(params);
    std::set<std::string> names;
    for (auto& pr : params) names.insert(pr.name);
    CHECK(names.size() == params.size());  // unique names

    auto has = [&](const std::string& n) { return names.count(n) > 0; };
    CHECK(has("in.w"));
    CHECK(has("embed.table"));
    CHECK(has("step.fc1.w"));
    CHECK(has("step.fc2.b"));
    CHECK(has("layer0.dilated.w"));
    CHECK(has("layer0.step.w"));
    CHECK(has("layer0.ctx.k3.w"));
    CHECK(has("layer0.phon.k5.w"));
    CHECK(has("layer0.energy.k7.w"));
    CHECK(has("layer0.pitch.k3.b"));
    CHECK(has("layer3.out.w"));
    CHECK(has("final1.w"));
    CHECK(has("final2.w"));

    std::size_t total = 0;
    for (auto& pr : params) total += pr.p->size();
    CHECK(model.param_count() == total);

    // unconditional model carries no embedding or condition branches
    Denoiser plain(toy_config());
    plain.init(rng);
    std::vector<ParamRef> pp;
    plain.collect(pp);
    std::set<std::string> pn;
    for (auto& pr : pp) pn.insert(pr.name);
    CHECK(!pn.count("embed.table"));
    CHECK(!pn.count("layer0.phon.k3.w"));
    CHECK(pn.count("layer0.ctx.k3.w"));
}

TEST_CASE("finite differences match the hand-written backward") {
    // Tiny conditional model so the check covers every array kind:
    // input conv, step MLP, embedding, all four MRBs, gates, head.
    DenoiserConfig cfg;
    cfg.num_layers = 2;
    cfg.channels = 4;
    cfg.dilation_cycle = {1, 2};
    cfg.cond_kernels = {3, 5};
    cfg.step_embed_dim = 8;
    cfg.inventory_size = 6;
    cfg.use_phonemes = true;
    cfg.use_energy = true;
    cfg.use_pitch = true;

    Denoiser model(cfg);
    Rng rng(17);
    model.init(rng);
    std::vector<ParamRef> params;
    model.collect(params);
    // head is zero-initialized; give every array signal so no path is trivially flat
    Rng jitter(23);
    for (auto& pr : params)
        for (auto& v : pr.p->v) v += 0.05 * jitter.gaussian();

    const std::size_t L = 16;
    std::vector<double> x(L), ctx(L), out(L), d_out(L);
    Rng data(29);
    for (auto& v : x) v = data.gaussian();
    for (auto& v : ctx) v = data.gaussian();
    for (auto& v : d_out) v = data.gaussian();
    ConditionTrack track;
    track.phoneme_ids.resize(L);
    track.energy.resize(L);
    track.pitch.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        track.phoneme_ids[i] = static_cast<int>(i % 6);
        track.energy[i] = 0.1 + 0.05 * static_cast<double>(i % 7);
        track.pitch[i] = 90.0 + 5.0 * static_cast<double>(i % 4);
    }
    const int step = 2;

    auto loss = [&]() {
        model.forward(Span(x), Span(ctx), &track, step, MutSpan(out));
        double acc = 0.0;
        for (std::size_t i = 0; i < L; ++i) acc += d_out[i] * out[i];
        return acc;
    };

    model.zero_grad();
    model.forward_train(Span(x), Span(ctx), &track, step, MutSpan(out));
    model.backward(Span(d_out));

    const double h = 1e-5;
    int checked = 0;
    for (auto& pr : params) {
        const std::size_t n = pr.p->size();
        // a few spread-out indices per array
        for (std::size_t k = 0; k < 4; ++k) {
            std::size_t idx = (k * (n / 4)) + k;
            if (idx >= n) idx = n - 1;
            double saved = pr.p->v[idx];
            pr.p->v[idx] = saved + h;
            double lp = loss();
            pr.p->v[idx] = saved - h;
            double lm = loss();
            pr.p->v[idx] = saved;
            double fd = (lp - lm) / (2.0 * h);
            double an = pr.p->g[idx];
            // relative error with an absolute guard for near-zero pairs
            double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            INFO(pr.name << "[" << idx << "] fd=" << fd << " an=" << an);
            CHECK(std::abs(fd - an) / denom < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 80);
}

TEST_CASE("finite differences on the unconditional context path") {
    DenoiserConfig cfg;
    cfg.num_layers = 2;
    cfg.channels = 4;
    cfg.dilation_cycle = {1, 2};
    cfg.step_embed_dim = 8;

    Denoiser model(cfg);
    Rng rng(31);
    model.init(rng);
    std::vector<ParamRef> params;
    model.collect(params);
    Rng jitter(37);
    for (auto& pr : params)
        for (auto& v : pr.p->v) v += 0.05 * jitter.gaussian();

    const std::size_t L = 12;
    std::vector<double> x(L), ctx(L), out(L), d_out(L);
    Rng data(41);
    for (auto& v : x) v = data.gaussian();
    for (auto& v : ctx) v = data.gaussian();
    for (auto& v : d_out) v = data.gaussian();

    auto loss = [&]() {
        model.forward(Span(x), Span(ctx), nullptr, 1, MutSpan(out));
        double acc = 0.0;
        for (std::size_t i = 0; i < L; ++i) acc += d_out[i] * out[i];
        return acc;
    };

    model.zero_grad();
    model.forward_train(Span(x), Span(ctx), nullptr, 1, MutSpan(out));
    model.backward(Span(d_out));

    const double h = 1e-5;
    for (auto& pr : params) {
        const std::size_t n = pr.p->size();
        for (std::size_t k = 0; k < 3; ++k) {
            std::size_t idx = (k * n) / 3;
            if (idx >= n) idx = n - 1;
            double saved = pr.p->v[idx];
            pr.p->v[idx] = saved + h;
            double lp = loss();
            pr.p->v[idx] = saved - h;
            double lm = loss();
            pr.p->v[idx] = saved;
            double fd = (lp - lm) / (2.0 * h);
            double an = pr.p->g[idx];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            INFO(pr.name << "[" << idx << "]");
            CHECK(std::abs(fd - an) / denom < 1e-3);
        }
    }
}
