#include "framediff/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "framediff/checkpoint.hpp"
#include "framediff/trainer.hpp"

namespace framediff {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kMinLogDuration = 1e-4;  // floor in seconds before the log

void relu_plane(const Plane& a, Plane& r) {
    r.resize(a.channels(), a.length());
    const double* src = a.data().data();
    double* dst = r.data().data();
    for (std::size_t i = 0; i < a.data().size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
}

}  // namespace

void PredictorConfig::validate() const {
    if (inventory_size <= 0 || embed_dim <= 0 || hidden <= 0) throw InputError("PredictorConfig: bad dimensions");
    if (duration_kernel <= 0 || duration_kernel % 2 == 0) throw InputError("PredictorConfig: duration kernel must be odd");
    for (int k : energy_kernels)
        if (k <= 0 || k % 2 == 0) throw InputError("PredictorConfig: energy kernels must be odd");
    if (energy_kernels.empty()) throw InputError("PredictorConfig: empty energy kernel list");
    if (dropout < 0.0 || dropout >= 1.0) throw InputError("PredictorConfig: dropout must be in [0, 1)");
}

ChannelNorm::ChannelNorm(int channels) : ch_(channels) {
    gamma.resize(static_cast<std::size_t>(channels));
    beta.resize(static_cast<std::size_t>(channels));
    init();
}

void ChannelNorm::init() {
    std::fill(gamma.v.begin(), gamma.v.end(), 1.0);
    std::fill(beta.v.begin(), beta.v.end(), 0.0);
}

void ChannelNorm::forward(const Plane& x, Plane& y, bool train) {
    if (x.channels() != ch_) throw InputError("ChannelNorm: channel mismatch");
    const std::size_t T = x.length();
    if (T == 0) throw InputError("ChannelNorm: empty sequence");
    y.resize(ch_, T);
    xhat_.resize(ch_, T);
    inv_sigma_.assign(T, 0.0);
    const double invC = 1.0 / static_cast<double>(ch_);
    for (std::size_t t = 0; t < T; ++t) {
        double mean = 0.0;
        for (int c = 0; c < ch_; ++c) mean += x.at(c, t);
        mean *= invC;
        double var = 0.0;
        for (int c = 0; c < ch_; ++c) {
            double dv = x.at(c, t) - mean;
            var += dv * dv;
        }
        var *= invC;
        const double inv = 1.0 / std::sqrt(var + kNormEps);
        inv_sigma_[t] = inv;
        for (int c = 0; c < ch_; ++c) {
            const double xh = (x.at(c, t) - mean) * inv;
            xhat_.at(c, t) = xh;
            y.at(c, t) = gamma.v[static_cast<std::size_t>(c)] * xh + beta.v[static_cast<std::size_t>(c)];
        }
    }
    (void)train;  // caches are cheap enough to keep on both paths
}

void ChannelNorm::backward(const Plane& dy, Plane& dx) {
    const std::size_t T = dy.length();
    if (dy.channels() != ch_ || xhat_.length() != T) throw InputError("ChannelNorm: backward shape mismatch");
    dx.resize(ch_, T);
    const double invC = 1.0 / static_cast<double>(ch_);
    for (std::size_t t = 0; t < T; ++t) {
        double sum_a = 0.0, sum_ax = 0.0;
        for (int c = 0; c < ch_; ++c) {
            const double d = dy.at(c, t);
            gamma.g[static_cast<std::size_t>(c)] += d * xhat_.at(c, t);
            beta.g[static_cast<std::size_t>(c)] += d;
            const double a = d * gamma.v[static_cast<std::size_t>(c)];
            sum_a += a;
            sum_ax += a * xhat_.at(c, t);
        }
        const double inv = inv_sigma_[t];
        for (int c = 0; c < ch_; ++c) {
            const double a = dy.at(c, t) * gamma.v[static_cast<std::size_t>(c)];
            dx.at(c, t) = inv * (a - invC * sum_a - xhat_.at(c, t) * invC * sum_ax);
        }
    }
}

void ChannelNorm::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
}

Dropout::Dropout(double p) : p_(p) {}

void Dropout::forward(const Plane& x, Plane& y, bool train, Rng* rng) {
    y.resize(x.channels(), x.length());
    if (!train || p_ == 0.0) {
        y.data() = x.data();
        mask_.resize(x.channels(), x.length());
        std::fill(mask_.data().begin(), mask_.data().end(), 1.0);
        return;
    }
    if (!rng) throw InputError("Dropout: training forward needs an rng");
    mask_.resize(x.channels(), x.length());
    const double keep = 1.0 - p_;
    const double scale = 1.0 / keep;
    const double* src = x.data().data();
    double* m = mask_.data().data();
    double* dst = y.data().data();
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        m[i] = rng->uniform() < keep ? scale : 0.0;
        dst[i] = src[i] * m[i];
    }
}

void Dropout::backward(const Plane& dy, Plane& dx) {
    if (dy.channels() != mask_.channels() || dy.length() != mask_.length())
        throw InputError("Dropout: backward shape mismatch");
    dx.resize(dy.channels(), dy.length());
    const double* m = mask_.data().data();
    const double* src = dy.data().data();
    double* dst = dx.data().data();
    for (std::size_t i = 0; i < dy.data().size(); ++i) dst[i] = src[i] * m[i];
}

DurationPredictor::DurationPredictor(PredictorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    embed_ = Embedding(cfg_.inventory_size, cfg_.embed_dim);
    conv_ = Conv1d(cfg_.embed_dim, cfg_.hidden, cfg_.duration_kernel);
    norm_ = ChannelNorm(cfg_.hidden);
    drop_ = Dropout(cfg_.dropout);
    head_ = Conv1d(cfg_.hidden, 1, 1);
}

void DurationPredictor::init(Rng& rng) {
    embed_.init(rng);
    conv_.init(rng);
    norm_.init();
    head_.init(rng);
}

void DurationPredictor::collect(std::vector<ParamRef>& out) {
    embed_.collect("embed", out);
    conv_.collect("conv", out);
    norm_.collect("norm", out);
    head_.collect("head", out);
}

void DurationPredictor::zero_grad() {
    std::vector<ParamRef> refs;
    collect(refs);
    for (auto& r : refs) r.p->zero_grad();
}

void DurationPredictor::forward(const std::vector<int>& ids, std::vector<double>& log_dur, bool train, Rng* rng) {
    if (ids.empty()) throw InputError("DurationPredictor: empty sequence");
    const std::size_t T = ids.size();
    e_.resize(cfg_.embed_dim, T);
    embed_.forward(ids, e_);
    a_.resize(cfg_.hidden, T);
    conv_.forward(e_, a_);
    relu_plane(a_, r_);
    norm_.forward(r_, n_, train);
    drop_.forward(n_, d_, train, rng);
    o_.resize(1, T);
    head_.forward(d_, o_);
    log_dur.assign(o_.row(0), o_.row(0) + T);
}

void DurationPredictor::backward(const std::vector<int>& ids, Span d_out) {
    const std::size_t T = ids.size();
    if (d_out.size() != T) throw InputError("DurationPredictor: gradient length mismatch");
    do_.resize(1, T);
    std::copy(d_out.begin(), d_out.end(), do_.row(0));
    dd_.resize(cfg_.hidden, T);
    dd_.zero();
    head_.backward(d_, do_, &dd_);
    drop_.backward(dd_, dn_);
    norm_.backward(dn_, da_);
    relu_backward(a_.data(), da_.data());
    de_.resize(cfg_.embed_dim, T);
    de_.zero();
    conv_.backward(e_, da_, &de_);
    embed_.backward(ids, de_);
}

std::vector<double> DurationPredictor::predict(const std::vector<int>& ids) {
    std::vector<double> log_dur;
    forward(ids, log_dur, false, nullptr);
    for (auto& v : log_dur) v = std::exp(v);
    return log_dur;
}

EnergyPredictor::EnergyPredictor(PredictorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.energy_kernels.size() != 2) throw InputError("EnergyPredictor: expected two kernel sizes");
    embed_ = Embedding(cfg_.inventory_size, cfg_.embed_dim);
    blocks_.resize(2);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const int in_ch = b == 0 ? cfg_.embed_dim : cfg_.hidden;
        blocks_[b].conv_a = Conv1d(in_ch, cfg_.hidden, cfg_.energy_kernels[0]);
        blocks_[b].conv_b = Conv1d(cfg_.hidden, cfg_.hidden, cfg_.energy_kernels[1]);
        blocks_[b].norm = ChannelNorm(cfg_.hidden);
        blocks_[b].drop = Dropout(cfg_.dropout);
    }
    head_ = Conv1d(cfg_.hidden, 1, 1);
}

void EnergyPredictor::init(Rng& rng) {
    embed_.init(rng);
    for (auto& b : blocks_) {
        b.conv_a.init(rng);
        b.conv_b.init(rng);
        b.norm.init();
    }
    head_.init(rng);
}

void EnergyPredictor::collect(std::vector<ParamRef>& out) {
    embed_.collect("embed", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "block" + std::to_string(i);
        blocks_[i].conv_a.collect(p + ".conv_a", out);
        blocks_[i].conv_b.collect(p + ".conv_b", out);
        blocks_[i].norm.collect(p + ".norm", out);
    }
    head_.collect("head", out);
}

void EnergyPredictor::zero_grad() {
    std::vector<ParamRef> refs;
    collect(refs);
    for (auto& r : refs) r.p->zero_grad();
}

void EnergyPredictor::forward(const std::vector<int>& ids, std::vector<double>& energy, bool train, Rng* rng) {
    if (ids.empty()) throw InputError("EnergyPredictor: empty sequence");
    const std::size_t T = ids.size();
    e_.resize(cfg_.embed_dim, T);
    embed_.forward(ids, e_);
    const Plane* cur = &e_;
    for (auto& b : blocks_) {
        b.ca.resize(cfg_.hidden, T);
        b.conv_a.forward(*cur, b.ca);
        b.cb.resize(cfg_.hidden, T);
        b.conv_b.forward(b.ca, b.cb);
        relu_plane(b.cb, b.r);
        b.norm.forward(b.r, b.n, train);
        b.drop.forward(b.n, b.d, train, rng);
        cur = &b.d;
    }
    o_.resize(1, T);
    head_.forward(*cur, o_);
    energy.assign(o_.row(0), o_.row(0) + T);
}

void EnergyPredictor::backward(const std::vector<int>& ids, Span d_out) {
    const std::size_t T = ids.size();
    if (d_out.size() != T) throw InputError("EnergyPredictor: gradient length mismatch");
    do_.resize(1, T);
    std::copy(d_out.begin(), d_out.end(), do_.row(0));

    Plane* grad = &blocks_.back().d_d;
    grad->resize(cfg_.hidden, T);
    grad->zero();
    head_.backward(blocks_.back().d, do_, grad);

    for (std::size_t bi = blocks_.size(); bi-- > 0;) {
        auto& b = blocks_[bi];
        b.drop.backward(*grad, b.d_n);
        b.norm.backward(b.d_n, b.d_cb);
        relu_backward(b.cb.data(), b.d_cb.data());
        b.d_ca.resize(cfg_.hidden, T);
        b.d_ca.zero();
        b.conv_b.backward(b.ca, b.d_cb, &b.d_ca);
        const Plane& input = bi == 0 ? e_ : blocks_[bi - 1].d;
        if (bi == 0) {
            de_.resize(cfg_.embed_dim, T);
            de_.zero();
            b.conv_a.backward(input, b.d_ca, &de_);
        } else {
            Plane& down = blocks_[bi - 1].d_d;
            down.resize(cfg_.hidden, T);
            down.zero();
            b.conv_a.backward(input, b.d_ca, &down);
            grad = &down;
        }
    }
    embed_.backward(ids, de_);
}

std::vector<double> EnergyPredictor::predict(const std::vector<int>& ids) {
    std::vector<double> out;
    forward(ids, out, false, nullptr);
    for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
    return out;
}

void PredictorTrainConfig::validate() const {
    if (steps <= 0 || batch_size <= 0) throw InputError("PredictorTrainConfig: non-positive steps or batch");
    if (lr <= 0 || clip_norm <= 0) throw InputError("PredictorTrainConfig: non-positive lr or clip");
    if (val_every <= 0) throw InputError("PredictorTrainConfig: non-positive val cadence");
}

std::vector<PredictorExample> make_duration_examples(const std::vector<Utterance>& corpus,
                                                     const PhonemeInventory& inv) {
    std::vector<PredictorExample> out;
    out.reserve(corpus.size());
    for (const auto& utt : corpus) {
        PredictorExample ex;
        for (const auto& s : utt.spans) {
            ex.ids.push_back(inv.id_of(s.phoneme));
            ex.targets.push_back(std::log(std::max(s.end_s - s.start_s, kMinLogDuration)));
        }
        if (!ex.ids.empty()) out.push_back(std::move(ex));
    }
    return out;
}

std::vector<PredictorExample> make_energy_examples(const std::vector<Utterance>& corpus,
                                                   const PhonemeInventory& inv) {
    std::vector<PredictorExample> out;
    out.reserve(corpus.size());
    for (const auto& utt : corpus) {
        PredictorExample ex;
        for (const auto& s : utt.spans) {
            if (!s.energy) throw InputError("make_energy_examples: span without a computed energy target");
            ex.ids.push_back(inv.id_of(s.phoneme));
            ex.targets.push_back(*s.energy);
        }
        if (!ex.ids.empty()) out.push_back(std::move(ex));
    }
    return out;
}

namespace {

template <typename Model>
double example_loss(Model& model, const PredictorExample& ex, bool with_grad, double inv_batch, Rng* rng) {
    std::vector<double> pred;
    model.forward(ex.ids, pred, with_grad, rng);
    const auto T = ex.ids.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        double err = pred[i] - ex.targets[i];
        acc += err * err;
    }
    if (with_grad) {
        std::vector<double> d(T);
        const double scale = 2.0 * inv_batch / static_cast<double>(T);
        for (std::size_t i = 0; i < T; ++i) d[i] = scale * (pred[i] - ex.targets[i]);
        model.backward(ex.ids, d);
    }
    return acc / static_cast<double>(T);
}

template <typename Model>
double validation_mse(Model& model, const std::vector<PredictorExample>& val_set) {
    if (val_set.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& ex : val_set) acc += example_loss(model, ex, false, 0.0, nullptr);
    return acc / static_cast<double>(val_set.size());
}

template <typename Model>
PredictorTrainResult run_training(Model& model, const std::string& which,
                                  const std::vector<PredictorExample>& train_set,
                                  const std::vector<PredictorExample>& val_set, const PredictorConfig& cfg,
                                  const PredictorTrainConfig& tcfg) {
    std::filesystem::create_directories(tcfg.out_dir);
    Rng rng(tcfg.seed);
    model.init(rng);
    std::vector<ParamRef> refs;
    model.collect(refs);
    Adam adam(refs, tcfg.lr, tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps);

    std::ofstream log(tcfg.out_dir + "/" + which + "_loss.tsv", std::ios::trunc);
    if (!log) throw ResourceError("train_predictor: cannot open loss log in " + tcfg.out_dir);

    PredictorTrainResult result;
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t pos = order.size();

    for (long step = 0; step < tcfg.steps; ++step) {
        model.zero_grad();
        double loss = 0.0;
        const double inv_batch = 1.0 / static_cast<double>(tcfg.batch_size);
        for (int b = 0; b < tcfg.batch_size; ++b) {
            if (pos >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
                pos = 0;
            }
            const auto& ex = train_set[order[pos++]];
            loss += example_loss(model, ex, true, inv_batch, &rng);
        }
        loss *= inv_batch;
        if (!std::isfinite(loss)) throw NumericError("train_predictor: non-finite loss at step " + std::to_string(step + 1));
        clip_grad_norm(refs, tcfg.clip_norm);
        adam.step();

        result.steps_done = step + 1;
        result.last_loss = loss;
        if ((step + 1) % tcfg.val_every == 0 || step + 1 == tcfg.steps) {
            result.val_mse = validation_mse(model, val_set);
            log << (step + 1) << '\t' << loss << '\t' << result.val_mse << '\n';
            log.flush();
        } else {
            log << (step + 1) << '\t' << loss << '\t' << "" << '\n';
        }
    }

    Checkpoint ck;
    ck.kind = which;
    ck.meta["config"] = predictor_config_to_json(cfg);
    ck.meta["train"] = {{"steps", result.steps_done}, {"seed", tcfg.seed}, {"val_mse", result.val_mse}};
    for (auto& r : refs) ck.arrays.emplace_back("param." + r.name, r.p->v);
    result.checkpoint = tcfg.out_dir + "/" + which + ".fdck";
    save_checkpoint(result.checkpoint, ck);
    return result;
}

}  // namespace

PredictorTrainResult train_predictor(const std::vector<PredictorExample>& train_set,
                                     const std::vector<PredictorExample>& val_set, const std::string& which,
                                     const PredictorConfig& cfg, const PredictorTrainConfig& tcfg) {
    tcfg.validate();
    cfg.validate();
    if (train_set.empty()) throw InputError("train_predictor: empty training set");
    if (which == "duration") {
        DurationPredictor model(cfg);
        return run_training(model, which, train_set, val_set, cfg, tcfg);
    }
    if (which == "energy") {
        EnergyPredictor model(cfg);
        return run_training(model, which, train_set, val_set, cfg, tcfg);
    }
    throw InputError("train_predictor: unknown predictor kind '" + which + "'");
}

}  // namespace framediff
