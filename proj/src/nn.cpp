#include "framediff/nn.hpp"

#include <algorithm>

namespace framediff {

Conv1d::Conv1d(int in_ch, int out_ch, int kernel, int dilation)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), dilation_(dilation) {
    if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || dilation <= 0) throw InputError("Conv1d: bad shape");
    if (kernel % 2 == 0) throw InputError("Conv1d: kernel must be odd for symmetric padding");
    w.resize(static_cast<std::size_t>(out_ch) * in_ch * kernel);
    b.resize(static_cast<std::size_t>(out_ch));
}

void Conv1d::init(Rng& rng) {
    double bound = std::sqrt(1.0 / (static_cast<double>(in_ch_) * kernel_));
    for (auto& x : w.v) x = rng.uniform(-bound, bound);
    for (auto& x : b.v) x = rng.uniform(-bound, bound);
}

void Conv1d::forward(const Plane& x, Plane& y, bool accumulate) const {
    if (x.channels() != in_ch_) throw InputError("Conv1d: input channel mismatch");
    if (y.channels() != out_ch_ || y.length() != x.length()) throw InputError("Conv1d: output shape mismatch");
    const auto L = static_cast<std::int64_t>(x.length());
    const int half = kernel_ / 2;
    for (int o = 0; o < out_ch_; ++o) {
        double* yo = y.row(o);
        const double bo = b.v[static_cast<std::size_t>(o)];
        if (accumulate) {
            for (std::int64_t t = 0; t < L; ++t) yo[t] += bo;
        } else {
            std::fill(yo, yo + L, bo);
        }
        for (int i = 0; i < in_ch_; ++i) {
            const double* xi = x.row(i);
            const double* wo = w.v.data() + (static_cast<std::size_t>(o) * in_ch_ + i) * kernel_;
            for (int k = 0; k < kernel_; ++k) {
                const double wk = wo[k];
                if (wk == 0.0) continue;
                const std::int64_t off = static_cast<std::int64_t>(k - half) * dilation_;
                const std::int64_t t0 = std::max<std::int64_t>(0, -off);
                const std::int64_t t1 = std::min<std::int64_t>(L, L - off);
                const double* src = xi + off;
                for (std::int64_t t = t0; t < t1; ++t) yo[t] += wk * src[t];
            }
        }
    }
}

void Conv1d::backward(const Plane& x, const Plane& dy, Plane* dx) {
    if (x.channels() != in_ch_ || dy.channels() != out_ch_ || dy.length() != x.length())
        throw InputError("Conv1d: backward shape mismatch");
    if (dx && (dx->channels() != in_ch_ || dx->length() != x.length()))
        throw InputError("Conv1d: dx shape mismatch");
    const auto L = static_cast<std::int64_t>(x.length());
    const int half = kernel_ / 2;
    for (int o = 0; o < out_ch_; ++o) {
        const double* dyo = dy.row(o);
        double acc_b = 0.0;
        for (std::int64_t t = 0; t < L; ++t) acc_b += dyo[t];
        b.g[static_cast<std::size_t>(o)] += acc_b;
        for (int i = 0; i < in_ch_; ++i) {
            const double* xi = x.row(i);
            double* dxi = dx ? dx->row(i) : nullptr;
            const std::size_t wbase = (static_cast<std::size_t>(o) * in_ch_ + i) * kernel_;
            for (int k = 0; k < kernel_; ++k) {
                const std::int64_t off = static_cast<std::int64_t>(k - half) * dilation_;
                const std::int64_t t0 = std::max<std::int64_t>(0, -off);
                const std::int64_t t1 = std::min<std::int64_t>(L, L - off);
                double acc_w = 0.0;
                const double* src = xi + off;
                for (std::int64_t t = t0; t < t1; ++t) acc_w += dyo[t] * src[t];
                w.g[wbase + static_cast<std::size_t>(k)] += acc_w;
                if (dxi) {
                    const double wk = w.v[wbase + static_cast<std::size_t>(k)];
                    double* dst = dxi + off;
                    for (std::int64_t t = t0; t < t1; ++t) dst[t] += wk * dyo[t];
                }
            }
        }
    }
}

void Conv1d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
}

Dense::Dense(int in_dim, int out_dim) : in_dim_(in_dim), out_dim_(out_dim) {
    if (in_dim <= 0 || out_dim <= 0) throw InputError("Dense: bad shape");
    w.resize(static_cast<std::size_t>(out_dim) * in_dim);
    b.resize(static_cast<std::size_t>(out_dim));
}

void Dense::init(Rng& rng) {
    double bound = std::sqrt(1.0 / in_dim_);
    for (auto& x : w.v) x = rng.uniform(-bound, bound);
    for (auto& x : b.v) x = rng.uniform(-bound, bound);
}

void Dense::forward(Span x, MutSpan y) const {
    if (static_cast<int>(x.size()) != in_dim_ || static_cast<int>(y.size()) != out_dim_)
        throw InputError("Dense: shape mismatch");
    for (int o = 0; o < out_dim_; ++o) {
        const double* wo = w.v.data() + static_cast<std::size_t>(o) * in_dim_;
        double acc = b.v[static_cast<std::size_t>(o)];
        for (int i = 0; i < in_dim_; ++i) acc += wo[i] * x[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(o)] = acc;
    }
}

void Dense::backward(Span x, Span dy, MutSpan dx) {
    if (static_cast<int>(x.size()) != in_dim_ || static_cast<int>(dy.size()) != out_dim_)
        throw InputError("Dense: backward shape mismatch");
    if (!dx.empty() && static_cast<int>(dx.size()) != in_dim_) throw InputError("Dense: dx shape mismatch");
    for (int o = 0; o < out_dim_; ++o) {
        const double d = dy[static_cast<std::size_t>(o)];
        b.g[static_cast<std::size_t>(o)] += d;
        double* gw = w.g.data() + static_cast<std::size_t>(o) * in_dim_;
        const double* wo = w.v.data() + static_cast<std::size_t>(o) * in_dim_;
        for (int i = 0; i < in_dim_; ++i) {
            gw[i] += d * x[static_cast<std::size_t>(i)];
            if (!dx.empty()) dx[static_cast<std::size_t>(i)] += d * wo[i];
        }
    }
}

void Dense::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
}

Embedding::Embedding(int vocab, int dim) : vocab_(vocab), dim_(dim) {
    if (vocab <= 0 || dim <= 0) throw InputError("Embedding: bad shape");
    table.resize(static_cast<std::size_t>(vocab) * dim);
}

void Embedding::init(Rng& rng) {
    for (auto& x : table.v) x = rng.gaussian() * 0.1;
}

void Embedding::forward(const std::vector<int>& ids, Plane& out) const {
    if (out.channels() != dim_ || out.length() != ids.size()) throw InputError("Embedding: output shape mismatch");
    for (std::size_t t = 0; t < ids.size(); ++t) {
        const int id = ids[t];
        if (id < 0 || id >= vocab_) throw InputError("Embedding: id out of range");
        const double* row = table.v.data() + static_cast<std::size_t>(id) * dim_;
        for (int c = 0; c < dim_; ++c) out.at(c, t) = row[c];
    }
}

void Embedding::backward(const std::vector<int>& ids, const Plane& dout) {
    if (dout.channels() != dim_ || dout.length() != ids.size()) throw InputError("Embedding: grad shape mismatch");
    for (std::size_t t = 0; t < ids.size(); ++t) {
        double* grow = table.g.data() + static_cast<std::size_t>(ids[t]) * dim_;
        for (int c = 0; c < dim_; ++c) grow[c] += dout.at(c, t);
    }
}

void Embedding::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".table", &table});
}

void relu_inplace(MutSpan x) {
    for (auto& v : x)
        if (v < 0.0) v = 0.0;
}

void relu_backward(Span pre, MutSpan d) {
    if (pre.size() != d.size()) throw InputError("relu_backward: size mismatch");
    for (std::size_t i = 0; i < d.size(); ++i)
        if (pre[i] <= 0.0) d[i] = 0.0;
}

double grad_norm(const std::vector<ParamRef>& params) {
    double acc = 0.0;
    for (const auto& ref : params)
        for (double g : ref.p->g) acc += g * g;
    return std::sqrt(acc);
}

double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
    double norm = grad_norm(params);
    if (norm > max_norm && norm > 0.0) {
        double scale = max_norm / norm;
        for (const auto& ref : params)
            for (double& g : ref.p->g) g *= scale;
    }
    return norm;
}

}  // namespace framediff
