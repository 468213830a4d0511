#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "framediff/common.hpp"
#include "framediff/rng.hpp"

namespace framediff {

// Channel-major [channels][length] buffer. Rows are contiguous so the
// time axis vectorizes in conv loops.
class Plane {
public:
    Plane() = default;
    Plane(int channels, std::size_t length) { resize(channels, length); }

    // Keeps existing contents when the shape already matches, so workspace
    // planes can be reused call to call without churn.
    void resize(int channels, std::size_t length) {
        if (ch_ == channels && len_ == length) return;
        ch_ = channels;
        len_ = length;
        data_.assign(static_cast<std::size_t>(channels) * length, 0.0);
    }
    void zero() { std::fill(data_.begin(), data_.end(), 0.0); }

    double* row(int c) { return data_.data() + static_cast<std::size_t>(c) * len_; }
    const double* row(int c) const { return data_.data() + static_cast<std::size_t>(c) * len_; }
    double& at(int c, std::size_t t) { return data_[static_cast<std::size_t>(c) * len_ + t]; }
    double at(int c, std::size_t t) const { return data_[static_cast<std::size_t>(c) * len_ + t]; }

    int channels() const { return ch_; }
    std::size_t length() const { return len_; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    int ch_ = 0;
    std::size_t len_ = 0;
    std::vector<double> data_;
};

// A learnable array with its gradient accumulator.
struct Param {
    std::vector<double> v;
    std::vector<double> g;

    void resize(std::size_t n) {
        v.assign(n, 0.0);
        g.assign(n, 0.0);
    }
    std::size_t size() const { return v.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

struct ParamRef {
    std::string name;
    Param* p;
};

// Dilated 1-d convolution with symmetric zero padding, so the output has
// the input's length. Weights are [out][in][kernel].
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(int in_ch, int out_ch, int kernel, int dilation = 1);

    void init(Rng& rng);
    // y must already be sized [out_ch][x.length()]; accumulate adds the
    // result (bias included) on top of y instead of overwriting it
    void forward(const Plane& x, Plane& y, bool accumulate = false) const;
    // accumulates parameter grads; when dx is non-null, accumulates input grads too
    void backward(const Plane& x, const Plane& dy, Plane* dx);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
    void zero_grad() { w.zero_grad(); b.zero_grad(); }

    int in_ch() const { return in_ch_; }
    int out_ch() const { return out_ch_; }
    int kernel() const { return kernel_; }
    int dilation() const { return dilation_; }

    Param w;
    Param b;

private:
    int in_ch_ = 0, out_ch_ = 0, kernel_ = 1, dilation_ = 1;
};

// Fully connected layer, weights [out][in].
class Dense {
public:
    Dense() = default;
    Dense(int in_dim, int out_dim);

    void init(Rng& rng);
    void forward(Span x, MutSpan y) const;
    void backward(Span x, Span dy, MutSpan dx);  // dx may be empty
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
    void zero_grad() { w.zero_grad(); b.zero_grad(); }

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }

    Param w;
    Param b;

private:
    int in_dim_ = 0, out_dim_ = 0;
};

// Id -> row lookup. Row 0 is the padding symbol and trains like any other row.
class Embedding {
public:
    Embedding() = default;
    Embedding(int vocab, int dim);

    void init(Rng& rng);
    // out must be sized [dim][ids.size()]
    void forward(const std::vector<int>& ids, Plane& out) const;
    void backward(const std::vector<int>& ids, const Plane& dout);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
    void zero_grad() { table.zero_grad(); }

    int vocab() const { return vocab_; }
    int dim() const { return dim_; }

    Param table;  // [vocab][dim]

private:
    int vocab_ = 0, dim_ = 0;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
    double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

void relu_inplace(MutSpan x);
void relu_backward(Span pre, MutSpan d);  // d *= (pre > 0)

// Sum of squares across every tensor in the list.
double grad_norm(const std::vector<ParamRef>& params);
// Scales all grads so the global norm is at most max_norm. Returns the pre-clip norm.
double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm);

}  // namespace framediff
