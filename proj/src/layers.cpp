#include "mgan/layers.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace mgan {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

void im2col(const Tensor& x, int kh, int kw, int sh, int sw, const Pad& pad,
            std::vector<double>& cols, int& out_h, int& out_w) {
    out_h = conv_out_dim(x.height, kh, sh, pad.top, pad.bottom);
    out_w = conv_out_dim(x.width, kw, sw, pad.left, pad.right);
    const size_t rows = size_t(x.channels) * kh * kw;
    const size_t L = size_t(out_h) * out_w;
    cols.assign(rows * L, 0.0);
    for (int ci = 0; ci < x.channels; ++ci) {
        const double* src = x.channel(ci);
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                double* row = cols.data() + (size_t(ci) * kh * kw + size_t(ki) * kw + kj) * L;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * sh - pad.top + ki;
                    if (iy < 0 || iy >= x.height) continue;
                    const double* src_row = src + size_t(iy) * x.width;
                    double* dst_row = row + size_t(oy) * out_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * sw - pad.left + kj;
                        if (ix >= 0 && ix < x.width) dst_row[ox] = src_row[ix];
                    }
                }
            }
    }
}

void col2im(const std::vector<double>& cols, int in_c, int in_h, int in_w,
            int kh, int kw, int sh, int sw, const Pad& pad, Tensor& x) {
    const int out_h = conv_out_dim(in_h, kh, sh, pad.top, pad.bottom);
    const int out_w = conv_out_dim(in_w, kw, sw, pad.left, pad.right);
    const size_t L = size_t(out_h) * out_w;
    x = Tensor(in_c, in_h, in_w);
    for (int ci = 0; ci < in_c; ++ci) {
        double* dst = x.channel(ci);
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                const double* row = cols.data() + (size_t(ci) * kh * kw + size_t(ki) * kw + kj) * L;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * sh - pad.top + ki;
                    if (iy < 0 || iy >= in_h) continue;
                    double* dst_row = dst + size_t(iy) * in_w;
                    const double* src_row = row + size_t(oy) * out_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * sw - pad.left + kj;
                        if (ix >= 0 && ix < in_w) dst_row[ix] += src_row[ox];
                    }
                }
            }
    }
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_c, int out_c, int k, int stride, Pad pad)
    : name_(std::move(name)), in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
    const size_t wn = size_t(out_c) * in_c * k * k;
    w_.assign(wn, 0.0);
    b_.assign(out_c, 0.0);
    gw_.assign(wn, 0.0);
    gb_.assign(out_c, 0.0);
}

void Conv2d::init(Rng& rng, double stddev) {
    for (double& v : w_) v = stddev * rng.gaussian();
    std::fill(b_.begin(), b_.end(), 0.0);
}

std::vector<ParamRef> Conv2d::params() {
    return {{name_ + ".w", &w_, &gw_}, {name_ + ".b", &b_, &gb_}};
}

Tensor Conv2d::run(const Tensor& x, std::vector<double>* keep_cols) const {
    if (x.channels != in_c_) throw ValidationError(name_ + ": channel mismatch");
    std::vector<double> local;
    std::vector<double>& cols = keep_cols ? *keep_cols : local;
    int oh = 0, ow = 0;
    im2col(x, k_, k_, stride_, stride_, pad_, cols, oh, ow);
    const int ck = in_c_ * k_ * k_;
    const size_t L = size_t(oh) * ow;
    Tensor y(out_c_, oh, ow);
    MapMat ym(y.data.data(), out_c_, Eigen::Index(L));
    ym.noalias() = MapConst(w_.data(), out_c_, ck) * MapConst(cols.data(), ck, Eigen::Index(L));
    for (int c = 0; c < out_c_; ++c) ym.row(c).array() += b_[c];
    return y;
}

Tensor Conv2d::forward(const Tensor& x) const { return run(x, nullptr); }

Tensor Conv2d::forward_train(const Tensor& x) {
    in_h_ = x.height;
    in_w_ = x.width;
    Tensor y = run(x, &cols_);
    out_h_ = y.height;
    out_w_ = y.width;
    return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const int ck = in_c_ * k_ * k_;
    const size_t L = size_t(out_h_) * out_w_;
    MapConst gy(grad_out.data.data(), out_c_, Eigen::Index(L));
    MapConst cols(cols_.data(), ck, Eigen::Index(L));
    MapMat gw(gw_.data(), out_c_, ck);
    gw.noalias() += gy * cols.transpose();
    for (int c = 0; c < out_c_; ++c) gb_[c] += gy.row(c).sum();

    std::vector<double> gcols(size_t(ck) * L);
    MapMat gc(gcols.data(), ck, Eigen::Index(L));
    gc.noalias() = MapConst(w_.data(), out_c_, ck).transpose() * gy;
    Tensor gx;
    col2im(gcols, in_c_, in_h_, in_w_, k_, k_, stride_, stride_, pad_, gx);
    return gx;
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int in_c, int out_c, int k, int stride, int pad)
    : name_(std::move(name)), in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
    const size_t wn = size_t(in_c) * out_c * k * k;
    w_.assign(wn, 0.0);
    b_.assign(out_c, 0.0);
    gw_.assign(wn, 0.0);
    gb_.assign(out_c, 0.0);
}

void ConvTranspose2d::init(Rng& rng, double stddev) {
    for (double& v : w_) v = stddev * rng.gaussian();
    std::fill(b_.begin(), b_.end(), 0.0);
}

std::vector<ParamRef> ConvTranspose2d::params() {
    return {{name_ + ".w", &w_, &gw_}, {name_ + ".b", &b_, &gb_}};
}

// Transpose of a stride-s convolution: out = (in-1)*s - 2p + k. The patch
// matrix runs through the same im2col geometry as the conv that would map
// the output back onto the input, so col2im realizes the scatter.
Tensor ConvTranspose2d::run(const Tensor& x, Tensor* keep_input) const {
    if (x.channels != in_c_) throw ValidationError(name_ + ": channel mismatch");
    if (keep_input) *keep_input = x;
    const int oh = (x.height - 1) * stride_ - 2 * pad_ + k_;
    const int ow = (x.width - 1) * stride_ - 2 * pad_ + k_;
    const int ck = out_c_ * k_ * k_;
    const size_t L = size_t(x.height) * x.width;
    std::vector<double> cols(size_t(ck) * L);
    MapMat cm(cols.data(), ck, Eigen::Index(L));
    cm.noalias() = MapConst(w_.data(), in_c_, ck).transpose() *
                   MapConst(x.data.data(), in_c_, Eigen::Index(L));
    Tensor y;
    col2im(cols, out_c_, oh, ow, k_, k_, stride_, stride_, Pad::uniform(pad_), y);
    for (int c = 0; c < out_c_; ++c) {
        double* p = y.channel(c);
        for (size_t i = 0; i < y.plane(); ++i) p[i] += b_[c];
    }
    return y;
}

Tensor ConvTranspose2d::forward(const Tensor& x) const { return run(x, nullptr); }

Tensor ConvTranspose2d::forward_train(const Tensor& x) { return run(x, &x_); }

Tensor ConvTranspose2d::backward(const Tensor& grad_out) {
    const int ck = out_c_ * k_ * k_;
    std::vector<double> gcols;
    int oh = 0, ow = 0;
    im2col(grad_out, k_, k_, stride_, stride_, Pad::uniform(pad_), gcols, oh, ow);
    // oh/ow now equal the forward input dims by construction
    const size_t L = size_t(oh) * ow;
    Tensor gx(in_c_, x_.height, x_.width);
    MapMat gxm(gx.data.data(), in_c_, Eigen::Index(L));
    gxm.noalias() = MapConst(w_.data(), in_c_, ck) * MapConst(gcols.data(), ck, Eigen::Index(L));
    MapMat gw(gw_.data(), in_c_, ck);
    gw.noalias() += MapConst(x_.data.data(), in_c_, Eigen::Index(L)) *
                    MapConst(gcols.data(), ck, Eigen::Index(L)).transpose();
    for (int c = 0; c < out_c_; ++c) {
        const double* p = grad_out.channel(c);
        double s = 0.0;
        for (size_t i = 0; i < grad_out.plane(); ++i) s += p[i];
        gb_[c] += s;
    }
    return gx;
}

// ----------------------------------------------------------- InstanceNorm

InstanceNorm::InstanceNorm(std::string name, int channels, double eps)
    : name_(std::move(name)), channels_(channels), eps_(eps) {
    gamma_.assign(channels, 1.0);
    beta_.assign(channels, 0.0);
    ggamma_.assign(channels, 0.0);
    gbeta_.assign(channels, 0.0);
}

std::vector<ParamRef> InstanceNorm::params() {
    return {{name_ + ".gamma", &gamma_, &ggamma_}, {name_ + ".beta", &beta_, &gbeta_}};
}

Tensor InstanceNorm::run(const Tensor& x, bool keep) const {
    if (x.channels != channels_) throw ValidationError(name_ + ": channel mismatch");
    const size_t n = x.plane();
    if (n <= 1) {
        if (keep) {
            auto* self = const_cast<InstanceNorm*>(this);
            self->xhat_ = Tensor();  // sentinel: backward passes grads through
        }
        return x;
    }
    Tensor y(x.channels, x.height, x.width);
    std::vector<double> inv_std(channels_);
    Tensor xhat = keep ? Tensor(x.channels, x.height, x.width) : Tensor();
    for (int c = 0; c < channels_; ++c) {
        const double* src = x.channel(c);
        double mean = 0.0;
        for (size_t i = 0; i < n; ++i) mean += src[i];
        mean /= double(n);
        double var = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double d = src[i] - mean;
            var += d * d;
        }
        var /= double(n);
        const double is = 1.0 / std::sqrt(var + eps_);
        inv_std[c] = is;
        double* dst = y.channel(c);
        double* xh = keep ? xhat.channel(c) : nullptr;
        for (size_t i = 0; i < n; ++i) {
            const double h = (src[i] - mean) * is;
            if (xh) xh[i] = h;
            dst[i] = gamma_[c] * h + beta_[c];
        }
    }
    if (keep) {
        auto* self = const_cast<InstanceNorm*>(this);
        self->xhat_ = std::move(xhat);
        self->inv_std_ = std::move(inv_std);
    }
    return y;
}

Tensor InstanceNorm::forward(const Tensor& x) const { return run(x, false); }
Tensor InstanceNorm::forward_train(const Tensor& x) { return run(x, true); }

Tensor InstanceNorm::backward(const Tensor& grad_out) {
    if (xhat_.size() == 0) return grad_out;  // 1x1 pass-through
    const size_t n = grad_out.plane();
    Tensor gx(grad_out.channels, grad_out.height, grad_out.width);
    for (int c = 0; c < channels_; ++c) {
        const double* gy = grad_out.channel(c);
        const double* xh = xhat_.channel(c);
        double sum_gy = 0.0, sum_gy_xh = 0.0;
        for (size_t i = 0; i < n; ++i) {
            sum_gy += gy[i];
            sum_gy_xh += gy[i] * xh[i];
        }
        ggamma_[c] += sum_gy_xh;
        gbeta_[c] += sum_gy;
        const double mean_gy = sum_gy / double(n);
        const double mean_gy_xh = sum_gy_xh / double(n);
        const double scale = gamma_[c] * inv_std_[c];
        double* dst = gx.channel(c);
        for (size_t i = 0; i < n; ++i)
            dst[i] = scale * (gy[i] - mean_gy - xh[i] * mean_gy_xh);
    }
    return gx;
}

// ------------------------------------------------------------ activations

Tensor LeakyReLU::forward(const Tensor& x) const {
    Tensor y = x;
    for (double& v : y.data)
        if (v < 0.0) v *= alpha_;
    return y;
}

Tensor LeakyReLU::forward_train(const Tensor& x) {
    x_ = x;
    return forward(x);
}

Tensor LeakyReLU::backward(const Tensor& grad_out) const {
    Tensor gx = grad_out;
    for (size_t i = 0; i < gx.size(); ++i)
        if (x_.data[i] < 0.0) gx.data[i] *= alpha_;
    return gx;
}

Tensor Tanh::forward(const Tensor& x) const {
    Tensor y = x;
    for (double& v : y.data) v = std::tanh(v);
    return y;
}

Tensor Tanh::forward_train(const Tensor& x) {
    y_ = forward(x);
    return y_;
}

Tensor Tanh::backward(const Tensor& grad_out) const {
    Tensor gx = grad_out;
    for (size_t i = 0; i < gx.size(); ++i) gx.data[i] *= 1.0 - y_.data[i] * y_.data[i];
    return gx;
}

// ---------------------------------------------------------------- Dropout

Tensor Dropout::forward_train(const Tensor& x, Rng& rng) {
    mask_.resize(x.size());
    const double keep_scale = 1.0 / (1.0 - rate_);
    Tensor y = x;
    for (size_t i = 0; i < x.size(); ++i) {
        mask_[i] = rng.uniform() < rate_ ? 0.0 : keep_scale;
        y.data[i] *= mask_[i];
    }
    return y;
}

Tensor Dropout::backward(const Tensor& grad_out) const {
    Tensor gx = grad_out;
    for (size_t i = 0; i < gx.size(); ++i) gx.data[i] *= mask_[i];
    return gx;
}

}  // namespace mgan
