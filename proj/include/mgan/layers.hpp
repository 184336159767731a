#pragma once
#include <string>
#include <vector>

#include "mgan/rng.hpp"
#include "mgan/tensor.hpp"

namespace mgan {

// Named view of one parameter array and its gradient accumulator.
struct ParamRef {
    std::string name;
    std::vector<double>* values = nullptr;
    std::vector<double>* grads = nullptr;
};

struct Pad {
    int top = 0, bottom = 0, left = 0, right = 0;
    static Pad uniform(int p) { return {p, p, p, p}; }
};

inline int conv_out_dim(int in, int k, int stride, int pad_lo, int pad_hi) {
    return (in + pad_lo + pad_hi - k) / stride + 1;
}

// im2col patch matrix: rows = in_c*kh*kw, cols = out_h*out_w, row-major.
void im2col(const Tensor& x, int kh, int kw, int sh, int sw, const Pad& pad,
            std::vector<double>& cols, int& out_h, int& out_w);
void col2im(const std::vector<double>& cols, int in_c, int in_h, int in_w,
            int kh, int kw, int sh, int sw, const Pad& pad, Tensor& x);

// Layers cache what their backward pass needs only on the forward_train path;
// plain forward() is const and touches no shared scratch, so a frozen net can
// run inference from several threads at once.

class Conv2d {
  public:
    Conv2d(std::string name, int in_c, int out_c, int k, int stride, Pad pad);

    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    // Accumulates into weight/bias grads, returns grad w.r.t. input.
    Tensor backward(const Tensor& grad_out);

    void init(Rng& rng, double stddev);
    std::vector<ParamRef> params();
    int out_channels() const { return out_c_; }

  private:
    Tensor run(const Tensor& x, std::vector<double>* keep_cols) const;

    std::string name_;
    int in_c_, out_c_, k_, stride_;
    Pad pad_;
    std::vector<double> w_, b_, gw_, gb_;  // w: out_c x (in_c*k*k), row-major
    std::vector<double> cols_;             // training cache
    int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

class ConvTranspose2d {
  public:
    ConvTranspose2d(std::string name, int in_c, int out_c, int k, int stride, int pad);

    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    void init(Rng& rng, double stddev);
    std::vector<ParamRef> params();

  private:
    Tensor run(const Tensor& x, Tensor* keep_input) const;

    std::string name_;
    int in_c_, out_c_, k_, stride_, pad_;
    std::vector<double> w_, b_, gw_, gb_;  // w: in_c x (out_c*k*k), row-major
    Tensor x_;                             // training cache
};

// Per-channel, per-sample normalization with affine scale/shift. Channels
// whose spatial extent is a single pixel pass through untouched (their
// statistics are degenerate).
class InstanceNorm {
  public:
    InstanceNorm(std::string name, int channels, double eps = 1e-5);

    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    std::vector<ParamRef> params();

  private:
    Tensor run(const Tensor& x, bool keep) const;

    std::string name_;
    int channels_;
    double eps_;
    std::vector<double> gamma_, beta_, ggamma_, gbeta_;
    Tensor xhat_;                  // training cache
    std::vector<double> inv_std_;  // per channel
};

class LeakyReLU {
  public:
    explicit LeakyReLU(double alpha) : alpha_(alpha) {}
    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    Tensor backward(const Tensor& grad_out) const;

  private:
    double alpha_;
    Tensor x_;
};

class Tanh {
  public:
    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    Tensor backward(const Tensor& grad_out) const;

  private:
    Tensor y_;
};

// Inverted dropout; the sole stochastic input of a generator pass. Masks are
// drawn from the Rng handed to forward_train so a caller can replay a pass
// bit-for-bit by re-deriving the same stream.
class Dropout {
  public:
    explicit Dropout(double rate) : rate_(rate) {}
    Tensor forward(const Tensor& x) const { return x; }  // inference: identity
    Tensor forward_train(const Tensor& x, Rng& rng);
    Tensor backward(const Tensor& grad_out) const;

  private:
    double rate_;
    std::vector<double> mask_;
};

}  // namespace mgan
