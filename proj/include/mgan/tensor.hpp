#pragma once
#include <vector>

#include "mgan/errors.hpp"
#include "mgan/image.hpp"

namespace mgan {

// CHW tensor of doubles (single sample; batches are handled by gradient
// accumulation, which is exact here because no layer couples samples).
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w) : channels(c), height(h), width(w),
                                  data(size_t(c) * h * w, 0.0) {}

    size_t size() const { return data.size(); }
    size_t plane() const { return size_t(height) * width; }
    double* channel(int c) { return data.data() + size_t(c) * plane(); }
    const double* channel(int c) const { return data.data() + size_t(c) * plane(); }

    bool same_shape(const Tensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.height != b.height || a.width != b.width)
        throw ValidationError("concat_channels: spatial dims disagree");
    Tensor out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + std::ptrdiff_t(a.size()));
    return out;
}

inline Tensor slice_channels(const Tensor& t, int first, int count) {
    Tensor out(count, t.height, t.width);
    std::copy(t.data.begin() + std::ptrdiff_t(size_t(first) * t.plane()),
              t.data.begin() + std::ptrdiff_t(size_t(first + count) * t.plane()),
              out.data.begin());
    return out;
}

// [0,1] image plane <-> [-1,1] network space.
inline void copy_to_net(const ImageGrid& img, Tensor& t, int channel) {
    double* dst = t.channel(channel);
    for (size_t i = 0; i < img.values.size(); ++i) dst[i] = 2.0 * img.values[i] - 1.0;
}

inline ImageGrid from_net(const Tensor& t, int channel) {
    ImageGrid out(t.height, t.width);
    const double* src = t.channel(channel);
    for (size_t i = 0; i < out.values.size(); ++i) {
        double v = 0.5 * (src[i] + 1.0);
        out.values[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return out;
}

}  // namespace mgan
