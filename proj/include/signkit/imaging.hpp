#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"

namespace signkit {

/// 8-bit image, row-major, channels interleaved.
class PixelImage {
public:
    PixelImage(int width, int height, int channels)
        : PixelImage(width, height, channels,
                     std::vector<std::uint8_t>(checked_size(width, height, channels))) {}

    PixelImage(int width, int height, int channels, std::vector<std::uint8_t> data)
        : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
        if (data_.size() != checked_size(width, height, channels)) {
            throw validation_error("pixel buffer size does not match " + std::to_string(width) +
                                   "x" + std::to_string(height) + "x" + std::to_string(channels));
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    FrameSize size() const noexcept { return {width_, height_}; }

    std::span<const std::uint8_t> data() const noexcept { return data_; }
    std::span<std::uint8_t> data() noexcept { return data_; }

    std::uint8_t at(int x, int y, int c) const noexcept { return data_[index(x, y, c)]; }
    std::uint8_t& at(int x, int y, int c) noexcept { return data_[index(x, y, c)]; }

    friend bool operator==(const PixelImage&, const PixelImage&) = default;

private:
    static std::size_t checked_size(int width, int height, int channels) {
        if (width < 1 || height < 1) {
            throw validation_error("image dimensions must be at least 1x1");
        }
        if (channels != 1 && channels != 3) {
            throw validation_error("image must have 1 or 3 channels");
        }
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
               static_cast<std::size_t>(channels);
    }

    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(c);
    }

    int width_;
    int height_;
    int channels_;
    std::vector<std::uint8_t> data_;
};

/// Real-valued counterpart of PixelImage, same layout.
struct FeatureTensor {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

namespace detail {

/// One output sample of a 1-D resampling pass: integer weights over a run of
/// source samples. Every tap list of an axis sums to the axis denominator.
struct Taps {
    int first = 0;
    std::vector<std::uint64_t> weights;
};

struct AxisPlan {
    std::uint64_t denominator = 1;
    std::vector<Taps> taps;
};

// Downscale: output pixel i covers source interval [i*in, (i+1)*in) in units
// of 1/out source pixels, so each overlap length is an integer and the
// weights sum to `in`.
// Upscale: bilinear with half-pixel centres. The source position
// ((2i+1)*in - out) / (2*out) has denominator 2*out.
inline AxisPlan plan_axis(int in, int out) {
    AxisPlan plan;
    plan.taps.resize(static_cast<std::size_t>(out));
    const auto n_in = static_cast<std::int64_t>(in);
    const auto n_out = static_cast<std::int64_t>(out);
    if (out <= in) {
        plan.denominator = static_cast<std::uint64_t>(n_in);
        for (std::int64_t i = 0; i < n_out; ++i) {
            const std::int64_t lo = i * n_in;
            const std::int64_t hi = lo + n_in;
            const std::int64_t first = lo / n_out;
            const std::int64_t last = (hi - 1) / n_out;
            auto& t = plan.taps[static_cast<std::size_t>(i)];
            t.first = static_cast<int>(first);
            for (std::int64_t j = first; j <= last; ++j) {
                const std::int64_t overlap = std::min(hi, (j + 1) * n_out) - std::max(lo, j * n_out);
                t.weights.push_back(static_cast<std::uint64_t>(overlap));
            }
        }
        return plan;
    }
    const std::int64_t den = 2 * n_out;
    plan.denominator = static_cast<std::uint64_t>(den);
    for (std::int64_t i = 0; i < n_out; ++i) {
        auto& t = plan.taps[static_cast<std::size_t>(i)];
        const std::int64_t pos = (2 * i + 1) * n_in - n_out;
        if (pos <= 0) {
            t.first = 0;
            t.weights = {static_cast<std::uint64_t>(den)};
            continue;
        }
        const std::int64_t j = pos / den;
        const std::int64_t frac = pos % den;
        t.first = static_cast<int>(j);
        if (j + 1 >= n_in || frac == 0) {
            t.weights = {static_cast<std::uint64_t>(den)};
        } else {
            t.weights = {static_cast<std::uint64_t>(den - frac), static_cast<std::uint64_t>(frac)};
        }
    }
    return plan;
}

} // namespace detail

/**
 * Anti-aliased resize. Shrinking axes use area averaging (each output pixel
 * is the coverage-weighted mean of the source pixels under it); enlarging
 * axes use bilinear interpolation. All weights are integers, so results are
 * exact and rounded half-up once at the end.
 */
inline PixelImage resize_area(const PixelImage& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) {
        throw validation_error("resize target must be at least 1x1");
    }
    if (out_w == img.width() && out_h == img.height()) {
        return img;
    }
    const auto px = detail::plan_axis(img.width(), out_w);
    const auto py = detail::plan_axis(img.height(), out_h);
    const int ch = img.channels();
    const auto src = img.data();

    // Horizontal pass into an integer buffer scaled by px.denominator.
    std::vector<std::uint64_t> rows(static_cast<std::size_t>(img.height()) *
                                    static_cast<std::size_t>(out_w) * static_cast<std::size_t>(ch));
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < out_w; ++x) {
            const auto& t = px.taps[static_cast<std::size_t>(x)];
            for (int c = 0; c < ch; ++c) {
                std::uint64_t acc = 0;
                for (std::size_t k = 0; k < t.weights.size(); ++k) {
                    const auto sx = static_cast<std::size_t>(t.first) + k;
                    acc += t.weights[k] *
                           src[(static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()) + sx) *
                                   static_cast<std::size_t>(ch) +
                               static_cast<std::size_t>(c)];
                }
                rows[(static_cast<std::size_t>(y) * static_cast<std::size_t>(out_w) +
                      static_cast<std::size_t>(x)) *
                         static_cast<std::size_t>(ch) +
                     static_cast<std::size_t>(c)] = acc;
            }
        }
    }

    PixelImage out(out_w, out_h, ch);
    auto dst = out.data();
    const std::uint64_t den = px.denominator * py.denominator;
    for (int y = 0; y < out_h; ++y) {
        const auto& t = py.taps[static_cast<std::size_t>(y)];
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < ch; ++c) {
                std::uint64_t acc = 0;
                for (std::size_t k = 0; k < t.weights.size(); ++k) {
                    const auto sy = static_cast<std::size_t>(t.first) + k;
                    acc += t.weights[k] *
                           rows[(sy * static_cast<std::size_t>(out_w) + static_cast<std::size_t>(x)) *
                                    static_cast<std::size_t>(ch) +
                                static_cast<std::size_t>(c)];
                }
                dst[(static_cast<std::size_t>(y) * static_cast<std::size_t>(out_w) +
                     static_cast<std::size_t>(x)) *
                        static_cast<std::size_t>(ch) +
                    static_cast<std::size_t>(c)] =
                    static_cast<std::uint8_t>((acc + den / 2) / den);
            }
        }
    }
    return out;
}

/// Integer pixel rectangle a box covers once its edges are rounded.
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;
};

inline PixelRect round_to_pixels(const BoundingBox& b) {
    PixelRect r{static_cast<int>(std::lround(b.xmin())), static_cast<int>(std::lround(b.ymin())),
                static_cast<int>(std::lround(b.xmax())), static_cast<int>(std::lround(b.ymax()))};
    // sub-pixel boxes still yield one pixel
    if (r.x1 <= r.x0) {
        r.x1 = r.x0 + 1;
    }
    if (r.y1 <= r.y0) {
        r.y1 = r.y0 + 1;
    }
    return r;
}

/// Copies the pixels under `b` (edges rounded to the nearest pixel).
inline PixelImage crop(const PixelImage& img, const BoundingBox& b) {
    const auto r = round_to_pixels(b);
    if (r.x1 > img.width() || r.y1 > img.height()) {
        std::ostringstream os;
        os << "crop box " << b << " exceeds " << img.width() << "x" << img.height() << " image";
        throw validation_error(os.str());
    }
    const int w = r.x1 - r.x0;
    const int h = r.y1 - r.y0;
    const auto ch = static_cast<std::size_t>(img.channels());
    PixelImage out(w, h, img.channels());
    const auto src = img.data();
    auto dst = out.data();
    const auto row_bytes = static_cast<std::size_t>(w) * ch;
    for (int y = 0; y < h; ++y) {
        const auto from = (static_cast<std::size_t>(r.y0 + y) * static_cast<std::size_t>(img.width()) +
                           static_cast<std::size_t>(r.x0)) *
                          ch;
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(from), row_bytes,
                    dst.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(y) * row_bytes));
    }
    return out;
}

/// Luma 0.299 R + 0.587 G + 0.114 B, rounded. Single-channel input passes through.
inline PixelImage to_gray(const PixelImage& img) {
    if (img.channels() == 1) {
        return img;
    }
    PixelImage out(img.width(), img.height(), 1);
    const auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const unsigned r = src[3 * i];
        const unsigned g = src[3 * i + 1];
        const unsigned b = src[3 * i + 2];
        dst[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
    }
    return out;
}

/// Scales 8-bit samples into [0, 1].
inline FeatureTensor normalize(const PixelImage& img) {
    FeatureTensor t{img.width(), img.height(), img.channels(), {}};
    t.data.reserve(img.data().size());
    for (auto v : img.data()) {
        t.data.push_back(v / 255.0);
    }
    return t;
}

/// Per-channel mean and population standard deviation of one tensor.
inline ChannelStats channel_stats(const FeatureTensor& t) {
    const auto ch = static_cast<std::size_t>(t.channels);
    std::vector<long double> sum(ch, 0), sq(ch, 0);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        sum[i % ch] += t.data[i];
    }
    const auto n = static_cast<long double>(t.data.size() / ch);
    ChannelStats s{std::vector<double>(ch), std::vector<double>(ch)};
    for (std::size_t c = 0; c < ch; ++c) {
        s.mean[c] = static_cast<double>(sum[c] / n);
    }
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        const long double d = t.data[i] - s.mean[i % ch];
        sq[i % ch] += d * d;
    }
    for (std::size_t c = 0; c < ch; ++c) {
        s.stddev[c] = static_cast<double>(std::sqrt(sq[c] / n));
    }
    return s;
}

/// Accumulates per-channel statistics across many images for dataset-level
/// standardization. Works on raw 8-bit counts so it is exact regardless of
/// the number of images.
class DatasetStatsAccumulator {
public:
    explicit DatasetStatsAccumulator(int channels)
        : sum_(static_cast<std::size_t>(channels)), sq_(static_cast<std::size_t>(channels)) {}

    void add(const PixelImage& img) {
        if (static_cast<std::size_t>(img.channels()) != sum_.size()) {
            throw validation_error("channel count differs from accumulator");
        }
        const auto ch = sum_.size();
        const auto data = img.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            sum_[i % ch] += data[i];
            sq_[i % ch] += static_cast<std::uint64_t>(data[i]) * data[i];
        }
        pixels_ += data.size() / ch;
    }

    /// Statistics of the normalized ([0, 1]) samples seen so far.
    ChannelStats stats() const {
        if (pixels_ == 0) {
            throw validation_error("no images accumulated");
        }
        ChannelStats s{std::vector<double>(sum_.size()), std::vector<double>(sum_.size())};
        const auto n = static_cast<long double>(pixels_);
        for (std::size_t c = 0; c < sum_.size(); ++c) {
            const long double mean = sum_[c] / n;
            const long double var = std::max<long double>(0, sq_[c] / n - mean * mean);
            s.mean[c] = static_cast<double>(mean / 255.0L);
            s.stddev[c] = static_cast<double>(std::sqrt(var) / 255.0L);
        }
        return s;
    }

private:
    std::vector<std::uint64_t> sum_;
    std::vector<std::uint64_t> sq_;
    std::uint64_t pixels_ = 0;
};

/// (x - mean[c]) / std[c] per channel.
inline FeatureTensor standardize(const FeatureTensor& t, std::span<const double> mean,
                                 std::span<const double> stddev) {
    const auto ch = static_cast<std::size_t>(t.channels);
    if (mean.size() != ch || stddev.size() != ch) {
        throw validation_error("standardize needs one mean and one std per channel");
    }
    for (std::size_t c = 0; c < ch; ++c) {
        if (!(stddev[c] > 0)) {
            throw validation_error("standardize: channel " + std::to_string(c) +
                                   " has zero standard deviation");
        }
    }
    FeatureTensor out{t.width, t.height, t.channels, std::vector<double>(t.data.size())};
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        out.data[i] = (t.data[i] - mean[i % ch]) / stddev[i % ch];
    }
    return out;
}

/// Per-image mode: standardize by the tensor's own statistics.
inline FeatureTensor standardize(const FeatureTensor& t) {
    const auto s = channel_stats(t);
    return standardize(t, s.mean, s.stddev);
}

} // namespace signkit
