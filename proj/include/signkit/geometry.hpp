#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "error.hpp"

namespace signkit {

/// Width and height of an image or coordinate frame, in pixels.
struct FrameSize {
    int width = 0;
    int height = 0;

    friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

/// Canonical frame every image and annotation is mapped into at ingest.
inline constexpr FrameSize canonical_frame{1000, 600};

/**
 * Axis-aligned pixel rectangle. Min edges are inclusive, max edges are
 * exclusive, so an integer VOC box (48, 59, 420, 180) covers exactly
 * 372 x 121 pixels.
 *
 * Construction rejects anything with non-positive area, negative or
 * non-finite coordinates. There is no default state.
 */
class BoundingBox {
public:
    BoundingBox(double xmin, double ymin, double xmax, double ymax)
        : xmin_(xmin), ymin_(ymin), xmax_(xmax), ymax_(ymax) {
        if (!(std::isfinite(xmin) && std::isfinite(ymin) && std::isfinite(xmax) &&
              std::isfinite(ymax))) {
            throw validation_error("bounding box has non-finite coordinate");
        }
        if (xmin < 0 || ymin < 0) {
            std::ostringstream os;
            os << "bounding box has negative coordinate: (" << xmin << ", " << ymin << ", "
               << xmax << ", " << ymax << ")";
            throw validation_error(os.str());
        }
        if (!(xmin < xmax) || !(ymin < ymax)) {
            std::ostringstream os;
            os << "bounding box has zero or negative area: (" << xmin << ", " << ymin << ", "
               << xmax << ", " << ymax << ")";
            throw validation_error(os.str());
        }
    }

    double xmin() const noexcept { return xmin_; }
    double ymin() const noexcept { return ymin_; }
    double xmax() const noexcept { return xmax_; }
    double ymax() const noexcept { return ymax_; }
    double width() const noexcept { return xmax_ - xmin_; }
    double height() const noexcept { return ymax_ - ymin_; }
    double center_x() const noexcept { return 0.5 * (xmin_ + xmax_); }
    double center_y() const noexcept { return 0.5 * (ymin_ + ymax_); }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

private:
    double xmin_;
    double ymin_;
    double xmax_;
    double ymax_;
};

inline std::ostream& operator<<(std::ostream& os, const BoundingBox& b) {
    return os << '(' << b.xmin() << ", " << b.ymin() << ", " << b.xmax() << ", " << b.ymax()
              << ')';
}

inline double area(const BoundingBox& b) noexcept { return b.width() * b.height(); }

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) noexcept {
    const double w = std::min(a.xmax(), b.xmax()) - std::max(a.xmin(), b.xmin());
    const double h = std::min(a.ymax(), b.ymax()) - std::max(a.ymin(), b.ymin());
    if (w <= 0 || h <= 0) {
        return 0.0;
    }
    return w * h;
}

/// Intersection over union, in [0, 1]. Symmetric in its arguments.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
    const double inter = intersection_area(a, b);
    if (inter == 0.0) {
        return 0.0;
    }
    if (a == b) {
        return 1.0;
    }
    const double uni = area(a) + area(b) - inter;
    return std::min(1.0, inter / uni);
}

/// True when `outer` covers every point of `inner`.
inline bool contains(const BoundingBox& outer, const BoundingBox& inner) noexcept {
    return outer.xmin() <= inner.xmin() && outer.ymin() <= inner.ymin() &&
           outer.xmax() >= inner.xmax() && outer.ymax() >= inner.ymax();
}

inline bool within_frame(const BoundingBox& b, FrameSize frame) noexcept {
    return b.xmax() <= frame.width && b.ymax() <= frame.height;
}

/// Moves every edge outward by `margin`, then clamps to the frame.
inline BoundingBox expand(const BoundingBox& b, double margin, FrameSize bounds) {
    if (margin < 0) {
        throw validation_error("expand margin must be non-negative");
    }
    if (bounds.width <= 0 || bounds.height <= 0) {
        throw validation_error("expand bounds must be positive");
    }
    const double w = bounds.width;
    const double h = bounds.height;
    return BoundingBox(std::clamp(b.xmin() - margin, 0.0, w), std::clamp(b.ymin() - margin, 0.0, h),
                       std::clamp(b.xmax() + margin, 0.0, w), std::clamp(b.ymax() + margin, 0.0, h));
}

inline BoundingBox rescale(const BoundingBox& b, double sx, double sy) {
    if (!(sx > 0) || !(sy > 0)) {
        throw validation_error("rescale factors must be positive");
    }
    return BoundingBox(b.xmin() * sx, b.ymin() * sy, b.xmax() * sx, b.ymax() * sy);
}

/// Maps a box from a `from` frame into a `to` frame. Multiplies before
/// dividing so integer edges that sit on the frame border land on it exactly.
inline BoundingBox rescale_between(const BoundingBox& b, FrameSize from, FrameSize to) {
    if (from.width <= 0 || from.height <= 0 || to.width <= 0 || to.height <= 0) {
        throw validation_error("rescale frames must be positive");
    }
    const auto map = [](double v, int src, int dst) {
        return std::min(static_cast<double>(dst), v * dst / src);
    };
    return BoundingBox(map(b.xmin(), from.width, to.width), map(b.ymin(), from.height, to.height),
                       map(b.xmax(), from.width, to.width), map(b.ymax(), from.height, to.height));
}

/// Shifts the box so that (dx, dy) becomes its new origin offset.
inline BoundingBox translate(const BoundingBox& b, double dx, double dy) {
    return BoundingBox(b.xmin() + dx, b.ymin() + dy, b.xmax() + dx, b.ymax() + dy);
}

/// Clips to the frame. Returns false when nothing of positive area remains.
inline bool clip_to_frame(double& xmin, double& ymin, double& xmax, double& ymax,
                          FrameSize frame) noexcept {
    xmin = std::clamp(xmin, 0.0, static_cast<double>(frame.width));
    xmax = std::clamp(xmax, 0.0, static_cast<double>(frame.width));
    ymin = std::clamp(ymin, 0.0, static_cast<double>(frame.height));
    ymax = std::clamp(ymax, 0.0, static_cast<double>(frame.height));
    return xmin < xmax && ymin < ymax;
}

} // namespace signkit
