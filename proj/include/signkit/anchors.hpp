#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <span>
#include <vector>

#include "annotations.hpp"
#include "aras.hpp"
#include "geometry.hpp"
#include "parallel.hpp"

namespace signkit {

/// How scale and ratio turn into an anchor's width and height.
enum class AnchorMode {
    /// Index-paired: height = scale, width = scale * ratio. One anchor per pair.
    height_scale,
    /// Cross product: width = scale * sqrt(ratio), height = scale / sqrt(ratio).
    area,
};

/// Stride between anchor centers, matching a VGG16 conv5 feature map.
inline constexpr int default_anchor_stride = 16;

/// Baseline anchor set: scales 128/256/512 and w:h ratios 1:1, 1:2, 2:1.
struct AnchorShapes {
    std::vector<double> scales;
    std::vector<double> ratios;
};

inline AnchorShapes default_anchor_shapes() { return {{128, 256, 512}, {1.0, 0.5, 2.0}}; }

struct AnchorGrid {
    FrameSize image;
    int stride = default_anchor_stride;
    std::size_t columns = 0;       ///< lattice points along x
    std::size_t rows = 0;          ///< lattice points along y
    std::size_t per_location = 0;  ///< anchors per lattice point before clipping
    std::vector<BoundingBox> anchors; ///< clipped to the image, zero-area ones dropped

    std::size_t locations() const noexcept { return columns * rows; }
    std::size_t generated() const noexcept { return locations() * per_location; }
};

/**
 * Places anchors at lattice points ((i + 0.5) * stride, (j + 0.5) * stride)
 * for i < max(1, width / stride), j < max(1, height / stride).
 */
inline AnchorGrid generate_anchors(std::span<const double> scales, std::span<const double> ratios,
                                   FrameSize image, int stride, AnchorMode mode) {
    if (stride < 1) {
        throw validation_error("anchor stride must be at least 1");
    }
    if (image.width < 1 || image.height < 1) {
        throw validation_error("anchor image size must be positive");
    }
    if (scales.empty() || ratios.empty()) {
        throw validation_error("anchor shapes need at least one scale and one ratio");
    }
    for (double v : scales) {
        if (!(v > 0) || !std::isfinite(v)) {
            throw validation_error("anchor scales must be positive");
        }
    }
    for (double v : ratios) {
        if (!(v > 0) || !std::isfinite(v)) {
            throw validation_error("anchor ratios must be positive");
        }
    }

    std::vector<std::pair<double, double>> shapes; // (width, height)
    if (mode == AnchorMode::height_scale) {
        if (scales.size() != ratios.size()) {
            throw validation_error("height-scale anchors need as many ratios as scales");
        }
        for (std::size_t i = 0; i < scales.size(); ++i) {
            shapes.emplace_back(scales[i] * ratios[i], scales[i]);
        }
    } else {
        for (double s : scales) {
            for (double r : ratios) {
                const double root = std::sqrt(r);
                shapes.emplace_back(s * root, s / root);
            }
        }
    }

    AnchorGrid grid;
    grid.image = image;
    grid.stride = stride;
    grid.columns = static_cast<std::size_t>(std::max(1, image.width / stride));
    grid.rows = static_cast<std::size_t>(std::max(1, image.height / stride));
    grid.per_location = shapes.size();
    grid.anchors.reserve(grid.generated());
    for (std::size_t j = 0; j < grid.rows; ++j) {
        const double cy = (static_cast<double>(j) + 0.5) * stride;
        for (std::size_t i = 0; i < grid.columns; ++i) {
            const double cx = (static_cast<double>(i) + 0.5) * stride;
            for (const auto& [w, h] : shapes) {
                double x0 = cx - 0.5 * w;
                double y0 = cy - 0.5 * h;
                double x1 = cx + 0.5 * w;
                double y1 = cy + 0.5 * h;
                if (clip_to_frame(x0, y0, x1, y1, image)) {
                    grid.anchors.emplace_back(x0, y0, x1, y1);
                }
            }
        }
    }
    return grid;
}

inline AnchorGrid generate_anchors(const AnchorSpec& spec, FrameSize image,
                                   int stride = default_anchor_stride,
                                   AnchorMode mode = AnchorMode::height_scale) {
    validate(spec);
    return generate_anchors(spec.scales, spec.ratios, image, stride, mode);
}

inline AnchorGrid generate_anchors(const AnchorShapes& shapes, FrameSize image,
                                   int stride = default_anchor_stride,
                                   AnchorMode mode = AnchorMode::area) {
    return generate_anchors(shapes.scales, shapes.ratios, image, stride, mode);
}

struct CoverageReport {
    double recall_at_iou = 0.0;
    double mean_best_iou = 0.0;
    double threshold = 0.7;
    std::size_t n_gt = 0;
    std::size_t n_anchors = 0;
    std::vector<double> best_iou; ///< per ground-truth box, table order
};

/// For every ground-truth box, the best IoU any anchor achieves; recall is the
/// fraction whose best IoU reaches `iou_threshold`.
inline CoverageReport coverage_recall(std::span<const BoundingBox> anchors,
                                      const AnnotationTable& table, double iou_threshold = 0.7,
                                      unsigned jobs = 1) {
    std::vector<const BoundingBox*> gts;
    for (const auto& row : table.rows) {
        for (const auto& obj : row.objects) {
            gts.push_back(&obj.box);
        }
    }
    if (gts.empty()) {
        throw validation_error("coverage needs at least one ground-truth box");
    }

    CoverageReport report;
    report.threshold = iou_threshold;
    report.n_gt = gts.size();
    report.n_anchors = anchors.size();
    report.best_iou.assign(gts.size(), 0.0);
    parallel_for(gts.size(), jobs, [&](std::size_t g) {
        double best = 0.0;
        for (const auto& a : anchors) {
            best = std::max(best, iou(*gts[g], a));
        }
        report.best_iou[g] = best;
    });

    std::size_t hits = 0;
    double sum = 0.0;
    for (double b : report.best_iou) {
        hits += b >= iou_threshold ? 1 : 0;
        sum += b;
    }
    report.recall_at_iou = static_cast<double>(hits) / static_cast<double>(gts.size());
    report.mean_best_iou = sum / static_cast<double>(gts.size());
    return report;
}

inline CoverageReport coverage_recall(const AnchorGrid& grid, const AnnotationTable& table,
                                      double iou_threshold = 0.7, unsigned jobs = 1) {
    return coverage_recall(grid.anchors, table, iou_threshold, jobs);
}

inline nlohmann::json to_json(const CoverageReport& r) {
    return {
        {"recall_at_iou", r.recall_at_iou},
        {"mean_best_iou", r.mean_best_iou},
        {"threshold", r.threshold},
        {"n_gt", r.n_gt},
        {"n_anchors", r.n_anchors},
    };
}

} // namespace signkit
