#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "annotations.hpp"
#include "detail/text.hpp"
#include "error.hpp"
#include "geometry.hpp"

namespace signkit {

struct DetectionRecord {
    std::string image_id;
    std::string class_name;
    double score = 0.0;
    BoundingBox box;
};

inline DetectionRecord make_detection(std::string image_id, std::string class_name, double score,
                                      const BoundingBox& box) {
    if (!(score >= 0.0 && score <= 1.0)) {
        throw validation_error("detection score must lie in [0, 1], got " +
                               detail::format_number(score));
    }
    return {std::move(image_id), std::move(class_name), score, box};
}

// ---------------------------------------------------------------------------
// Non-maximum suppression

/**
 * Greedy NMS over detections of one image. Candidates are visited by
 * descending score (ties: smaller xmin, then smaller ymin, then input order);
 * a candidate is kept unless its IoU with an already kept record exceeds
 * `iou_threshold`. At most `max_out` records are returned.
 */
inline std::vector<DetectionRecord> nms(std::span<const DetectionRecord> dets,
                                        double iou_threshold = 0.7, std::size_t max_out = 300) {
    for (const auto& d : dets) {
        if (d.image_id != dets.front().image_id) {
            throw validation_error("nms expects detections from a single image");
        }
    }
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& da = dets[a];
        const auto& db = dets[b];
        if (da.score != db.score) {
            return da.score > db.score;
        }
        if (da.box.xmin() != db.box.xmin()) {
            return da.box.xmin() < db.box.xmin();
        }
        return da.box.ymin() < db.box.ymin();
    });

    std::vector<DetectionRecord> kept;
    for (std::size_t idx : order) {
        if (kept.size() >= max_out) {
            break;
        }
        const auto& cand = dets[idx];
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const auto& k) {
            return iou(k.box, cand.box) > iou_threshold;
        });
        if (!suppressed) {
            kept.push_back(cand);
        }
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Matching and average precision

enum class Match : std::uint8_t { false_positive, true_positive };

inline constexpr std::size_t unmatched = static_cast<std::size_t>(-1);

struct MatchResult {
    std::vector<Match> flags;          ///< per detection, input order
    std::vector<std::size_t> gt_index; ///< matched ground truth, or `unmatched`
    std::size_t true_positives = 0;
    std::size_t false_negatives = 0;
};

/// Indices of `dets` by descending score, ties kept in input order.
inline std::vector<std::size_t> score_order(std::span<const DetectionRecord> dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    return order;
}

/**
 * Greedy matching for one image and one class. In descending score order,
 * each detection claims the still-unclaimed ground truth with the highest
 * IoU, provided that IoU reaches `iou_threshold`; otherwise it is a false
 * positive. Ground truths left unclaimed are false negatives.
 */
inline MatchResult match_detections(std::span<const DetectionRecord> dets,
                                    std::span<const BoundingBox> gts, double iou_threshold = 0.7) {
    MatchResult r;
    r.flags.assign(dets.size(), Match::false_positive);
    r.gt_index.assign(dets.size(), unmatched);
    std::vector<bool> taken(gts.size(), false);
    for (std::size_t d : score_order(dets)) {
        std::size_t best = unmatched;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) {
                continue;
            }
            const double v = iou(dets[d].box, gts[g]);
            if (v > best_iou) {
                best_iou = v;
                best = g;
            }
        }
        if (best != unmatched && best_iou >= iou_threshold) {
            taken[best] = true;
            r.flags[d] = Match::true_positive;
            r.gt_index[d] = best;
            ++r.true_positives;
        }
    }
    r.false_negatives = gts.size() - r.true_positives;
    return r;
}

enum class ApMode { all_point, eleven_point };

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
};

/// Precision/recall after each detection, for flags already in score order.
inline std::vector<PrPoint> pr_curve(std::span<const Match> flags, std::size_t n_gt) {
    std::vector<PrPoint> curve;
    curve.reserve(flags.size());
    std::size_t tp = 0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        tp += flags[i] == Match::true_positive ? 1 : 0;
        const double recall =
            n_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(n_gt);
        curve.push_back({recall, static_cast<double>(tp) / static_cast<double>(i + 1)});
    }
    return curve;
}

/**
 * Area under the precision/recall curve of flags in descending score order.
 *
 * all_point: precision at each recall level is replaced by the best precision
 * at any recall at least as high, then summed over recall steps.
 * eleven_point: mean interpolated precision at recall 0, 0.1, ..., 1.
 *
 * With no ground truth, AP is 1 when there are also no detections and 0 otherwise.
 */
inline double average_precision(std::span<const Match> flags, std::size_t n_gt,
                                ApMode mode = ApMode::all_point) {
    if (n_gt == 0) {
        return flags.empty() ? 1.0 : 0.0;
    }
    const auto curve = pr_curve(flags, n_gt);
    std::vector<double> envelope(curve.size());
    double running = 0.0;
    for (std::size_t i = curve.size(); i-- > 0;) {
        running = std::max(running, curve[i].precision);
        envelope[i] = running;
    }

    if (mode == ApMode::eleven_point) {
        double sum = 0.0;
        for (int step = 0; step <= 10; ++step) {
            const double level = step / 10.0;
            double best = 0.0;
            for (std::size_t i = 0; i < curve.size(); ++i) {
                if (curve[i].recall >= level - 1e-12) {
                    best = envelope[i];
                    break;
                }
            }
            sum += best;
        }
        return sum / 11.0;
    }

    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve[i].recall > prev_recall) {
            ap += (curve[i].recall - prev_recall) * envelope[i];
            prev_recall = curve[i].recall;
        }
    }
    return ap;
}

// ---------------------------------------------------------------------------
// Dataset evaluation

struct ClassReport {
    double ap = 0.0;
    std::size_t n_gt = 0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    std::vector<PrPoint> curve;
};

struct EvalReport {
    double iou_threshold = 0.7;
    ApMode ap_mode = ApMode::all_point;
    std::map<std::string, ClassReport> classes; ///< every class seen in GT or predictions
    std::vector<std::string> map_classes;       ///< classes present in GT, averaged into mAP
    double map = 0.0;
};

struct EvalOptions {
    double iou_threshold = 0.7;
    ApMode ap_mode = ApMode::all_point;
};

/**
 * Pools every image's matches per class, ordered by descending score, and
 * computes AP per class. mAP averages the classes that occur in the ground
 * truth; a class only predicted is reported but not averaged.
 */
inline EvalReport evaluate(std::span<const DetectionRecord> preds, const AnnotationTable& gts,
                           const EvalOptions& options = {}) {
    std::map<std::string, std::size_t, std::less<>> row_of;
    for (std::size_t i = 0; i < gts.rows.size(); ++i) {
        row_of.emplace(gts.rows[i].image_id, i);
    }
    std::set<std::string> unknown;
    for (const auto& p : preds) {
        if (row_of.find(p.image_id) == row_of.end()) {
            unknown.insert(p.image_id);
        }
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& id : unknown) {
            list += (list.empty() ? "" : ", ") + id;
        }
        throw validation_error("predictions reference unknown image id(s): " + list);
    }

    // (class, row) -> prediction indices, input order
    std::map<std::pair<std::string, std::size_t>, std::vector<std::size_t>> groups;
    std::set<std::string> class_names(gts.class_names.begin(), gts.class_names.end());
    for (const auto& row : gts.rows) {
        for (const auto& obj : row.objects) {
            class_names.insert(obj.class_name);
        }
    }
    std::set<std::string> gt_classes = class_names;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        groups[{preds[i].class_name, row_of.at(preds[i].image_id)}].push_back(i);
        class_names.insert(preds[i].class_name);
    }

    EvalReport report;
    report.iou_threshold = options.iou_threshold;
    report.ap_mode = options.ap_mode;
    for (const auto& cls : class_names) {
        struct Scored {
            double score;
            std::size_t index;
            Match flag;
        };
        std::vector<Scored> pooled;
        ClassReport cr;
        for (std::size_t r = 0; r < gts.rows.size(); ++r) {
            std::vector<BoundingBox> boxes;
            for (const auto& obj : gts.rows[r].objects) {
                if (obj.class_name == cls) {
                    boxes.push_back(obj.box);
                }
            }
            cr.n_gt += boxes.size();
            std::vector<DetectionRecord> dets;
            std::vector<std::size_t> ids;
            if (const auto it = groups.find({cls, r}); it != groups.end()) {
                for (std::size_t i : it->second) {
                    dets.push_back(preds[i]);
                    ids.push_back(i);
                }
            }
            const auto m = match_detections(dets, boxes, options.iou_threshold);
            cr.false_negatives += m.false_negatives;
            for (std::size_t d = 0; d < dets.size(); ++d) {
                pooled.push_back({dets[d].score, ids[d], m.flags[d]});
            }
        }
        std::stable_sort(pooled.begin(), pooled.end(), [](const Scored& a, const Scored& b) {
            if (a.score != b.score) {
                return a.score > b.score;
            }
            return a.index < b.index;
        });
        std::vector<Match> flags;
        flags.reserve(pooled.size());
        for (const auto& s : pooled) {
            flags.push_back(s.flag);
            if (s.flag == Match::true_positive) {
                ++cr.true_positives;
            } else {
                ++cr.false_positives;
            }
        }
        cr.ap = average_precision(flags, cr.n_gt, options.ap_mode);
        cr.curve = pr_curve(flags, cr.n_gt);
        report.classes.emplace(cls, std::move(cr));
    }

    double sum = 0.0;
    for (const auto& cls : gt_classes) {
        report.map_classes.push_back(cls);
        sum += report.classes.at(cls).ap;
    }
    report.map = gt_classes.empty() ? 0.0 : sum / static_cast<double>(gt_classes.size());
    return report;
}

/// Prediction CSV with header: image_id,class,score,xmin,ymin,xmax,ymax
inline std::vector<DetectionRecord> read_predictions_csv(std::istream& in) {
    static constexpr std::string_view header_names[] = {"image_id", "class", "score", "xmin",
                                                        "ymin",     "xmax",  "ymax"};
    std::string line;
    if (!std::getline(in, line)) {
        throw schema_error("prediction CSV is empty: header row required");
    }
    const auto header = detail::split_csv_record(line, 1);
    for (std::size_t i = 0; i < std::size(header_names); ++i) {
        if (i >= header.size() || detail::trim(header[i]) != header_names[i]) {
            throw schema_error("prediction CSV missing column '" + std::string(header_names[i]) +
                               "' at position " + std::to_string(i + 1));
        }
    }
    std::vector<DetectionRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto f = detail::split_csv_record(line, line_no);
        const auto where = "line " + std::to_string(line_no);
        if (f.size() != std::size(header_names)) {
            throw parse_error(where + ": expected 7 fields, found " + std::to_string(f.size()),
                              line_no);
        }
        double v[5];
        for (std::size_t c = 0; c < 5; ++c) {
            const auto parsed = detail::parse_double(f[2 + c]);
            if (!parsed) {
                throw parse_error(where + ": " + std::string(header_names[2 + c]) + " '" +
                                      f[2 + c] + "' is not numeric",
                                  line_no);
            }
            v[c] = *parsed;
        }
        try {
            out.push_back(make_detection(f[0], f[1], v[0], BoundingBox(v[1], v[2], v[3], v[4])));
        } catch (const validation_error& e) {
            throw validation_error(where + ": " + e.what());
        }
    }
    return out;
}

inline std::string_view to_string(ApMode mode) {
    return mode == ApMode::all_point ? "allpoint" : "11point";
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [name, c] : r.classes) {
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& p : c.curve) {
            curve.push_back({{"recall", p.recall}, {"precision", p.precision}});
        }
        classes[name] = {
            {"ap", c.ap},
            {"n_gt", c.n_gt},
            {"tp", c.true_positives},
            {"fp", c.false_positives},
            {"fn", c.false_negatives},
            {"curve", std::move(curve)},
        };
    }
    return {
        {"iou_threshold", r.iou_threshold},
        {"ap_mode", to_string(r.ap_mode)},
        {"map", r.map},
        {"map_classes", r.map_classes},
        {"classes", std::move(classes)},
    };
}

} // namespace signkit
