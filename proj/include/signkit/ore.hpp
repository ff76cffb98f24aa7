#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annotations.hpp"
#include "detail/text.hpp"
#include "geometry.hpp"
#include "image_io.hpp"
#include "imaging.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace signkit {

enum class PatchLabel { signboard, non_signboard };

inline std::string_view to_string(PatchLabel label) {
    return label == PatchLabel::signboard ? "signboard" : "non-signboard";
}

inline constexpr int patch_side = 224;

struct OreOptions {
    int window = patch_side;
    int stride = patch_side / 2;
    double margin = 10.0;
};

struct PatchSample {
    std::string source_image_id;
    PatchLabel label = PatchLabel::signboard;
    BoundingBox origin_box;
    PixelImage pixels;
};

/// Ground-truth boxes grown by `margin` and clamped to the annotation's frame.
inline std::vector<BoundingBox> expanded_regions(const ImageAnnotation& ann, double margin) {
    std::vector<BoundingBox> out;
    out.reserve(ann.objects.size());
    for (const auto& obj : ann.objects) {
        out.push_back(expand(obj.box, margin, ann.frame()));
    }
    return out;
}

/// Window origins 0, stride, 2*stride, ... plus a final edge-aligned one.
inline std::vector<int> window_offsets(int extent, int window, int stride) {
    std::vector<int> offsets;
    const int last = extent - window;
    for (int p = 0; p <= last; p += stride) {
        offsets.push_back(p);
    }
    if (offsets.empty() || offsets.back() != last) {
        offsets.push_back(last);
    }
    return offsets;
}

/**
 * Every sliding window that shares no area with any margin-expanded
 * ground-truth box. Windows are listed row by row.
 */
inline std::vector<BoundingBox> negative_windows(const ImageAnnotation& ann,
                                                 const OreOptions& options = {}) {
    const auto frame = ann.frame();
    if (options.window < 1 || options.window > frame.width || options.window > frame.height) {
        throw validation_error("window of " + std::to_string(options.window) +
                               " px does not fit a " + std::to_string(frame.width) + "x" +
                               std::to_string(frame.height) + " image");
    }
    if (options.stride < 1) {
        throw validation_error("window stride must be at least 1");
    }
    const auto blocked = expanded_regions(ann, options.margin);
    const auto xs = window_offsets(frame.width, options.window, options.stride);
    const auto ys = window_offsets(frame.height, options.window, options.stride);

    std::vector<BoundingBox> out;
    for (int y : ys) {
        for (int x : xs) {
            const BoundingBox w(x, y, x + options.window, y + options.window);
            const bool clear = std::all_of(blocked.begin(), blocked.end(), [&](const auto& b) {
                return intersection_area(w, b) == 0.0;
            });
            if (clear) {
                out.push_back(w);
            }
        }
    }
    return out;
}

namespace detail {

inline void require_matching_frame(const PixelImage& img, const ImageAnnotation& ann) {
    if (img.size() != ann.frame()) {
        throw validation_error("image '" + ann.image_id + "' is " + std::to_string(img.width()) +
                               "x" + std::to_string(img.height()) + " but its annotation frame is " +
                               std::to_string(ann.image_width) + "x" +
                               std::to_string(ann.image_height));
    }
}

inline PixelImage to_rgb(PixelImage img) {
    if (img.channels() == 3) {
        return img;
    }
    PixelImage rgb(img.width(), img.height(), 3);
    auto dst = rgb.data();
    const auto src = img.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
    }
    return rgb;
}

inline PixelImage positive_patch(const PixelImage& img, const BoundingBox& region) {
    return to_rgb(resize_area(crop(img, region), patch_side, patch_side));
}

inline PixelImage negative_patch(const PixelImage& img, const BoundingBox& window) {
    return to_rgb(resize_area(crop(img, window), patch_side, patch_side));
}

} // namespace detail

/// Signboard crops: each ground-truth box expanded by `margin`, cropped and
/// resized to 224x224.
inline std::vector<PatchSample> extract_positives(const PixelImage& img, const ImageAnnotation& ann,
                                                  double margin = 10.0) {
    detail::require_matching_frame(img, ann);
    std::vector<PatchSample> out;
    for (const auto& region : expanded_regions(ann, margin)) {
        out.push_back({ann.image_id, PatchLabel::signboard, region,
                       detail::positive_patch(img, region)});
    }
    return out;
}

/// Background crops from every overlap-free sliding window.
inline std::vector<PatchSample> extract_negatives(const PixelImage& img, const ImageAnnotation& ann,
                                                  const OreOptions& options = {}) {
    detail::require_matching_frame(img, ann);
    std::vector<PatchSample> out;
    for (const auto& w : negative_windows(ann, options)) {
        out.push_back({ann.image_id, PatchLabel::non_signboard, w, detail::negative_patch(img, w)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusOptions {
    std::size_t total = 20000;
    std::uint64_t seed = 0;
    OreOptions ore;
    unsigned jobs = 1;
    std::ostream* log = &std::clog;
};

struct ManifestEntry {
    std::string path; ///< relative to the corpus directory
    std::string image_id;
    PatchLabel label = PatchLabel::signboard;
    BoundingBox origin_box;
};

struct PatchManifest {
    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;
    std::size_t requested_total = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t candidate_positives = 0;
    std::size_t candidate_negatives = 0;
    std::size_t images_used = 0;
    std::vector<std::string> skipped_images; ///< image ids whose file could not be read
};

namespace detail {

struct Candidate {
    std::size_t row = 0;   ///< index into the sorted row list
    std::size_t index = 0; ///< ordinal within its image and label
    BoundingBox box;
};

/// Picks m of the n candidates uniformly (selection sampling), preserving order.
inline std::vector<Candidate> sample_in_order(const std::vector<Candidate>& items, std::size_t m,
                                              std::mt19937_64& eng) {
    std::vector<Candidate> out;
    out.reserve(m);
    std::size_t needed = m;
    for (std::size_t i = 0; i < items.size() && needed > 0; ++i) {
        const std::size_t left = items.size() - i;
        if (uniform_index(eng, left) < needed) {
            out.push_back(items[i]);
            --needed;
        }
    }
    return out;
}

} // namespace detail

/**
 * Mines positives and negatives over the whole table and writes a balanced
 * corpus of `total` 224x224 PNG patches under `out_dir/patches`.
 *
 * Each label gets half of `total`; a label that runs short is taken whole and
 * the other fills the remainder. Oversupplied labels are subsampled with
 * `seed`. Images that cannot be read are logged and skipped.
 */
inline PatchManifest build_corpus(const AnnotationTable& table,
                                  const std::filesystem::path& image_root,
                                  const std::filesystem::path& out_dir,
                                  const CorpusOptions& options = {}) {
    namespace fs = std::filesystem;

    std::vector<const ImageAnnotation*> rows;
    for (const auto& row : table.rows) {
        rows.push_back(&row);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto* a, const auto* b) { return a->image_id < b->image_id; });

    PatchManifest manifest;
    manifest.seed = options.seed;
    manifest.requested_total = options.total;

    // Pass 1: which images can actually be read.
    std::vector<std::string> failures(rows.size());
    parallel_for(rows.size(), options.jobs, [&](std::size_t i) {
        try {
            (void)read_image(image_root / rows[i]->file_path);
        } catch (const error& e) {
            failures[i] = e.what();
            if (failures[i].empty()) {
                failures[i] = "unreadable";
            }
        }
    });

    std::vector<detail::Candidate> positives;
    std::vector<detail::Candidate> negatives;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!failures[i].empty()) {
            manifest.skipped_images.push_back(rows[i]->image_id);
            if (options.log != nullptr) {
                *options.log << "ore: skipping image '" << rows[i]->image_id << "': " << failures[i]
                             << '\n';
            }
            continue;
        }
        std::size_t n = 0;
        for (const auto& region : expanded_regions(*rows[i], options.ore.margin)) {
            positives.push_back({i, n++, region});
        }
        n = 0;
        for (const auto& w : negative_windows(*rows[i], options.ore)) {
            negatives.push_back({i, n++, w});
        }
    }
    manifest.candidate_positives = positives.size();
    manifest.candidate_negatives = negatives.size();

    const std::size_t total = options.total;
    std::size_t n_pos = std::min(positives.size(), total / 2);
    const std::size_t n_neg = std::min(negatives.size(), total - n_pos);
    n_pos = std::min(positives.size(), total - n_neg);
    if (n_pos + n_neg < total && options.log != nullptr) {
        *options.log << "ore: only " << (n_pos + n_neg) << " candidate patches for a requested "
                     << total << '\n';
    }
    if (n_pos != n_neg && options.log != nullptr && total > 0) {
        *options.log << "ore: class imbalance, " << n_pos << " signboard vs " << n_neg
                     << " non-signboard\n";
    }

    std::mt19937_64 eng(options.seed);
    const auto chosen_pos = detail::sample_in_order(positives, n_pos, eng);
    const auto chosen_neg = detail::sample_in_order(negatives, n_neg, eng);
    manifest.positives = chosen_pos.size();
    manifest.negatives = chosen_neg.size();

    // Group the selection by image so each file is decoded once.
    struct Pick {
        const detail::Candidate* candidate;
        PatchLabel label;
    };
    std::vector<std::vector<Pick>> per_image(rows.size());
    for (const auto& c : chosen_pos) {
        per_image[c.row].push_back({&c, PatchLabel::signboard});
    }
    for (const auto& c : chosen_neg) {
        per_image[c.row].push_back({&c, PatchLabel::non_signboard});
    }

    const auto patch_dir = out_dir / "patches";
    fs::create_directories(patch_dir);
    std::vector<std::vector<ManifestEntry>> written(rows.size());
    parallel_for(rows.size(), options.jobs, [&](std::size_t i) {
        if (per_image[i].empty()) {
            return;
        }
        const auto& ann = *rows[i];
        auto img = read_image(image_root / ann.file_path);
        if (img.size() != ann.frame()) {
            img = resize_area(img, ann.image_width, ann.image_height);
        }
        for (const auto& pick : per_image[i]) {
            const auto& c = *pick.candidate;
            const auto name = ann.image_id + "_" + std::string(to_string(pick.label)) + "_" +
                              std::to_string(c.index) + ".png";
            const auto pixels = pick.label == PatchLabel::signboard
                                    ? detail::positive_patch(img, c.box)
                                    : detail::negative_patch(img, c.box);
            write_png(patch_dir / name, pixels);
            written[i].push_back({"patches/" + name, ann.image_id, pick.label, c.box});
        }
    });
    for (auto& group : written) {
        manifest.images_used += group.empty() ? 0 : 1;
        for (auto& e : group) {
            manifest.entries.push_back(std::move(e));
        }
    }
    return manifest;
}

/// Manifest CSV: path,image_id,label,xmin,ymin,xmax,ymax
inline void write_patch_manifest_csv(std::ostream& out, const PatchManifest& manifest) {
    std::string text = "path,image_id,label,xmin,ymin,xmax,ymax\n";
    for (const auto& e : manifest.entries) {
        detail::append_csv_field(text, e.path);
        text.push_back(',');
        detail::append_csv_field(text, e.image_id);
        text.push_back(',');
        text.append(to_string(e.label));
        for (double v : {e.origin_box.xmin(), e.origin_box.ymin(), e.origin_box.xmax(),
                         e.origin_box.ymax()}) {
            text.push_back(',');
            text.append(detail::format_number(v));
        }
        text.push_back('\n');
    }
    out << text;
}

inline nlohmann::json to_json(const PatchManifest& m) {
    return {
        {"seed", m.seed},
        {"requested_total", m.requested_total},
        {"counts", {{"signboard", m.positives}, {"non-signboard", m.negatives}}},
        {"candidates",
         {{"signboard", m.candidate_positives}, {"non-signboard", m.candidate_negatives}}},
        {"balanced", m.positives == m.negatives},
        {"images_used", m.images_used},
        {"skipped_images", m.skipped_images},
    };
}

} // namespace signkit
