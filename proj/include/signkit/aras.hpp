#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "annotations.hpp"
#include "clustering.hpp"
#include "error.hpp"

namespace signkit {

/// Raw inputs behind an AnchorSpec, kept so the pairing can be audited.
struct ArasProvenance {
    std::vector<double> wc; ///< width centers, ascending, before padding
    std::vector<double> hc; ///< height centers, ascending, before padding
    double w_max = 0.0;
    double h_max = 0.0;

    friend bool operator==(const ArasProvenance&, const ArasProvenance&) = default;
};

/**
 * K+1 index-paired anchor shapes. Pair i is an anchor `scales[i]` pixels
 * tall and `scales[i] * ratios[i]` pixels wide (ratio expressed as X in X:1).
 * The last pair comes from the largest width and height in the data.
 */
struct AnchorSpec {
    std::size_t k = 0;
    std::vector<double> ratios;
    std::vector<double> scales;
    ArasProvenance provenance;

    /// True when clustering found fewer than k distinct widths or heights.
    bool degenerate() const noexcept {
        return provenance.wc.size() < k || provenance.hc.size() < k;
    }

    friend bool operator==(const AnchorSpec&, const AnchorSpec&) = default;
};

inline void validate(const AnchorSpec& spec) {
    if (spec.ratios.size() != spec.k + 1 || spec.scales.size() != spec.k + 1) {
        throw validation_error("anchor spec must hold k+1 ratios and k+1 scales");
    }
    for (std::size_t i = 0; i <= spec.k; ++i) {
        if (!(spec.ratios[i] > 0) || !(spec.scales[i] > 0) || !std::isfinite(spec.ratios[i]) ||
            !std::isfinite(spec.scales[i])) {
            throw validation_error("anchor spec entries must be positive and finite");
        }
    }
}

struct BoxDims {
    std::vector<double> widths;
    std::vector<double> heights;
};

/// One (width, height) per ground-truth box, in table order.
inline BoxDims collect_dims(const AnnotationTable& table) {
    BoxDims dims;
    for (const auto& row : table.rows) {
        for (const auto& obj : row.objects) {
            dims.widths.push_back(obj.box.width());
            dims.heights.push_back(obj.box.height());
        }
    }
    if (dims.widths.empty()) {
        throw validation_error("annotation table holds no boxes");
    }
    return dims;
}

namespace detail {

// Degenerate clustering yields fewer than k centers; repeat the largest so
// every spec keeps k+1 pairs.
inline std::vector<double> pad_centers(std::vector<double> centers, std::size_t k) {
    while (centers.size() < k) {
        centers.push_back(centers.back());
    }
    return centers;
}

} // namespace detail

/// Builds the anchor spec from width and height lists.
inline AnchorSpec aras(const BoxDims& dims, std::size_t k = 3, std::uint64_t seed = 0,
                       const KMeansOptions& options = {}) {
    if (dims.widths.empty() || dims.widths.size() != dims.heights.size()) {
        throw validation_error("aras needs one width and one height per box");
    }
    if (k == 0) {
        throw validation_error("aras: k must be at least 1");
    }
    // Width and height use independent streams derived from the one seed.
    const auto wc = kmeans_1d(dims.widths, k, seed, options);
    const auto hc = kmeans_1d(dims.heights, k, splitmix64(seed), options);

    AnchorSpec spec;
    spec.k = k;
    spec.provenance.wc = wc.centers;
    spec.provenance.hc = hc.centers;
    spec.provenance.w_max = *std::max_element(dims.widths.begin(), dims.widths.end());
    spec.provenance.h_max = *std::max_element(dims.heights.begin(), dims.heights.end());

    const auto widths = detail::pad_centers(wc.centers, k);
    const auto heights = detail::pad_centers(hc.centers, k);
    for (std::size_t i = 0; i < k; ++i) {
        spec.ratios.push_back(widths[i] / heights[i]);
        spec.scales.push_back(heights[i]);
    }
    spec.ratios.push_back(spec.provenance.w_max / spec.provenance.h_max);
    spec.scales.push_back(spec.provenance.h_max);
    return spec;
}

inline AnchorSpec aras(const AnnotationTable& table, std::size_t k = 3, std::uint64_t seed = 0,
                       const KMeansOptions& options = {}) {
    return aras(collect_dims(table), k, seed, options);
}

/// Report form: ratios to two decimals as X:1, scales to whole pixels.
inline std::string summarize(const AnchorSpec& spec) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os << "anchor ratios (";
    for (std::size_t i = 0; i < spec.ratios.size(); ++i) {
        os << (i ? ", " : "") << std::setprecision(2) << spec.ratios[i] << ":1";
    }
    os << ") anchor scales (";
    for (std::size_t i = 0; i < spec.scales.size(); ++i) {
        os << (i ? ", " : "") << std::setprecision(0) << spec.scales[i];
    }
    os << ")";
    return os.str();
}

inline nlohmann::json to_json(const AnchorSpec& spec) {
    return {
        {"k", spec.k},
        {"ratios", spec.ratios},
        {"scales", spec.scales},
        {"degenerate", spec.degenerate()},
        {"provenance",
         {{"wc", spec.provenance.wc},
          {"hc", spec.provenance.hc},
          {"w_max", spec.provenance.w_max},
          {"h_max", spec.provenance.h_max}}},
    };
}

inline AnchorSpec anchor_spec_from_json(const nlohmann::json& j) {
    AnchorSpec spec;
    try {
        spec.k = j.at("k").get<std::size_t>();
        spec.ratios = j.at("ratios").get<std::vector<double>>();
        spec.scales = j.at("scales").get<std::vector<double>>();
        if (const auto p = j.find("provenance"); p != j.end()) {
            spec.provenance.wc = p->value("wc", std::vector<double>{});
            spec.provenance.hc = p->value("hc", std::vector<double>{});
            spec.provenance.w_max = p->value("w_max", 0.0);
            spec.provenance.h_max = p->value("h_max", 0.0);
        }
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(std::string("anchor spec JSON: ") + e.what());
    }
    validate(spec);
    return spec;
}

} // namespace signkit
