#pragma once

#include <expat.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "detail/text.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "parallel.hpp"

namespace signkit {

struct LabeledBox {
    std::string class_name;
    BoundingBox box;

    friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

/**
 * Ground truth for one image.
 *
 * `image_width`/`image_height` describe the frame the boxes live in. After
 * ingest that is the canonical frame; `source_width`/`source_height` keep the
 * dimensions of the original file so the rescale factor stays recoverable.
 */
struct ImageAnnotation {
    std::string image_id;
    std::string file_path;
    int image_width = 0;
    int image_height = 0;
    int source_width = 0;
    int source_height = 0;
    std::vector<LabeledBox> objects;

    FrameSize frame() const noexcept { return {image_width, image_height}; }
    FrameSize source_frame() const noexcept { return {source_width, source_height}; }

    friend bool operator==(const ImageAnnotation&, const ImageAnnotation&) = default;
};

/// Flat ground-truth table. `class_names` is kept sorted and unique.
struct AnnotationTable {
    std::vector<ImageAnnotation> rows;
    std::vector<std::string> class_names;

    std::size_t box_count() const noexcept {
        std::size_t n = 0;
        for (const auto& row : rows) {
            n += row.objects.size();
        }
        return n;
    }

    void refresh_class_names() {
        std::set<std::string> names;
        for (const auto& row : rows) {
            for (const auto& obj : row.objects) {
                names.insert(obj.class_name);
            }
        }
        class_names.assign(names.begin(), names.end());
    }

    const ImageAnnotation* find(std::string_view image_id) const {
        for (const auto& row : rows) {
            if (row.image_id == image_id) {
                return &row;
            }
        }
        return nullptr;
    }

    friend bool operator==(const AnnotationTable&, const AnnotationTable&) = default;
};

/// Box-level policy for annotations whose boxes break the geometry invariants.
enum class BoxPolicy {
    strict,       ///< throw validation_error
    drop_invalid, ///< skip the box and count it
};

namespace detail {

struct XmlNode {
    std::string name;
    std::string text;
    std::vector<XmlNode> children;

    const XmlNode* child(std::string_view n) const {
        for (const auto& c : children) {
            if (c.name == n) {
                return &c;
            }
        }
        return nullptr;
    }
};

struct XmlBuilder {
    XmlNode root;
    std::vector<XmlNode*> open;
    bool seen_root = false;
};

inline void XMLCALL xml_start(void* user, const XML_Char* name, const XML_Char**) {
    auto* b = static_cast<XmlBuilder*>(user);
    if (b->open.empty()) {
        b->root.name = name;
        b->seen_root = true;
        b->open.push_back(&b->root);
        return;
    }
    auto& kids = b->open.back()->children;
    kids.push_back(XmlNode{name, {}, {}});
    b->open.push_back(&kids.back());
}

inline void XMLCALL xml_end(void* user, const XML_Char*) {
    static_cast<XmlBuilder*>(user)->open.pop_back();
}

inline void XMLCALL xml_text(void* user, const XML_Char* s, int len) {
    auto* b = static_cast<XmlBuilder*>(user);
    if (!b->open.empty()) {
        b->open.back()->text.append(s, static_cast<std::size_t>(len));
    }
}

/// Parses a whole XML document into a tree. Syntax errors carry the byte offset.
inline XmlNode parse_xml(std::string_view document) {
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
        XML_ParserCreate(nullptr), &XML_ParserFree);
    if (!parser) {
        throw std::bad_alloc();
    }
    XmlBuilder builder;
    XML_SetUserData(parser.get(), &builder);
    XML_SetElementHandler(parser.get(), xml_start, xml_end);
    XML_SetCharacterDataHandler(parser.get(), xml_text);
    if (XML_Parse(parser.get(), document.data(), static_cast<int>(document.size()), XML_TRUE) ==
        XML_STATUS_ERROR) {
        const auto offset = static_cast<std::size_t>(XML_GetCurrentByteIndex(parser.get()));
        throw parse_error("malformed XML at byte " + std::to_string(offset) + ": " +
                              XML_ErrorString(XML_GetErrorCode(parser.get())),
                          offset);
    }
    return std::move(builder.root);
}

inline const XmlNode& require(const XmlNode& node, std::string_view name, std::string_view path) {
    const auto* c = node.child(name);
    if (c == nullptr) {
        throw schema_error("VOC annotation missing required element '" + std::string(path) + "'");
    }
    return *c;
}

inline double require_number(const XmlNode& node, std::string_view name, std::string_view path) {
    const auto& c = require(node, name, path);
    const auto v = parse_double(c.text);
    if (!v) {
        throw schema_error("VOC element '" + std::string(path) + "' is not numeric: '" +
                           std::string(trim(c.text)) + "'");
    }
    return *v;
}

inline int require_dimension(const XmlNode& node, std::string_view name, std::string_view path) {
    const auto& c = require(node, name, path);
    const auto v = parse_integer(c.text);
    if (!v || *v <= 0 || *v > 1'000'000) {
        throw schema_error("VOC element '" + std::string(path) +
                           "' must be a positive integer, got '" + std::string(trim(c.text)) + "'");
    }
    return static_cast<int>(*v);
}

} // namespace detail

/// Image id derived from an image file name: the name without directory or extension.
inline std::string image_id_from_filename(std::string_view filename) {
    return std::filesystem::path(std::string(filename)).stem().string();
}

/**
 * Parses one Pascal VOC annotation document.
 *
 * Reads annotation/filename, annotation/size/{width,height} and every
 * annotation/object/{name, bndbox/{xmin,ymin,xmax,ymax}}; all other elements
 * are ignored. Boxes stay in the frame declared by the size element.
 *
 * With BoxPolicy::drop_invalid, boxes that are degenerate or fall outside the
 * image are skipped and tallied in `rejected` instead of throwing.
 */
inline ImageAnnotation parse_voc_xml(std::string_view document,
                                     BoxPolicy policy = BoxPolicy::strict,
                                     std::size_t* rejected = nullptr) {
    const auto root = detail::parse_xml(document);
    if (root.name != "annotation") {
        throw schema_error("VOC root element must be 'annotation', found '" + root.name + "'");
    }

    ImageAnnotation ann;
    ann.file_path = std::string(detail::trim(detail::require(root, "filename", "annotation/filename").text));
    if (ann.file_path.empty()) {
        throw schema_error("VOC element 'annotation/filename' is empty");
    }
    ann.image_id = image_id_from_filename(ann.file_path);
    if (ann.image_id.empty()) {
        throw schema_error("VOC element 'annotation/filename' yields an empty image id");
    }
    const auto& size = detail::require(root, "size", "annotation/size");
    ann.image_width = detail::require_dimension(size, "width", "annotation/size/width");
    ann.image_height = detail::require_dimension(size, "height", "annotation/size/height");
    ann.source_width = ann.image_width;
    ann.source_height = ann.image_height;

    std::size_t index = 0;
    for (const auto& node : root.children) {
        if (node.name != "object") {
            continue;
        }
        const auto& name = detail::require(node, "name", "annotation/object/name");
        const auto& bnd = detail::require(node, "bndbox", "annotation/object/bndbox");
        const double xmin = detail::require_number(bnd, "xmin", "annotation/object/bndbox/xmin");
        const double ymin = detail::require_number(bnd, "ymin", "annotation/object/bndbox/ymin");
        const double xmax = detail::require_number(bnd, "xmax", "annotation/object/bndbox/xmax");
        const double ymax = detail::require_number(bnd, "ymax", "annotation/object/bndbox/ymax");
        const auto this_index = index++;

        std::optional<BoundingBox> box;
        std::string problem;
        try {
            box.emplace(xmin, ymin, xmax, ymax);
            if (!within_frame(*box, ann.frame())) {
                problem = "lies outside the " + std::to_string(ann.image_width) + "x" +
                          std::to_string(ann.image_height) + " image";
                box.reset();
            }
        } catch (const validation_error& e) {
            problem = e.what();
        }
        if (!box) {
            if (policy == BoxPolicy::strict) {
                throw validation_error("image '" + ann.image_id + "' box " +
                                       std::to_string(this_index) + ": " + problem);
            }
            if (rejected != nullptr) {
                ++*rejected;
            }
            continue;
        }
        ann.objects.push_back({std::string(detail::trim(name.text)), *box});
    }
    return ann;
}

// ---------------------------------------------------------------------------
// CSV manifest
//
// Columns: image_id,file_path,xmin,xmax,ymin,ymax,width,class[,height]
// One record per box. An image without boxes gets one record with the
// coordinate and class fields empty. `width`/`height` are the source image
// dimensions; coordinates are in the table's frame.

inline constexpr std::string_view csv_required_columns[] = {
    "image_id", "file_path", "xmin", "xmax", "ymin", "ymax", "width", "class"};
inline constexpr std::string_view csv_height_column = "height";

inline void write_csv(std::ostream& out, const AnnotationTable& table) {
    std::string text;
    for (const auto col : csv_required_columns) {
        text.append(col);
        text.push_back(',');
    }
    text.append(csv_height_column);
    text.push_back('\n');

    const auto emit = [&text](const ImageAnnotation& row, const LabeledBox* obj) {
        detail::append_csv_field(text, row.image_id);
        text.push_back(',');
        detail::append_csv_field(text, row.file_path);
        text.push_back(',');
        if (obj != nullptr) {
            for (double v : {obj->box.xmin(), obj->box.xmax(), obj->box.ymin(), obj->box.ymax()}) {
                text.append(detail::format_number(v));
                text.push_back(',');
            }
        } else {
            text.append(",,,,");
        }
        text.append(std::to_string(row.source_width));
        text.push_back(',');
        if (obj != nullptr) {
            detail::append_csv_field(text, obj->class_name);
        }
        text.push_back(',');
        text.append(std::to_string(row.source_height));
        text.push_back('\n');
    };

    for (const auto& row : table.rows) {
        if (row.objects.empty()) {
            emit(row, nullptr);
        }
        for (const auto& obj : row.objects) {
            emit(row, &obj);
        }
    }
    out << text;
}

/**
 * Reads a manifest CSV whose boxes are expressed in `frame`. Accepts the
 * eight-column form without `height`, in which case the source height is
 * taken to be the frame height.
 */
inline AnnotationTable read_csv(std::istream& in, FrameSize frame = canonical_frame) {
    std::string line;
    if (!std::getline(in, line)) {
        throw schema_error("CSV is empty: header row required");
    }
    const auto header = detail::split_csv_record(line, 1);
    for (std::size_t i = 0; i < std::size(csv_required_columns); ++i) {
        if (i >= header.size() || detail::trim(header[i]) != csv_required_columns[i]) {
            throw schema_error("CSV missing column '" + std::string(csv_required_columns[i]) +
                               "' at position " + std::to_string(i + 1));
        }
    }
    const bool has_height = header.size() > std::size(csv_required_columns) &&
                            detail::trim(header[std::size(csv_required_columns)]) ==
                                csv_height_column;
    const std::size_t columns = std::size(csv_required_columns) + (has_height ? 1 : 0);
    if (header.size() != columns) {
        throw schema_error("CSV header has unexpected column '" + header[columns] + "'");
    }

    AnnotationTable table;
    std::map<std::string, std::size_t, std::less<>> index_of;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto f = detail::split_csv_record(line, line_no);
        const auto where = "line " + std::to_string(line_no);
        if (f.size() != columns) {
            throw parse_error(where + ": expected " + std::to_string(columns) + " fields, found " +
                                  std::to_string(f.size()),
                              line_no);
        }
        if (f[0].empty()) {
            throw validation_error(where + ": empty image_id");
        }

        const auto source_width = detail::parse_integer(f[6]);
        if (!source_width || *source_width <= 0) {
            throw parse_error(where + ": width '" + f[6] + "' is not a positive integer", line_no);
        }
        long long source_height = frame.height;
        if (has_height) {
            const auto h = detail::parse_integer(f[8]);
            if (!h || *h <= 0) {
                throw parse_error(where + ": height '" + f[8] + "' is not a positive integer",
                                  line_no);
            }
            source_height = *h;
        }

        auto [it, inserted] = index_of.try_emplace(f[0], table.rows.size());
        if (inserted) {
            ImageAnnotation row;
            row.image_id = f[0];
            row.file_path = f[1];
            row.image_width = frame.width;
            row.image_height = frame.height;
            row.source_width = static_cast<int>(*source_width);
            row.source_height = static_cast<int>(source_height);
            table.rows.push_back(std::move(row));
        }
        auto& row = table.rows[it->second];
        if (row.file_path != f[1] || row.source_width != *source_width ||
            row.source_height != source_height) {
            throw validation_error(where + ": image '" + f[0] +
                                   "' disagrees with earlier rows on file_path or dimensions");
        }

        const bool no_box = f[2].empty() && f[3].empty() && f[4].empty() && f[5].empty() &&
                            f[7].empty();
        if (no_box) {
            continue;
        }
        double coords[4];
        static constexpr std::string_view names[] = {"xmin", "xmax", "ymin", "ymax"};
        for (int c = 0; c < 4; ++c) {
            const auto v = detail::parse_double(f[static_cast<std::size_t>(2 + c)]);
            if (!v) {
                throw parse_error(where + ": " + std::string(names[c]) + " '" +
                                      f[static_cast<std::size_t>(2 + c)] + "' is not numeric",
                                  line_no);
            }
            coords[c] = *v;
        }
        std::optional<BoundingBox> box;
        try {
            box.emplace(coords[0], coords[2], coords[1], coords[3]);
        } catch (const validation_error& e) {
            throw validation_error(where + ": " + e.what());
        }
        if (!within_frame(*box, frame)) {
            throw validation_error(where + ": box lies outside the " +
                                   std::to_string(frame.width) + "x" +
                                   std::to_string(frame.height) + " frame");
        }
        row.objects.push_back({f[7], *box});
    }
    table.refresh_class_names();
    return table;
}

// ---------------------------------------------------------------------------
// Dataset ingest

struct IngestOptions {
    FrameSize frame = canonical_frame;
    unsigned jobs = 1;
    std::ostream* log = &std::clog;
};

struct IngestReport {
    std::size_t files_seen = 0;
    std::size_t files_parsed = 0;
    std::size_t files_rejected = 0;
    std::size_t boxes_accepted = 0;
    std::size_t boxes_rejected = 0;
    std::vector<std::string> rejected_files; ///< relative paths, sorted
};

struct IngestResult {
    AnnotationTable table;
    IngestReport report;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw io_error("failed reading " + path.string());
    }
    return bytes;
}

/**
 * Parses every *.xml file under `root` (recursively) and rescales its boxes
 * into the canonical frame. Unreadable or malformed files are logged, counted
 * and skipped; a duplicate image id is fatal. Rows come out sorted by image id,
 * so the result does not depend on directory enumeration order.
 */
inline IngestResult ingest_dataset(const std::filesystem::path& root,
                                   const IngestOptions& options = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) {
        throw io_error("dataset root is not a directory: " + root.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".xml") {
            files.push_back(fs::relative(entry.path(), root));
        }
    }
    std::sort(files.begin(), files.end());

    struct Outcome {
        std::optional<ImageAnnotation> ann;
        std::size_t rejected_boxes = 0;
        std::string failure;
    };
    std::vector<Outcome> outcomes(files.size());
    parallel_for(files.size(), options.jobs, [&](std::size_t i) {
        auto& out = outcomes[i];
        try {
            auto ann = parse_voc_xml(read_file_bytes(root / files[i]), BoxPolicy::drop_invalid,
                                     &out.rejected_boxes);
            const auto dir = files[i].parent_path();
            ann.file_path = (dir / ann.file_path).generic_string();
            for (auto& obj : ann.objects) {
                obj.box = rescale_between(obj.box, ann.frame(), options.frame);
            }
            ann.image_width = options.frame.width;
            ann.image_height = options.frame.height;
            out.ann = std::move(ann);
        } catch (const error& e) {
            out.failure = e.what();
        }
    });

    IngestResult result;
    auto& report = result.report;
    report.files_seen = files.size();
    for (std::size_t i = 0; i < files.size(); ++i) {
        auto& out = outcomes[i];
        report.boxes_rejected += out.rejected_boxes;
        if (!out.ann) {
            ++report.files_rejected;
            report.rejected_files.push_back(files[i].generic_string());
            if (options.log != nullptr) {
                *options.log << "ingest: skipping " << files[i].generic_string() << ": "
                             << out.failure << '\n';
            }
            continue;
        }
        if (out.rejected_boxes > 0 && options.log != nullptr) {
            *options.log << "ingest: " << files[i].generic_string() << ": dropped "
                         << out.rejected_boxes << " invalid box(es)\n";
        }
        ++report.files_parsed;
        report.boxes_accepted += out.ann->objects.size();
        result.table.rows.push_back(std::move(*out.ann));
    }

    auto& rows = result.table.rows;
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    std::vector<std::string> duplicates;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].image_id == rows[i - 1].image_id &&
            (duplicates.empty() || duplicates.back() != rows[i].image_id)) {
            duplicates.push_back(rows[i].image_id);
        }
    }
    if (!duplicates.empty()) {
        std::string list;
        for (const auto& d : duplicates) {
            list += (list.empty() ? "" : ", ") + d;
        }
        throw validation_error("duplicate image id(s) in dataset: " + list);
    }
    result.table.refresh_class_names();
    return result;
}

} // namespace signkit
