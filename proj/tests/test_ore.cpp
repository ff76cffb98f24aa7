#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "signkit/ore.hpp"
#include "test_support.hpp"

using signkit::BoundingBox;
using signkit::ImageAnnotation;
using signkit::PixelImage;

namespace {

ImageAnnotation annotation(std::string id, int w, int h, std::vector<BoundingBox> boxes) {
    ImageAnnotation ann{id, id + ".png", w, h, w, h, {}};
    for (const auto& b : boxes) ann.objects.push_back({"signboard", b});
    return ann;
}

PixelImage gradient(int w, int h) {
    PixelImage img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = static_cast<std::uint8_t>(x & 0xff);
            img.at(x, y, 1) = static_cast<std::uint8_t>(y & 0xff);
            img.at(x, y, 2) = static_cast<std::uint8_t>((x + y) & 0xff);
        }
    return img;
}

} // namespace

TEST(Ore, PositiveFromSingleBox) {
    const auto img = gradient(1000, 600);
    const auto ann = annotation("a", 1000, 600, {BoundingBox(100, 100, 324, 324)});
    const auto pos = signkit::extract_positives(img, ann);
    ASSERT_EQ(pos.size(), 1u);
    EXPECT_EQ(pos[0].origin_box, BoundingBox(90, 90, 334, 334));
    EXPECT_EQ(pos[0].pixels.size(), (signkit::FrameSize{224, 224}));
    EXPECT_EQ(pos[0].pixels.channels(), 3);
    EXPECT_EQ(pos[0].label, signkit::PatchLabel::signboard);
    EXPECT_EQ(pos[0].pixels,
              signkit::resize_area(signkit::crop(img, BoundingBox(90, 90, 334, 334)), 224, 224));
}

TEST(Ore, PositivesCountAndContainment) {
    const auto img = gradient(1000, 600);
    EXPECT_TRUE(signkit::extract_positives(img, annotation("e", 1000, 600, {})).empty());
    const auto ann = annotation("t", 1000, 600,
                                {BoundingBox(0, 0, 40, 20), BoundingBox(500, 300, 700, 380),
                                 BoundingBox(950, 580, 1000, 600)});
    const auto pos = signkit::extract_positives(img, ann);
    ASSERT_EQ(pos.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_TRUE(signkit::contains(pos[i].origin_box, ann.objects[i].box));
        EXPECT_EQ(pos[i].origin_box, signkit::expand(ann.objects[i].box, 10, {1000, 600}));
    }
}

TEST(Ore, GrayscaleAndMismatchedImages) {
    PixelImage gray(300, 300, 1);
    const auto ann = annotation("g", 300, 300, {BoundingBox(10, 10, 50, 50)});
    EXPECT_EQ(signkit::extract_positives(gray, ann)[0].pixels.channels(), 3);
    EXPECT_THROW(signkit::extract_positives(PixelImage(200, 300, 3), ann), signkit::validation_error);
}

TEST(Ore, WindowOffsets) {
    EXPECT_EQ(signkit::window_offsets(1000, 224, 224), (std::vector<int>{0, 224, 448, 672, 776}));
    EXPECT_EQ(signkit::window_offsets(448, 224, 224), (std::vector<int>{0, 224}));
    EXPECT_EQ(signkit::window_offsets(224, 224, 1), (std::vector<int>{0}));
}

TEST(Ore, NoBoxesAcceptsEveryWindow) {
    const auto ann = annotation("n", 1000, 600, {});
    signkit::OreOptions opt;
    opt.stride = 224;
    // x: 0,224,448,672,776 ; y: 0,224,376
    EXPECT_EQ(signkit::negative_windows(ann, opt).size(), 15u);
}

TEST(Ore, FullCoverageYieldsNothing) {
    const auto ann = annotation("f", 1000, 600, {BoundingBox(0, 0, 1000, 600)});
    EXPECT_TRUE(signkit::negative_windows(ann).empty());
}

TEST(Ore, HalfCoveredByHandEnumeration) {
    const auto ann = annotation("h", 1000, 600, {BoundingBox(0, 0, 500, 600)});
    signkit::OreOptions opt;
    opt.stride = 224;
    const auto wins = signkit::negative_windows(ann, opt);
    // blocked region is x < 510; x offsets >= 510 are 672 and 776; y offsets 0, 224, 376
    std::vector<BoundingBox> expected;
    for (int y : {0, 224, 376})
        for (int x : {672, 776}) expected.emplace_back(x, y, x + 224, y + 224);
    EXPECT_EQ(wins, expected);
}

TEST(Ore, WindowMustFit) {
    const auto ann = annotation("s", 200, 600, {});
    EXPECT_THROW(signkit::negative_windows(ann), signkit::validation_error);
    signkit::OreOptions opt;
    opt.stride = 0;
    EXPECT_THROW(signkit::negative_windows(annotation("s", 400, 400, {}), opt), signkit::validation_error);
}

TEST(Ore, ZeroLeakAgainstMaskOracle) {
    std::mt19937 rng(12);
    for (int trial = 0; trial < 25; ++trial) {
        const int w = 224 + static_cast<int>(rng() % 200), h = 224 + static_cast<int>(rng() % 120);
        std::vector<BoundingBox> boxes;
        std::vector<oracle::IntBox> grown;
        const int n = static_cast<int>(rng() % 4);
        for (int i = 0; i < n; ++i) {
            const int bw = 5 + static_cast<int>(rng() % 60), bh = 5 + static_cast<int>(rng() % 40);
            const int x = static_cast<int>(rng() % static_cast<unsigned>(w - bw));
            const int y = static_cast<int>(rng() % static_cast<unsigned>(h - bh));
            boxes.emplace_back(x, y, x + bw, y + bh);
            grown.push_back({x - 10, y - 10, x + bw + 10, y + bh + 10});
        }
        const oracle::MaskIndex mask(w, h, grown);
        for (int stride : {7, 112}) {
            signkit::OreOptions opt;
            opt.stride = stride;
            for (const auto& win : signkit::negative_windows(annotation("z", w, h, boxes), opt)) {
                ASSERT_EQ(mask.covered(static_cast<int>(win.xmin()), static_cast<int>(win.ymin()),
                                       static_cast<int>(win.xmax()), static_cast<int>(win.ymax())),
                          0);
            }
        }
    }
}

namespace {

// Two 448x448 images: three signboards in total, 4 windows per image at
// stride 224 minus the blocked ones, and the rest generated at stride 16.
signkit::AnnotationTable small_table(const std::filesystem::path& root) {
    signkit::AnnotationTable table;
    table.rows.push_back(annotation("img_a", 448, 448, {BoundingBox(10, 10, 60, 40)}));
    table.rows.push_back(
        annotation("img_b", 448, 448, {BoundingBox(400, 400, 440, 440), BoundingBox(10, 300, 50, 330)}));
    table.refresh_class_names();
    for (const auto& row : table.rows) signkit::write_png(root / row.file_path, gradient(448, 448));
    return table;
}

} // namespace

TEST(Corpus, QuotaFillsFromNegatives) {
    testing_support::TempDir images, out;
    const auto table = small_table(images.path());
    signkit::CorpusOptions opt;
    std::ostringstream log;
    opt.log = &log;
    opt.total = 6;
    opt.ore.stride = 16;
    const auto m = signkit::build_corpus(table, images.path(), out.path(), opt);
    EXPECT_EQ(m.candidate_positives, 3u);
    EXPECT_GT(m.candidate_negatives, 40u);
    EXPECT_EQ(m.positives, 3u);
    EXPECT_EQ(m.negatives, 3u);
    EXPECT_EQ(m.entries.size(), 6u);
    for (const auto& e : m.entries) {
        const auto img = signkit::read_image(out.path() / e.path);
        EXPECT_EQ(img.size(), (signkit::FrameSize{224, 224}));
    }

    opt.total = 100;
    testing_support::TempDir out2;
    const auto big = signkit::build_corpus(table, images.path(), out2.path(), opt);
    EXPECT_EQ(big.positives, 3u);
    EXPECT_EQ(big.negatives, 97u);
    EXPECT_EQ(big.positives + big.negatives, 100u);
}

TEST(Corpus, ZeroTotalIsEmpty) {
    testing_support::TempDir images, out;
    const auto table = small_table(images.path());
    signkit::CorpusOptions opt;
    std::ostringstream log;
    opt.log = &log;
    opt.total = 0;
    const auto m = signkit::build_corpus(table, images.path(), out.path(), opt);
    EXPECT_TRUE(m.entries.empty());
    EXPECT_EQ(m.positives + m.negatives, 0u);
}

TEST(Corpus, DeterministicUnderSeed) {
    testing_support::TempDir images, out1, out2, out3;
    const auto table = small_table(images.path());
    signkit::CorpusOptions opt;
    std::ostringstream log;
    opt.log = &log;
    opt.total = 20;
    opt.ore.stride = 16;
    opt.seed = 5;
    const auto a = signkit::build_corpus(table, images.path(), out1.path(), opt);
    opt.jobs = 3;
    const auto b = signkit::build_corpus(table, images.path(), out2.path(), opt);
    std::ostringstream ca, cb;
    signkit::write_patch_manifest_csv(ca, a);
    signkit::write_patch_manifest_csv(cb, b);
    EXPECT_EQ(ca.str(), cb.str());
    EXPECT_EQ(signkit::to_json(a).dump(), signkit::to_json(b).dump());
    for (const auto& e : a.entries) {
        EXPECT_EQ(signkit::read_file_bytes(out1.path() / e.path), signkit::read_file_bytes(out2.path() / e.path));
    }
    opt.seed = 6;
    const auto c = signkit::build_corpus(table, images.path(), out3.path(), opt);
    std::ostringstream cc;
    signkit::write_patch_manifest_csv(cc, c);
    EXPECT_NE(ca.str(), cc.str());
}

TEST(Corpus, UnreadableImageIsSkipped) {
    testing_support::TempDir images, out;
    auto table = small_table(images.path());
    table.rows.push_back(annotation("img_c", 448, 448, {BoundingBox(0, 0, 20, 20)}));
    testing_support::write_file(images / "img_c.png", "garbage");
    signkit::CorpusOptions opt;
    std::ostringstream log;
    opt.log = &log;
    opt.total = 10;
    const auto m = signkit::build_corpus(table, images.path(), out.path(), opt);
    EXPECT_EQ(m.skipped_images, std::vector<std::string>{"img_c"});
    EXPECT_EQ(m.candidate_positives, 3u);
    EXPECT_NE(log.str().find("img_c"), std::string::npos);
}

TEST(Corpus, ManifestFormat) {
    testing_support::TempDir images, out;
    const auto table = small_table(images.path());
    signkit::CorpusOptions opt;
    std::ostringstream log;
    opt.log = &log;
    opt.total = 6;
    const auto m = signkit::build_corpus(table, images.path(), out.path(), opt);
    std::ostringstream csv;
    signkit::write_patch_manifest_csv(csv, m);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "path,image_id,label,xmin,ymin,xmax,ymax");
    EXPECT_NE(csv.str().find("patches/img_a_signboard_0.png,img_a,signboard,0,0,70,50"), std::string::npos);
    const auto j = signkit::to_json(m);
    EXPECT_EQ(j.at("seed"), 0);
    EXPECT_EQ(j.at("counts").at("signboard"), 3);
    EXPECT_EQ(j.at("counts").at("non-signboard"), 3);
    EXPECT_EQ(j.at("balanced"), true);
}
