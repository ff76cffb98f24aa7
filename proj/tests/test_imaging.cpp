#include <gtest/gtest.h>

#include <jpeglib.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "signkit/image_io.hpp"
#include "signkit/imaging.hpp"
#include "test_support.hpp"

using signkit::PixelImage;

namespace {

PixelImage random_image(int w, int h, int ch, std::uint32_t seed) {
    std::mt19937 rng(seed);
    PixelImage img(w, h, ch);
    for (auto& v : img.data()) {
        v = static_cast<std::uint8_t>(rng() & 0xff);
    }
    return img;
}

// Continuous box-filter average over the source footprint of an output pixel.
double area_oracle(const PixelImage& img, int out_w, int out_h, int x, int y, int c) {
    const double sx = static_cast<double>(img.width()) / out_w;
    const double sy = static_cast<double>(img.height()) / out_h;
    const double x0 = x * sx, x1 = (x + 1) * sx, y0 = y * sy, y1 = (y + 1) * sy;
    double acc = 0.0;
    for (int j = static_cast<int>(std::floor(y0)); j < img.height() && j < y1; ++j) {
        const double wy = std::min<double>(y1, j + 1) - std::max<double>(y0, j);
        if (wy <= 0) continue;
        for (int i = static_cast<int>(std::floor(x0)); i < img.width() && i < x1; ++i) {
            const double wx = std::min<double>(x1, i + 1) - std::max<double>(x0, i);
            if (wx <= 0) continue;
            acc += wx * wy * img.at(i, j, c);
        }
    }
    return acc / (sx * sy);
}

void write_jpeg(const std::filesystem::path& path, const PixelImage& img) {
    jpeg_compress_struct cinfo;
    jpeg_error_mgr jerr;
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    FILE* f = std::fopen(path.c_str(), "wb");
    ASSERT_NE(f, nullptr);
    jpeg_stdio_dest(&cinfo, f);
    cinfo.image_width = static_cast<JDIMENSION>(img.width());
    cinfo.image_height = static_cast<JDIMENSION>(img.height());
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, 100, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * 3);
    while (cinfo.next_scanline < cinfo.image_height) {
        const auto y = static_cast<int>(cinfo.next_scanline);
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x * 3 + c)] = img.at(x, y, c);
        }
        JSAMPROW p = row.data();
        jpeg_write_scanlines(&cinfo, &p, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    std::fclose(f);
}

} // namespace

TEST(PixelImage, ValidatesShape) {
    EXPECT_THROW(PixelImage(0, 5, 3), signkit::validation_error);
    EXPECT_THROW(PixelImage(5, 5, 2), signkit::validation_error);
    EXPECT_THROW(PixelImage(2, 2, 1, std::vector<std::uint8_t>(3)), signkit::validation_error);
    PixelImage img(3, 2, 3);
    img.at(2, 1, 2) = 7;
    EXPECT_EQ(img.data()[(1 * 3 + 2) * 3 + 2], 7);
}

TEST(Resize, IdentityIsCopy) {
    const auto img = random_image(17, 9, 3, 1);
    EXPECT_EQ(signkit::resize_area(img, 17, 9), img);
}

TEST(Resize, IntegerFactorIsBlockMean) {
    PixelImage img(4, 2, 1, {0, 10, 20, 30, 1, 11, 21, 32});
    const auto out = signkit::resize_area(img, 2, 1);
    // (0+10+1+11)/4 = 5.5 -> 6 ; (20+30+21+32)/4 = 25.75 -> 26
    EXPECT_EQ(out.at(0, 0, 0), 6);
    EXPECT_EQ(out.at(1, 0, 0), 26);
}

TEST(Resize, ConstantImageStaysConstant) {
    PixelImage img(37, 23, 3);
    for (auto& v : img.data()) v = 201;
    for (auto [w, h] : {std::pair{224, 224}, std::pair{5, 3}, std::pair{100, 7}}) {
        const auto out = signkit::resize_area(img, w, h);
        for (auto v : out.data()) ASSERT_EQ(v, 201);
    }
}

TEST(Resize, DownscaleMatchesContinuousAreaOracle) {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int w = 10 + static_cast<int>(rng() % 60), h = 10 + static_cast<int>(rng() % 60);
        const int ow = 1 + static_cast<int>(rng() % w), oh = 1 + static_cast<int>(rng() % h);
        const auto img = random_image(w, h, 1, static_cast<std::uint32_t>(trial));
        const auto out = signkit::resize_area(img, ow, oh);
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                ASSERT_NEAR(out.at(x, y, 0), area_oracle(img, ow, oh, x, y, 0), 0.5 + 1e-6)
                    << w << "x" << h << " -> " << ow << "x" << oh;
            }
        }
    }
}

TEST(Resize, UpscaleStaysWithinNeighbourRange) {
    const auto img = random_image(7, 5, 3, 11);
    const auto out = signkit::resize_area(img, 224, 224);
    ASSERT_EQ(out.size(), (signkit::FrameSize{224, 224}));
    auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    for (auto v : out.data()) {
        ASSERT_GE(v, *lo);
        ASSERT_LE(v, *hi);
    }
    // two-pixel ramp doubled: centres map back onto the original samples or midpoints
    PixelImage ramp(2, 1, 1, {0, 100});
    const auto up = signkit::resize_area(ramp, 4, 1);
    EXPECT_EQ(up.at(0, 0, 0), 0);
    EXPECT_EQ(up.at(1, 0, 0), 25);
    EXPECT_EQ(up.at(2, 0, 0), 75);
    EXPECT_EQ(up.at(3, 0, 0), 100);
}

TEST(Crop, RoundsEdgesAndChecksBounds) {
    const auto img = random_image(20, 10, 3, 5);
    const auto c = signkit::crop(img, signkit::BoundingBox(2.4, 3.6, 7.5, 9));
    EXPECT_EQ(c.size(), (signkit::FrameSize{6, 5})); // x 2..8, y 4..9
    EXPECT_EQ(c.at(0, 0, 1), img.at(2, 4, 1));
    EXPECT_EQ(c.at(5, 4, 2), img.at(7, 8, 2));
    EXPECT_THROW(signkit::crop(img, signkit::BoundingBox(15, 0, 21, 5)), signkit::validation_error);
}

TEST(Gray, Luma) {
    PixelImage img(3, 1, 3, {255, 0, 0, 0, 255, 0, 10, 20, 30});
    const auto g = signkit::to_gray(img);
    EXPECT_EQ(g.channels(), 1);
    EXPECT_EQ(g.at(0, 0, 0), 76);  // 76.245
    EXPECT_EQ(g.at(1, 0, 0), 150); // 149.685
    EXPECT_EQ(g.at(2, 0, 0), 18);  // 2.99 + 11.74 + 3.42 = 18.15
    EXPECT_EQ(signkit::to_gray(g), g);
}

TEST(Normalize, UnitRange) {
    PixelImage img(2, 1, 1, {0, 255});
    const auto t = signkit::normalize(img);
    EXPECT_EQ(t.data, (std::vector<double>{0.0, 1.0}));
}

TEST(Standardize, PerImageGivesZeroMeanUnitStd) {
    const auto t = signkit::normalize(random_image(31, 17, 3, 8));
    const auto s = signkit::channel_stats(signkit::standardize(t));
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(s.mean[static_cast<std::size_t>(c)], 0.0, 1e-12);
        EXPECT_NEAR(s.stddev[static_cast<std::size_t>(c)], 1.0, 1e-12);
    }
}

TEST(Standardize, ZeroVarianceChannelIsReported) {
    PixelImage img(4, 4, 3);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            img.at(x, y, 0) = static_cast<std::uint8_t>(x * 10);
            img.at(x, y, 1) = 9;
            img.at(x, y, 2) = static_cast<std::uint8_t>(y);
        }
    try {
        signkit::standardize(signkit::normalize(img));
        FAIL() << "expected validation_error";
    } catch (const signkit::validation_error& e) {
        EXPECT_NE(std::string(e.what()).find("channel 1"), std::string::npos);
    }
}

TEST(Standardize, DatasetStatsMatchConcatenation) {
    const auto a = random_image(8, 6, 3, 21);
    const auto b = random_image(5, 9, 3, 22);
    signkit::DatasetStatsAccumulator acc(3);
    acc.add(a);
    acc.add(b);
    const auto s = acc.stats();

    signkit::FeatureTensor joined{1, 0, 3, {}};
    for (const auto* img : {&a, &b}) {
        const auto t = signkit::normalize(*img);
        joined.data.insert(joined.data.end(), t.data.begin(), t.data.end());
    }
    const auto ref = signkit::channel_stats(joined);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(s.mean[c], ref.mean[c], 1e-12);
        EXPECT_NEAR(s.stddev[c], ref.stddev[c], 1e-12);
    }
    EXPECT_THROW(signkit::DatasetStatsAccumulator(3).stats(), signkit::validation_error);
    EXPECT_THROW(acc.add(PixelImage(2, 2, 1)), signkit::validation_error);
}

TEST(ImageIo, PngRoundTrip) {
    testing_support::TempDir dir;
    const auto img = random_image(13, 7, 3, 4);
    signkit::write_png(dir / "x.png", img);
    EXPECT_EQ(signkit::read_image(dir / "x.png"), img);

    const auto gray = random_image(6, 6, 1, 9);
    signkit::write_png(dir / "g.png", gray);
    const auto back = signkit::read_image(dir / "g.png");
    EXPECT_EQ(back.channels(), 3);
    EXPECT_EQ(back.at(3, 2, 0), gray.at(3, 2, 0));
    EXPECT_EQ(back.at(3, 2, 2), gray.at(3, 2, 0));
}

TEST(ImageIo, JpegDecodes) {
    testing_support::TempDir dir;
    PixelImage flat(16, 16, 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            flat.at(x, y, 0) = 200;
            flat.at(x, y, 1) = 120;
            flat.at(x, y, 2) = 40;
        }
    write_jpeg(dir / "f.jpg", flat);
    const auto back = signkit::read_image(dir / "f.jpg");
    ASSERT_EQ(back.size(), flat.size());
    for (std::size_t i = 0; i < back.data().size(); ++i) {
        ASSERT_NEAR(back.data()[i], flat.data()[i], 3);
    }
}

TEST(ImageIo, BadFilesThrow) {
    testing_support::TempDir dir;
    testing_support::write_file(dir / "junk.png", "not an image at all");
    EXPECT_THROW(signkit::read_image(dir / "junk.png"), signkit::error);
    std::string truncated = "\xff\xd8\xff\xe0";
    truncated += std::string(40, '\0');
    testing_support::write_file(dir / "cut.jpg", truncated);
    EXPECT_THROW(signkit::read_image(dir / "cut.jpg"), signkit::error);
    EXPECT_THROW(signkit::read_image(dir / "missing.png"), signkit::error);
}

TEST(Resize, TwoByTwoMean) {
    PixelImage img(2, 2, 1, {10, 20, 30, 40});
    EXPECT_EQ(signkit::resize_area(img, 1, 1).at(0, 0, 0), 25);
}

TEST(Crop, FullAndSingleAndPartition) {
    const auto img = random_image(12, 8, 3, 31);
    EXPECT_EQ(signkit::crop(img, signkit::BoundingBox(0, 0, 12, 8)), img);
    const auto px = signkit::crop(img, signkit::BoundingBox(0, 0, 1, 1));
    EXPECT_EQ(px.size(), (signkit::FrameSize{1, 1}));
    EXPECT_EQ(px.at(0, 0, 2), img.at(0, 0, 2));

    for (int split = 1; split < 12; ++split) {
        const auto left = signkit::crop(img, signkit::BoundingBox(0, 0, split, 8));
        const auto right = signkit::crop(img, signkit::BoundingBox(split, 0, 12, 8));
        PixelImage joined(12, 8, 3);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 12; ++x)
                for (int c = 0; c < 3; ++c)
                    joined.at(x, y, c) = x < split ? left.at(x, y, c) : right.at(x - split, y, c);
        ASSERT_EQ(joined, img);
    }
}

TEST(Normalize, ExtremeImages) {
    PixelImage black(3, 3, 3);
    PixelImage white(3, 3, 3);
    for (auto& v : white.data()) v = 255;
    for (double v : signkit::normalize(black).data) ASSERT_EQ(v, 0.0);
    for (double v : signkit::normalize(white).data) ASSERT_EQ(v, 1.0);
    EXPECT_EQ(signkit::to_gray(white).at(1, 1, 0), 255);
    EXPECT_EQ(signkit::to_gray(black).at(1, 1, 0), 0);
}
