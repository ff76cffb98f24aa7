#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "signkit/aras.hpp"
#include "test_support.hpp"

using signkit::BoundingBox;

namespace {

signkit::AnnotationTable table_of(const std::vector<BoundingBox>& boxes) {
    signkit::AnnotationTable t;
    t.rows.push_back({"img", "img.jpg", 1000, 600, 1000, 600, {}});
    for (const auto& b : boxes) {
        t.rows[0].objects.push_back({"signboard", b});
    }
    t.refresh_class_names();
    return t;
}

void expect_within(const std::vector<double>& got, const std::vector<double>& want, double rel) {
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_NEAR(got[i], want[i], rel * want[i]) << "index " << i;
    }
}

} // namespace

TEST(CollectDims, Basic) {
    const auto d = signkit::collect_dims(table_of({BoundingBox(0, 0, 100, 50)}));
    EXPECT_EQ(d.widths, std::vector<double>{100});
    EXPECT_EQ(d.heights, std::vector<double>{50});

    const auto three = signkit::collect_dims(
        table_of({BoundingBox(0, 0, 10, 20), BoundingBox(5, 5, 35, 15), BoundingBox(1, 2, 4, 9)}));
    EXPECT_EQ(three.widths, (std::vector<double>{10, 30, 3}));
    EXPECT_EQ(three.heights, (std::vector<double>{20, 10, 7}));

    EXPECT_THROW(signkit::collect_dims(signkit::AnnotationTable{}), signkit::validation_error);
}

TEST(Aras, ConstantBoxesDegenerate) {
    std::vector<BoundingBox> boxes;
    for (int i = 0; i < 20; ++i) boxes.emplace_back(i * 10, i * 5, i * 10 + 200, i * 5 + 100);
    const auto spec = signkit::aras(table_of(boxes), 3, 0);
    EXPECT_EQ(spec.ratios, (std::vector<double>{2, 2, 2, 2}));
    EXPECT_EQ(spec.scales, (std::vector<double>{100, 100, 100, 100}));
    EXPECT_TRUE(spec.degenerate());
    EXPECT_NO_THROW(signkit::validate(spec));
}

TEST(Aras, PlantedRecovery) {
    const auto table = testing_support::planted_table(11);
    const auto spec = signkit::aras(table, 3, 123);
    expect_within(spec.ratios, {2.0, 3.0, 4.0, 5.0}, 0.02);
    expect_within(spec.scales, {30, 50, 75, 100}, 0.02);
    EXPECT_NEAR(spec.provenance.w_max, 500, 1e-9);
    EXPECT_NEAR(spec.provenance.h_max, 100, 1e-9);
    EXPECT_FALSE(spec.degenerate());
    EXPECT_EQ(spec, signkit::aras(table, 3, 123));
}

TEST(Aras, IndexPairingAndAugmentedPair) {
    const auto spec = signkit::aras(testing_support::planted_table(3), 3, 9);
    ASSERT_EQ(spec.ratios.size(), 4u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(spec.ratios[i], spec.provenance.wc[i] / spec.provenance.hc[i]);
        EXPECT_EQ(spec.scales[i], spec.provenance.hc[i]);
        EXPECT_LE(spec.scales[i], spec.scales[3]);
    }
    EXPECT_DOUBLE_EQ(spec.ratios[3], spec.provenance.w_max / spec.provenance.h_max);
}

TEST(Aras, RowPermutationInvariant) {
    auto table = testing_support::planted_table(21);
    const auto spec = signkit::aras(table, 3, 5);
    std::mt19937 rng(8);
    for (int i = 0; i < 5; ++i) {
        std::shuffle(table.rows.begin(), table.rows.end(), rng);
        for (auto& row : table.rows) std::shuffle(row.objects.begin(), row.objects.end(), rng);
        EXPECT_EQ(signkit::aras(table, 3, 5), spec);
    }
}

TEST(Aras, UniformScaleMultipliesScalesOnly) {
    const auto dims = signkit::collect_dims(testing_support::planted_table(4));
    const auto base = signkit::aras(dims, 3, 77);
    for (double c : {0.5, 1.5, 2.0}) {
        auto scaled = dims;
        for (auto& w : scaled.widths) w *= c;
        for (auto& h : scaled.heights) h *= c;
        const auto spec = signkit::aras(scaled, 3, 77);
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_NEAR(spec.scales[i], c * base.scales[i], 1e-6 * spec.scales[i]);
            EXPECT_NEAR(spec.ratios[i], base.ratios[i], 1e-6);
        }
    }
}

TEST(Aras, SummaryAndJson) {
    const auto spec = signkit::aras(testing_support::planted_table(11), 3, 123);
    const auto text = signkit::summarize(spec);
    EXPECT_NE(text.find("5.00:1"), std::string::npos);
    EXPECT_NE(text.find("100"), std::string::npos);

    const auto j = signkit::to_json(spec);
    EXPECT_EQ(j.at("k"), 3);
    EXPECT_EQ(j.at("ratios").size(), 4u);
    EXPECT_NEAR(j.at("provenance").at("w_max").get<double>(), 500.0, 1e-9);
    EXPECT_EQ(signkit::anchor_spec_from_json(j), spec);
    EXPECT_EQ(signkit::anchor_spec_from_json(nlohmann::json::parse(j.dump())), spec);

    auto broken = j;
    broken["scales"].erase(0);
    EXPECT_THROW(signkit::anchor_spec_from_json(broken), signkit::error);
    EXPECT_THROW(signkit::anchor_spec_from_json(nlohmann::json::array()), signkit::error);
}

TEST(Aras, RejectsBadArguments) {
    EXPECT_THROW(signkit::aras(signkit::BoxDims{}, 3, 0), signkit::validation_error);
    EXPECT_THROW(signkit::aras(signkit::BoxDims{{1, 2}, {1}}, 3, 0), signkit::validation_error);
    EXPECT_THROW(signkit::aras(signkit::BoxDims{{1}, {1}}, 0, 0), signkit::validation_error);
}
