#include <algorithm>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/text.hpp"
#include "maskmatch/data/dataset_index.hpp"
#include "maskmatch/data/split.hpp"
#include "support/stubs.hpp"

using namespace maskmatch;
using namespace maskmatch::data;

namespace {

const char* kManifest =
    "# root=images\n"
    "image_id,identity_id,dataset_id,variant,path\n"
    "a1,alice,fei,unmasked,alice/1.png\n"
    "a2,alice,fei,masked,alice/2.png\n"
    "b1,bob,fei,unmasked,bob/1.png\n";

}  // namespace

TEST(Manifest, ParsesRecords) {
    const auto index = parse_manifest(kManifest, "/data");
    EXPECT_EQ(index.size(), 3u);
    EXPECT_EQ(index.dataset_id(), "fei");
    EXPECT_EQ(index.at("a2").variant, Variant::masked);
    EXPECT_EQ(index.resolve(index.at("b1")), std::filesystem::path("/data/bob/1.png"));
    EXPECT_EQ(index.paired_identities(), std::vector<std::string>{"alice"});
}

TEST(Manifest, RootPreambleIsRelativeToTheManifest) {
    const auto dir = testkit::fresh_dir("manifest_root");
    write_text_file(dir / "m.csv", kManifest);
    const auto index = load_manifest(dir / "m.csv");
    EXPECT_EQ(index.root(), dir / "images");
    EXPECT_EQ(index.resolve(index.at("b1")), dir / "images" / "bob" / "1.png");
    EXPECT_EQ(load_manifest(dir / "m.csv", std::filesystem::path("/elsewhere")).root(),
              std::filesystem::path("/elsewhere"));
}

TEST(Manifest, RoundTripsThroughText) {
    const auto index = parse_manifest(kManifest, "/data");
    const auto back = parse_manifest(serialize_manifest(index, "images"), "/data");
    ASSERT_EQ(back.size(), index.size());
    for (std::size_t k = 0; k < index.size(); ++k) {
        EXPECT_EQ(back.records()[k], index.records()[k]);
    }
}

TEST(Manifest, DuplicateImageIdReportsLine) {
    const std::string text = std::string(kManifest) + "a1,carol,fei,unmasked,carol/1.png\n";
    try {
        parse_manifest(text, "/data");
        FAIL() << "expected DuplicateImageId";
    } catch (const DuplicateImageId& e) {
        EXPECT_EQ(e.line(), 6u);
    }
}

TEST(Manifest, MalformedRowsAreRejected) {
    EXPECT_THROW(parse_manifest("image_id,identity_id,dataset_id,variant,path\nx,y,z,sideways,p\n", "/"),
                 ManifestParseError);
    EXPECT_THROW(parse_manifest("image_id,identity_id,dataset_id,variant,path\nx,y,z,masked\n", "/"),
                 ManifestParseError);
    EXPECT_THROW(parse_manifest("id,who\n", "/"), ManifestParseError);
    // One identity cannot span two datasets.
    EXPECT_THROW(parse_manifest("image_id,identity_id,dataset_id,variant,path\n"
                                "x1,p,d1,masked,a\nx2,p,d2,masked,b\n",
                                "/"),
                 ManifestParseError);
}

TEST(Manifest, StatsCountIdentitiesPerVariant) {
    const auto s = stats(parse_manifest(kManifest, "/"));
    EXPECT_EQ(s.unmasked, (VariantStats{2, 2}));
    EXPECT_EQ(s.masked, (VariantStats{1, 1}));
}

TEST(Manifest, ScanImageTreeIndexesIdentityDirectories) {
    const auto dir = testkit::fresh_dir("scan");
    geometry::SyntheticCorpusOptions o;
    o.identities = 3;
    o.images_per_identity = 2;
    geometry::write_synthetic_corpus(dir, o);
    const auto index = scan_image_tree(dir, "scanned", Variant::masked);
    EXPECT_EQ(index.size(), 6u);
    EXPECT_EQ(index.identities().size(), 3u);
    EXPECT_EQ(index.dataset_id(), "scanned");
    for (const auto& r : index.records()) {
        EXPECT_EQ(r.variant, Variant::masked);
        EXPECT_TRUE(std::filesystem::exists(index.resolve(r)));
    }
}

TEST(Split, RolesAreDisjointAndCoverEveryIdentity) {
    const auto index = testkit::toy_index({{"d", 37}});
    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        const auto split = split_identities(index, {0.7, 0.15}, seed);
        std::set<std::string> seen;
        std::size_t total = 0;
        for (const auto& role : split.roles) {
            total += role.identity_ids.size();
            seen.insert(role.identity_ids.begin(), role.identity_ids.end());
        }
        EXPECT_EQ(total, 37u);
        EXPECT_EQ(seen.size(), 37u);
        EXPECT_EQ(split.get(Role::train).identity_ids.size(), 26u);  // round(25.9)
        EXPECT_EQ(split.get(Role::validation).identity_ids.size(), 6u);  // round(5.55)
    }
}

TEST(Split, SameSeedSameSplitDifferentSeedDiffers) {
    const auto index = testkit::toy_index({{"d", 40}});
    EXPECT_EQ(split_identities(index, {}, 5), split_identities(index, {}, 5));
    EXPECT_NE(split_identities(index, {}, 5).get(Role::train), split_identities(index, {}, 6).get(Role::train));
}

TEST(Split, ImageCountsDoNotInfluenceAssignment) {
    const auto few = testkit::toy_index({{"d", 30}}, 1);
    const auto many = testkit::toy_index({{"d", 30}}, 4);
    EXPECT_EQ(split_identities(few, {}, 11).roles, split_identities(many, {}, 11).roles);
}

TEST(Split, FileRoundTrips) {
    const auto split = split_identities(testkit::toy_index({{"d", 12}}), {0.5, 0.25}, 3);
    const auto back = parse_split(serialize_split(split));
    EXPECT_EQ(back, split);
}

TEST(Split, InvalidFractionsAndTinyUniverses) {
    const auto index = testkit::toy_index({{"d", 3}});
    EXPECT_THROW(split_identities(index, {1.2, 0.1}, 0), DomainError);
    EXPECT_THROW(split_identities(index, {0.0, 0.5}, 0), DomainError);
    EXPECT_THROW(split_identities(index, {0.9, 0.1}, 0), InsufficientIdentities);
}
