#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lupi/errors.hpp"
#include "lupi/ingest.hpp"
#include "lupi/pnm.hpp"
#include "lupi/random.hpp"

using namespace lupi;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = LUPI_FIXTURE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lupi_ingest_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(ParseCoco, MinimalManifest) {
  const auto m = parse_coco(slurp(kFixtures / "minimal_coco.json"));
  ASSERT_EQ(m.images.size(), 1u);
  ASSERT_EQ(m.annotations.size(), 1u);
  ASSERT_EQ(m.categories.size(), 1u);
  EXPECT_EQ(m.images[0].file_name, "frame.ppm");
  EXPECT_EQ(m.class_of(3).value, 0);
  const auto& bb = m.annotations[0].bbox;
  EXPECT_EQ(BoundingBox::from_xywh(bb[0], bb[1], bb[2], bb[3]), BoundingBox(10, 20, 40, 60));
}

TEST(ParseCoco, CategoriesRemappedInAscendingIdOrder) {
  const auto m = parse_coco(slurp(kFixtures / "tiny" / "annotations.json"));
  EXPECT_EQ(m.class_of(2).value, 0);
  EXPECT_EQ(m.class_of(5).value, 1);
  EXPECT_EQ(m.category_names(), (std::vector<std::string>{"bottle", "can"}));
}

TEST(ParseCoco, Errors) {
  EXPECT_THROW(parse_coco("{not json"), DataError);
  EXPECT_THROW(parse_coco(R"({"images": []})"), DataError);
  const std::string dangling_image = R"({"images":[{"id":1,"file_name":"a.ppm","width":4,"height":4}],
    "annotations":[{"id":1,"image_id":2,"category_id":1,"bbox":[0,0,1,1]}],
    "categories":[{"id":1,"name":"x"}]})";
  try {
    parse_coco(dangling_image);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("referential integrity"), std::string::npos);
  }
  const std::string dangling_cat = R"({"images":[{"id":1,"file_name":"a.ppm","width":4,"height":4}],
    "annotations":[{"id":1,"image_id":1,"category_id":9,"bbox":[0,0,1,1]}],
    "categories":[{"id":1,"name":"x"}]})";
  EXPECT_THROW(parse_coco(dangling_cat), DataError);
  const std::string zero_w = R"({"images":[{"id":1,"file_name":"a.ppm","width":4,"height":4}],
    "annotations":[{"id":1,"image_id":1,"category_id":1,"bbox":[0,0,0,1]}],
    "categories":[{"id":1,"name":"x"}]})";
  EXPECT_THROW(parse_coco(zero_w), DataError);
}

TEST(ParseCoco, SerializeRoundTrips) {
  const auto m = parse_coco(slurp(kFixtures / "tiny" / "annotations.json"));
  const auto again = parse_coco(serialize_coco(m));
  ASSERT_EQ(again.images.size(), m.images.size());
  for (std::size_t i = 0; i < m.images.size(); ++i) {
    EXPECT_EQ(again.images[i].id, m.images[i].id);
    EXPECT_EQ(again.images[i].file_name, m.images[i].file_name);
    EXPECT_EQ(again.images[i].width, m.images[i].width);
    EXPECT_EQ(again.images[i].height, m.images[i].height);
    EXPECT_EQ(again.images[i].split, m.images[i].split);
  }
  ASSERT_EQ(again.annotations.size(), m.annotations.size());
  for (std::size_t i = 0; i < m.annotations.size(); ++i) {
    EXPECT_EQ(again.annotations[i].bbox, m.annotations[i].bbox);
    EXPECT_EQ(again.annotations[i].category_id, m.annotations[i].category_id);
  }
  EXPECT_EQ(again.category_names(), m.category_names());
  EXPECT_EQ(serialize_coco(again), serialize_coco(m));
}

TEST(NormalizeImage, Examples) {
  std::vector<double> ramp(256);
  for (int i = 0; i < 256; ++i) ramp[i] = i;
  const auto n = normalize_image(ImagePlane(16, 16, ramp));
  EXPECT_EQ(*std::min_element(n.values().begin(), n.values().end()), 0.0);
  EXPECT_EQ(*std::max_element(n.values().begin(), n.values().end()), 1.0);

  const auto flat = normalize_image(ImagePlane(3, 3, 7.0));
  for (double v : flat.values()) EXPECT_EQ(v, 0.0);

  const auto mid = normalize_image(ImagePlane(3, 1, std::vector<double>{50, 75, 100}));
  EXPECT_EQ(mid.values()[1], 0.5);
}

TEST(NormalizeImage, RangeAndIdempotence) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(30);
    for (auto& x : v) x = rng.uniform(-100, 300);
    const auto once = normalize_image(ImagePlane(6, 5, v));
    const auto twice = normalize_image(once);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_GE(once.values()[i], 0.0);
      EXPECT_LE(once.values()[i], 1.0);
      EXPECT_NEAR(twice.values()[i], once.values()[i], 1e-15);
    }
    EXPECT_EQ(*std::min_element(once.values().begin(), once.values().end()), 0.0);
    EXPECT_EQ(*std::max_element(once.values().begin(), once.values().end()), 1.0);
  }
}

TEST(LoadDataset, FixtureDirectory) {
  const auto dir = kFixtures / "tiny";
  const auto m = read_manifest(dir / "annotations.json");
  const auto ds = load_dataset(m, dir / "images");
  ASSERT_EQ(ds.samples.size(), 2u);
  EXPECT_EQ(ds.samples[0].id, "a");
  EXPECT_EQ(ds.samples[1].id, "b");
  EXPECT_FALSE(ds.samples[0].privileged.has_value());
  EXPECT_EQ(ds.samples[0].annotations.size(), 1u);
  EXPECT_EQ(ds.samples[0].annotations[0].class_id.value, 1);
  EXPECT_EQ(ds.samples[1].annotations[0].box, BoundingBox(1, 1, 4, 3));
  // Red channel of a.ppm spans 0..180 and is rescaled per plane.
  EXPECT_EQ(ds.samples[0].rgb[0].at(0, 0), 0.0);
  EXPECT_EQ(ds.samples[0].rgb[0].at(3, 0), 1.0);
  // Blue channel of a.ppm is constant.
  for (double v : ds.samples[0].rgb[2].values()) EXPECT_EQ(v, 0.0);
}

TEST(LoadDataset, SplitFilterAndRawValues) {
  const auto dir = kFixtures / "tiny";
  const auto m = read_manifest(dir / "annotations.json");
  const auto val = load_dataset(m, dir / "images", LoadOptions{Split::kVal, false});
  ASSERT_EQ(val.samples.size(), 1u);
  EXPECT_EQ(val.samples[0].id, "b");
  EXPECT_EQ(val.samples[0].rgb[0].at(0, 0), 200.0);
}

TEST(LoadDataset, DimensionMismatchAndMissingFile) {
  const auto dir = scratch("dims");
  pnm::write_ppm(dir / "a.ppm", {ImagePlane(5, 5), ImagePlane(5, 5), ImagePlane(5, 5)});
  CocoManifest m;
  m.images.push_back({1, "a.ppm", 4, 4, std::nullopt});
  m.categories.push_back({1, "x"});
  EXPECT_THROW(load_dataset(m, dir), DataError);
  m.images[0] = {1, "missing.ppm", 5, 5, std::nullopt};
  EXPECT_THROW(load_dataset(m, dir), DataError);
}

TEST(Pnm, RoundTripAndErrors) {
  const auto dir = scratch("pnm");
  ImagePlane g(3, 2, std::vector<double>{0, 10.4, 10.6, 255, 300, -5});
  pnm::write_pgm(dir / "g.pgm", g);
  const auto back = pnm::read_pgm(dir / "g.pgm");
  EXPECT_EQ(back.values(), (std::vector<double>{0, 10, 11, 255, 255, 0}));
  std::ofstream(dir / "bad.pgm") << "P5\n2 2\n65535\n";
  EXPECT_THROW(pnm::read_pgm(dir / "bad.pgm"), DataError);
  EXPECT_THROW(pnm::read_ppm(dir / "g.pgm"), DataError);
}
