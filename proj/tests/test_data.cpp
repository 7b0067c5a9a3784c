#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "mer/data/dataset.hpp"
#include "mer/data/synth.hpp"
#include "mer/tensor/rng.hpp"
#include "test_util.hpp"

namespace mer::data {
namespace {

// The AU-to-region table as listed for the five facial regions.
const std::map<int, Region>& reference_au_map() {
  static const std::map<int, Region> m{
      {1, Region::ocular_brow}, {2, Region::ocular_brow}, {4, Region::ocular_brow}, {5, Region::ocular_brow},
      {7, Region::ocular_brow}, {10, Region::oral},       {12, Region::oral},       {14, Region::oral},
      {15, Region::oral},       {16, Region::oral},       {25, Region::oral},       {26, Region::oral},
      {17, Region::mandibular}, {6, Region::cheek},       {9, Region::nasal},       {38, Region::nasal}};
  return m;
}

Image gradient_image(Index channels, Index h, Index w) {
  Image img = Image::blank(channels, h, w);
  for (Index c = 0; c < channels; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        img.at(c, y, x) = static_cast<float>((x * 3 + y * 7 + c * 50) % 256) / 255.0f;
  return img;
}

TEST(RegionMap, MatchesReferenceTable) {
  EXPECT_EQ(reference_au_map().size(), 16u);
  for (const auto& [au, region] : reference_au_map()) {
    ASSERT_TRUE(region_for_au(au).has_value()) << "AU" << au;
    EXPECT_EQ(*region_for_au(au), region) << "AU" << au;
  }
  EXPECT_EQ(*region_for_au(12), Region::oral);
  EXPECT_EQ(*region_for_au(17), Region::mandibular);
  EXPECT_EQ(*region_for_au(9), Region::nasal);
}

TEST(RegionMap, RegionsPartitionTheListedAus) {
  std::set<int> seen;
  std::size_t total = 0;
  for (Region r : kRegions) {
    for (int au : aus_of(r)) {
      EXPECT_EQ(*region_for_au(au), r);
      seen.insert(au);
      ++total;
    }
  }
  EXPECT_EQ(total, 16u);
  EXPECT_EQ(seen.size(), 16u);
  for (int au = 0; au <= 64; ++au) {
    EXPECT_EQ(region_for_au(au).has_value(), reference_au_map().count(au) == 1) << "AU" << au;
  }
}

TEST(RegionMap, NamesRoundTrip) {
  const std::vector<std::string> names{"ocular_brow", "oral", "mandibular", "cheek", "nasal"};
  for (std::size_t i = 0; i < kNumRegions; ++i) {
    EXPECT_EQ(region_name(kRegions[i]), names[i]);
    EXPECT_EQ(parse_region(names[i]), kRegions[i]);
  }
  EXPECT_FALSE(parse_region("forehead").has_value());
}

TEST(Labels, MergeSendsOnlyFearAndSadnessToOthers) {
  EXPECT_EQ(merge_label("Fear"), Emotion::others);
  EXPECT_EQ(merge_label("Sadness"), Emotion::others);
  EXPECT_EQ(merge_label("Disgust"), Emotion::disgust);
  EXPECT_EQ(merge_label("Happiness"), Emotion::happiness);
  EXPECT_EQ(merge_label("Surprise"), Emotion::surprise);
  EXPECT_EQ(merge_label("Repression"), Emotion::repression);
  EXPECT_EQ(merge_label("Others"), Emotion::others);
  EXPECT_EQ(merge_label("sadness"), Emotion::others);
  EXPECT_THROW(merge_label("Contempt"), LabelError);
  EXPECT_THROW(merge_label(""), LabelError);
}

TEST(Labels, MergeIsIdempotent) {
  for (const char* raw : {"Happiness", "Surprise", "Disgust", "Repression", "Fear", "Sadness", "Others"}) {
    const Emotion once = merge_label(raw);
    EXPECT_EQ(merge_label(emotion_name(once)), once) << raw;
  }
  EXPECT_EQ(class_names()[0], "Happiness");
  EXPECT_EQ(class_names()[4], "Others");
}

TEST(Image, PnmRoundTripGrayAndColor) {
  mer::testing::TempDir dir("pnm");
  for (Index channels : {1, 3}) {
    Image img = gradient_image(channels, 9, 13);
    const auto path = dir.path() / (channels == 1 ? "a.pgm" : "a.ppm");
    write_pnm(path, img);
    const auto info = read_pnm_info(path);
    EXPECT_EQ(info.channels, channels);
    EXPECT_EQ(info.height, 9);
    EXPECT_EQ(info.width, 13);
    EXPECT_EQ(read_pnm(path), img);
  }
}

TEST(Image, PnmHeaderCommentsAndErrors) {
  mer::testing::TempDir dir("pnmerr");
  {
    std::ofstream f(dir.path() / "c.pgm", std::ios::binary);
    f << "P5\n# made by hand\n2 1\n255\n";
    f.put(static_cast<char>(0));
    f.put(static_cast<char>(255));
  }
  const Image img = read_pnm(dir.path() / "c.pgm");
  EXPECT_EQ(img.pixels, (std::vector<float>{0.0f, 1.0f}));
  std::ofstream(dir.path() / "bad.pgm") << "P2\n2 1\n255\n0 0\n";
  EXPECT_THROW(read_pnm(dir.path() / "bad.pgm"), ImageError);
  std::ofstream(dir.path() / "short.pgm", std::ios::binary) << "P5\n4 4\n255\nab";
  EXPECT_THROW(read_pnm(dir.path() / "short.pgm"), ImageError);
  EXPECT_THROW(read_pnm(dir.path() / "missing.pgm"), ImageError);
}

TEST(Resize, EqualSizeIsIdentity) {
  const Image img = gradient_image(3, 282, 231);
  EXPECT_EQ(resize_bilinear(img, 282, 231), img);
}

TEST(Resize, ConstantsStayConstant) {
  for (auto [h, w] : {std::pair<Index, Index>{282, 231}, {5, 3}, {700, 900}}) {
    const Image out = resize_bilinear(Image::blank(1, 37, 53, 0.3137f), h, w);
    EXPECT_EQ(out.height, h);
    EXPECT_EQ(out.width, w);
    for (float v : out.pixels) EXPECT_EQ(v, 0.3137f);
  }
}

TEST(Resize, FaceFrom640x480) {
  const Image frame = gradient_image(1, 480, 640);
  const auto crops = crop_and_resize(frame, {0, 0, 640, 480}, default_region_layout({0, 0, 640, 480}));
  EXPECT_EQ(crops.face.height, 282);
  EXPECT_EQ(crops.face.width, 231);
  for (const auto& r : crops.regions) {
    EXPECT_EQ(r.height, 64);
    EXPECT_EQ(r.width, 64);
  }
}

TEST(Resize, OutputStaysInUnitRange) {
  Rng rng(1);
  Image img = Image::blank(1, 20, 17);
  for (float& v : img.pixels) v = static_cast<float>(rng.uniform(0, 1));
  for (float v : resize_bilinear(img, 51, 9).pixels) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Crop, RejectsDegenerateAndOutOfBounds) {
  const Image img = gradient_image(1, 10, 10);
  EXPECT_THROW(crop(img, {0, 0, 0, 5}), ImageError);
  EXPECT_THROW(crop(img, {5, 5, 6, 2}), ImageError);
  EXPECT_THROW(crop(img, {-1, 0, 2, 2}), ImageError);
  const Image c = crop(img, {2, 3, 4, 5});
  EXPECT_EQ(c.height, 5);
  EXPECT_EQ(c.at(0, 0, 0), img.at(0, 3, 2));
}

TEST(Crop, WholeImageAtTargetSizeIsIdentity) {
  const Image img = gradient_image(1, 282, 231);
  const auto crops = crop_and_resize(img, {0, 0, 231, 282}, default_region_layout({0, 0, 231, 282}));
  EXPECT_EQ(crops.face, img);
}

TEST(Layout, DefaultRegionsInsideFace) {
  for (const BBox face : {BBox{0, 0, 231, 282}, BBox{100, 40, 300, 380}, BBox{3, 7, 20, 20}}) {
    for (const BBox& r : default_region_layout(face)) {
      EXPECT_GT(r.w, 0);
      EXPECT_GT(r.h, 0);
      EXPECT_GE(r.x, face.x);
      EXPECT_GE(r.y, face.y);
      EXPECT_LE(r.x + r.w, face.x + face.w);
      EXPECT_LE(r.y + r.h, face.y + face.h);
    }
  }
}

// Minimal manifest with real image files, for error-path tests.
class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::filesystem::create_directories(dir.path() / "img");
    write_pnm(dir.path() / "img/a_on.pgm", gradient_image(1, 60, 50));
    write_pnm(dir.path() / "img/a_ap.pgm", gradient_image(1, 60, 50));
  }
  std::string good_line(const std::string& id = "a") const {
    return R"({"sample_id":")" + id +
           R"(","subject":"s1","onset_path":"img/a_on.pgm","apex_path":"img/a_ap.pgm","raw_label":"Fear",)"
           R"("action_units":[4,"AU12","L17"],"face_bbox":[2,3,40,50],"region_bboxes":{"oral":[10,30,20,10]}})";
  }
  Manifest parse(const std::string& text, bool check = true) const {
    std::istringstream in(text);
    return parse_manifest(in, dir.path(), "m.jsonl", check);
  }
  std::string error_of(const std::string& text, bool check = true) const {
    try {
      parse(text, check);
    } catch (const ManifestError& e) {
      return e.what();
    }
    return "";
  }
  mer::testing::TempDir dir{"manifest"};
};

TEST_F(ManifestTest, EmptyManifestHasNoRecords) {
  EXPECT_EQ(parse("").size(), 0u);
  EXPECT_EQ(parse("# only a comment\n\n").size(), 0u);
}

TEST_F(ManifestTest, ParsesFieldsAndResolvesRegions) {
  const auto m = parse("# header\n" + good_line() + "\n");
  ASSERT_EQ(m.size(), 1u);
  const auto& r = m.records[0];
  EXPECT_EQ(r.action_units, (std::vector<int>{4, 12, 17}));
  EXPECT_EQ(r.face_bbox, (BBox{2, 3, 40, 50}));
  const auto regions = r.resolved_regions();
  EXPECT_EQ(regions[1], (BBox{10, 30, 20, 10}));
  EXPECT_EQ(regions[0], default_region_layout(r.face_bbox)[0]);
  EXPECT_EQ(m.resolve(r.apex_path), dir.path() / "img/a_ap.pgm");
}

TEST_F(ManifestTest, MalformedRecordNamesLineAndField) {
  std::string line = good_line("b");
  line.replace(line.find("\"face_bbox\":[2,3,40,50]"), 23, "\"face_bbox\":[2,3,40]");
  const std::string msg = error_of(good_line() + "\n" + line + "\n");
  EXPECT_NE(msg.find("m.jsonl:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("face_bbox"), std::string::npos) << msg;
  EXPECT_NE(error_of("{not json}\n").find("m.jsonl:1"), std::string::npos);
  const std::string unknown = error_of(good_line().substr(0, good_line().size() - 1) + R"(,"apex_frame":3})");
  EXPECT_NE(unknown.find("apex_frame"), std::string::npos) << unknown;
  std::string label = good_line();
  label.replace(label.find("Fear"), 4, "Joy");
  EXPECT_NE(error_of(label).find("raw_label"), std::string::npos);
  EXPECT_NE(error_of(good_line() + "\n" + good_line()).find("duplicate"), std::string::npos);
}

TEST_F(ManifestTest, OutOfBoundsBoxRejected) {
  std::string line = good_line();
  line.replace(line.find("[2,3,40,50]"), 11, "[20,3,40,50]");
  const std::string msg = error_of(line);
  EXPECT_NE(msg.find("face_bbox"), std::string::npos) << msg;
  EXPECT_NE(msg.find("exceeds"), std::string::npos) << msg;
  // The unchecked parse cannot know the image size.
  EXPECT_EQ(parse(line, false).size(), 1u);
}

TEST_F(ManifestTest, MissingImageNamesPath) {
  std::string line = good_line();
  line.replace(line.find("a_ap.pgm"), 8, "zz_ap.pgm");
  const std::string msg = error_of(line);
  EXPECT_NE(msg.find("zz_ap.pgm"), std::string::npos) << msg;
  EXPECT_THROW(load_manifest(dir.path() / "nope.jsonl"), ManifestError);
}

TEST_F(ManifestTest, WriteThenLoadRoundTrips) {
  const auto m = parse(good_line() + "\n" + good_line("b") + "\n");
  write_manifest(dir.path() / "out.jsonl", m.records);
  const auto again = load_manifest(dir.path() / "out.jsonl");
  EXPECT_EQ(again.records, m.records);
  for (const auto& r : m.records) EXPECT_EQ(record_from_json(to_json(r)), r);
}

TEST(Synth, DeterministicAndIndependentOfCount) {
  const auto a = synth_frames(12, 7), b = synth_frames(12, 7), longer = synth_frames(20, 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].record, b[i].record);
    EXPECT_EQ(a[i].apex, b[i].apex);
    EXPECT_EQ(a[i].onset, b[i].onset);
    EXPECT_EQ(a[i].apex, longer[i].apex);
  }
  EXPECT_NE(synth_frames(1, 8)[0].apex, a[0].apex);
}

TEST(Synth, BalancedClassesAndRoundRobinSubjects) {
  const auto samples = synth_generate(50, 7);
  std::array<int, 5> counts{};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ++counts[static_cast<std::size_t>(samples[i].label)];
    EXPECT_EQ(samples[i].label, static_cast<int>(i % 5));
  }
  for (int c : counts) EXPECT_EQ(c, 10);
  std::set<std::string> subjects;
  for (const auto& s : samples) subjects.insert(s.subject);
  EXPECT_EQ(subjects.size(), 10u);
}

TEST(Synth, ShapesAndUnitRange) {
  const auto samples = synth_generate(10, 3);
  for (const auto& s : samples) {
    EXPECT_EQ(s.apex.height, 282);
    EXPECT_EQ(s.apex.width, 231);
    EXPECT_EQ(s.onset.height, 282);
    for (const auto& r : s.regions) {
      EXPECT_EQ(r.height, 64);
      EXPECT_EQ(r.width, 64);
    }
    for (float v : s.apex.pixels) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Synth, CueTableCoversClassesUniquely) {
  std::set<std::pair<int, int>> cues;
  for (int c = 0; c < kNumEmotions; ++c) {
    const auto e = static_cast<Emotion>(c);
    cues.insert({static_cast<int>(cue_texture(e)), static_cast<int>(cue_region(e))});
  }
  EXPECT_EQ(cues.size(), 5u);
  // Neither cue on its own separates the classes.
  std::set<int> textures, regions;
  for (const auto& [t, r] : cues) {
    textures.insert(t);
    regions.insert(r);
  }
  EXPECT_LT(textures.size(), 5u);
  EXPECT_LT(regions.size(), 5u);
}

TEST(Synth, DumpAndReloadReproducesSamples) {
  mer::testing::TempDir dir("synth");
  const auto frames = synth_frames(10, 5);
  const auto manifest_path = write_synthetic(dir.path(), frames);
  const auto manifest = load_manifest(manifest_path);
  ASSERT_EQ(manifest.size(), 10u);
  const auto loaded = load_samples(manifest);
  const auto direct = synth_generate(10, 5);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(loaded[i].id, direct[i].id);
    EXPECT_EQ(loaded[i].label, direct[i].label);
    EXPECT_EQ(loaded[i].apex, direct[i].apex);
    EXPECT_EQ(loaded[i].onset, direct[i].onset);
    for (std::size_t r = 0; r < kNumRegions; ++r) EXPECT_EQ(loaded[i].regions[r], direct[i].regions[r]);
  }
  // Fear and Sadness raw labels fold back to Others.
  std::set<std::string> raw;
  for (const auto& r : manifest.records) raw.insert(r.raw_label);
  EXPECT_TRUE(raw.count("Fear") || raw.count("Sadness"));
}

TEST(Prepare, StacksRegionsAndResizesToModel) {
  auto config = model::ModelConfig::desk();
  const auto samples = synth_generate(5, 2);
  const auto data = prepare(samples, config);
  EXPECT_EQ(data.size(), 5u);
  EXPECT_EQ(data.global_shape, (Shape{1, 64, 64}));
  EXPECT_EQ(data.region_shape, (Shape{5, 32, 32}));
  const auto g = data.global_batch<double>({3, 1});
  EXPECT_EQ(g.shape(), (Shape{2, 1, 64, 64}));
  const Image face = resize_bilinear(samples[3].apex, 64, 64);
  for (Index i = 0; i < 64 * 64; ++i) EXPECT_EQ(g[i], static_cast<double>(face.pixels[static_cast<std::size_t>(i)]));
  const auto r = data.region_batch<float>({0});
  const Image oral = resize_bilinear(samples[0].regions[1], 32, 32);
  for (Index i = 0; i < 32 * 32; ++i) EXPECT_EQ(r[32 * 32 + i], oral.pixels[static_cast<std::size_t>(i)]);
  const auto sub = data.subset({4, 0});
  EXPECT_EQ(sub.labels, (std::vector<int>{data.labels[4], data.labels[0]}));
  config.image_channels = 3;
  EXPECT_EQ(prepare(samples, config).region_shape, (Shape{15, 32, 32}));
}

}  // namespace
}  // namespace mer::data
