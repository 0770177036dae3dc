#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracle_helpers.hpp"

using namespace lcadapt;

namespace {

std::string temp_dir() {
  static int n = 0;
  const std::string d = (std::filesystem::temp_directory_path() /
                         strf("lcadapt_data_%d_%d", getpid(), n++))
                            .string();
  std::filesystem::create_directories(d);
  return d;
}

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  EXPECT_TRUE(is.good()) << path;
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
}

struct WarnCapture {
  std::vector<std::string> messages;
  WarnHandler saved;
  WarnCapture() : saved(warn_handler()) {
    warn_handler() = [this](const std::string& m) { messages.push_back(m); };
  }
  ~WarnCapture() { warn_handler() = saved; }
};

RasterScene make_scene(int64_t h, int64_t w, uint64_t seed, bool labels) {
  Rng rng(seed);
  RasterScene sc(h, w);
  sc.geo_id = strf("scene-%llu", static_cast<unsigned long long>(seed));
  for (double& v : sc.bands) v = rng.uniform(0.0, 1.0);
  if (labels) {
    sc.has_labels = true;
    sc.labels = LabelMap(h, w);
    for (auto& v : sc.labels.v) v = static_cast<uint8_t>(rng.uniform_int(0, 5));
  }
  return sc;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(Rng, DeterministicAndInBounds) {
  Rng a(42), b(42), c(43);
  bool any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    const double va = a.uniform();
    ASSERT_EQ(va, b.uniform());
    if (va != c.uniform()) any_diff = true;
    ASSERT_GE(va, 0.0);
    ASSERT_LT(va, 1.0);
  }
  EXPECT_TRUE(any_diff);

  Rng r(7);
  std::set<int64_t> seen;
  for (int i = 0; i < 3000; ++i) {
    const int64_t v = r.uniform_int(-2, 4);  // inclusive on both ends
    ASSERT_GE(v, -2);
    ASSERT_LE(v, 4);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_EQ(r.uniform_int(5, 5), 5);
}

TEST(Rng, ShuffleIsPermutationAndSeedStable) {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[static_cast<size_t>(i)] = i;
  std::vector<int> w = v;
  Rng a(9), b(9);
  a.shuffle(v);
  b.shuffle(w);
  EXPECT_EQ(v, w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[static_cast<size_t>(i)], i);
}

TEST(Rng, StreamsFromTagsDiffer) {
  Rng a(mix_seed({1, tag_hash("order")}));
  Rng b(mix_seed({1, tag_hash("valsplit")}));
  int diff = 0;
  for (int i = 0; i < 64; ++i)
    if (a.uniform() != b.uniform()) ++diff;
  EXPECT_GT(diff, 60);
}

TEST(Rng, NormalMomentsRoughlyStandard) {
  Rng r(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

// ---------------------------------------------------------------------------

TEST(Config, ParseTypesCommentsAndErrors) {
  const Config c = Config::from_text(
      "# header comment\n"
      "alpha = 3\n"
      "beta = 0.25   # trailing comment\n"
      "gamma = hello world\n"
      "flag = true\n"
      "list = 1, 2.5, -3\n"
      "\n");
  EXPECT_EQ(c.get_int("alpha", 0), 3);
  EXPECT_DOUBLE_EQ(c.get_double("beta", 0), 0.25);
  EXPECT_EQ(c.get_str("gamma", ""), "hello world");
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_EQ(c.get_doubles("list", {}), (std::vector<double>{1, 2.5, -3}));
  EXPECT_EQ(c.get_int("missing", 17), 17);
  EXPECT_THROW(c.require_str("missing"), ConfigError);
  EXPECT_THROW(c.get_int("gamma", 0), ConfigError);
  EXPECT_THROW(c.get_bool("alpha", false), ConfigError);
  EXPECT_THROW(Config::from_text("no equals sign here\n"), ConfigError);
}

TEST(Config, IncludeOverrideAndResolvedText) {
  const std::string dir = temp_dir();
  {
    std::ofstream os(dir + "/base.cfg");
    os << "lr = 0.01\nepochs = 5\n";
  }
  {
    std::ofstream os(dir + "/top.cfg");
    os << "include base.cfg\n"       // relative to the including file
       << "epochs = 9\n";            // later keys win
  }
  const Config c = Config::from_file(dir + "/top.cfg");
  EXPECT_DOUBLE_EQ(c.get_double("lr", 0), 0.01);
  EXPECT_EQ(c.get_int("epochs", 0), 9);
  EXPECT_EQ(c.resolved_text(), "epochs = 9\nlr = 0.01\n");  // sorted keys

  {
    std::ofstream os(dir + "/loop.cfg");
    os << "include loop.cfg\n";
  }
  EXPECT_THROW(Config::from_file(dir + "/loop.cfg"), ConfigError);
  EXPECT_THROW(Config::from_file(dir + "/nosuch.cfg"), ConfigError);

  EXPECT_THROW(c.check_known({"lr"}), ConfigError);  // "epochs" unexpected
  c.check_known({"lr", "epochs", "unused"});
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------

TEST(Raster, SceneRoundTripIsByteIdentical) {
  const std::string dir = temp_dir();
  RasterScene sc = make_scene(13, 9, 5, true);
  sc.tag = ResTag::x2_5;
  const std::string p1 = dir + "/a.msr", p2 = dir + "/b.msr";
  save_scene(sc, p1);
  const RasterScene got = load_scene(p1);
  EXPECT_EQ(got.h, sc.h);
  EXPECT_EQ(got.w, sc.w);
  EXPECT_EQ(got.bands, sc.bands);
  EXPECT_EQ(got.geo_id, sc.geo_id);
  EXPECT_EQ(got.tag, ResTag::x2_5);
  ASSERT_TRUE(got.has_labels);
  EXPECT_EQ(got.labels.v, sc.labels.v);

  save_scene(got, p2);
  EXPECT_EQ(slurp(p1), slurp(p2));  // load->save reproduces the bytes
  std::filesystem::remove_all(dir);
}

TEST(Raster, LoadRejectsCorruptFiles) {
  const std::string dir = temp_dir();
  const std::string path = dir + "/t.msr";
  save_scene(make_scene(6, 6, 8, false), path);
  std::vector<uint8_t> bytes = slurp(path);

  {
    std::vector<uint8_t> bad = bytes;
    bad[0] = 'X';  // magic
    std::ofstream(path, std::ios::binary)
        .write(reinterpret_cast<const char*>(bad.data()),
               static_cast<std::streamsize>(bad.size()));
    EXPECT_THROW(load_scene(path), DataError);
  }
  {
    std::vector<uint8_t> bad(bytes.begin(), bytes.begin() + 40);  // truncated
    std::ofstream(path, std::ios::binary)
        .write(reinterpret_cast<const char*>(bad.data()),
               static_cast<std::streamsize>(bad.size()));
    try {
      load_scene(path);
      FAIL() << "expected DataError";
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    }
  }
  EXPECT_THROW(load_scene(dir + "/missing.msr"), DataError);
  std::filesystem::remove_all(dir);
}

TEST(Raster, ValidateRejectsOutOfRangeBands) {
  RasterScene sc = make_scene(4, 4, 2, false);
  sc.bands[7] = 1.25;
  EXPECT_THROW(sc.validate(), DataError);
  sc.bands[7] = std::nan("");
  EXPECT_THROW(sc.validate(), DataError);
}

TEST(Raster, BatchToTensorLayout) {
  RasterScene a = make_scene(3, 2, 1, false), b = make_scene(3, 2, 2, false);
  Tensor t = batch_to_tensor({&a, &b});
  ASSERT_EQ(t.shape().n, 2);
  ASSERT_EQ(t.shape().c, 4);
  ASSERT_EQ(t.shape().h, 3);
  ASSERT_EQ(t.shape().w, 2);
  for (int band = 0; band < 4; ++band)
    for (int64_t y = 0; y < 3; ++y)
      for (int64_t x = 0; x < 2; ++x) {
        EXPECT_EQ(t.at(0, band, y, x), a.band(band, y, x));
        EXPECT_EQ(t.at(1, band, y, x), b.band(band, y, x));
      }
  RasterScene c = make_scene(4, 2, 3, false);
  EXPECT_THROW(batch_to_tensor({&a, &c}), DataError);
}

TEST(Raster, DomainSaveLoadKeepsOrderAndRoles) {
  const std::string dir = temp_dir();
  DomainSet ds;
  ds.role = DomainRole::source;
  for (int i = 0; i < 3; ++i) ds.tiles.push_back(make_scene(8, 8, 10 + i, true));
  save_domain(ds, dir + "/src");
  const DomainSet got = load_domain(dir + "/src", DomainRole::source);
  ASSERT_EQ(got.tiles.size(), 3u);
  for (int i = 0; i < 3; ++i)
    EXPECT_EQ(got.tiles[static_cast<size_t>(i)].geo_id,
              ds.tiles[static_cast<size_t>(i)].geo_id);
  EXPECT_THROW(load_domain(dir + "/empty", DomainRole::source), DataError);

  DomainSet unlabeled;
  unlabeled.role = DomainRole::source;
  unlabeled.tiles.push_back(make_scene(8, 8, 20, false));
  EXPECT_THROW(unlabeled.validate(), DataError);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------

TEST(Png, WritesValidSignatureAndPaletteIsDistinct) {
  const std::string dir = temp_dir();
  const auto& pal = label_palette();
  ASSERT_EQ(pal.size(), 25u);
  std::set<uint32_t> colors;
  for (const auto& c : pal)
    colors.insert((uint32_t(c[0]) << 16) | (uint32_t(c[1]) << 8) | c[2]);
  EXPECT_EQ(colors.size(), 25u);  // all distinct
  EXPECT_EQ(pal[0][0], 0);
  EXPECT_EQ(pal[0][1], 0);
  EXPECT_EQ(pal[0][2], 0);

  LabelMap lm(5, 7);
  for (size_t i = 0; i < lm.v.size(); ++i) lm.v[i] = static_cast<uint8_t>(i % 25);
  save_label_png(lm, dir + "/lab.png");
  const std::vector<uint8_t> bytes = slurp(dir + "/lab.png");
  const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_TRUE(std::equal(sig, sig + 8, bytes.begin()));
  // IHDR directly after the signature, IEND at the tail
  EXPECT_EQ(std::string(bytes.begin() + 12, bytes.begin() + 16), "IHDR");
  EXPECT_EQ(std::string(bytes.end() - 8, bytes.end() - 4), "IEND");

  const EntropyMap em{2, 2, {0.0, 0.5, 0.75, 1.0}};
  save_entropy_png(em, dir + "/ent.png");
  save_scene_png(make_scene(6, 6, 3, false), dir + "/rgb.png");
  EXPECT_GT(std::filesystem::file_size(dir + "/ent.png"), 8u);
  EXPECT_GT(std::filesystem::file_size(dir + "/rgb.png"), 8u);

  LabelMap over(1, 1);
  over.v = {25};  // beyond the default palette
  EXPECT_THROW(save_label_png(over, dir + "/bad.png"), DataError);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------

TEST(Synth, LayoutMeetsExactQuotas) {
  SynthSpec spec;
  spec.num_classes = 4;
  spec.tile = 32;
  spec.freq = {0.5, 0.25, 0.15, 0.10};
  spec.freq_jitter = 0.0;  // quotas == apportioned frequencies exactly
  spec.finalize();
  Rng rng(3);
  const LabelMap lm = synth_layout(spec, rng);
  int64_t count[5] = {0, 0, 0, 0, 0};
  for (uint8_t v : lm.v) {
    ASSERT_GE(v, 1);
    ASSERT_LE(v, 4);
    ++count[v];
  }
  EXPECT_EQ(count[1], 512);
  EXPECT_EQ(count[2], 256);
  EXPECT_EQ(count[3], 154);  // largest remainder: .36 vs .4 -> class 4 gets the spare
  EXPECT_EQ(count[4], 102);
}

TEST(Synth, JitteredLayoutStillCoversEveryPixel) {
  SynthSpec spec;
  spec.num_classes = 6;
  spec.tile = 24;
  spec.freq_jitter = 0.5;
  spec.finalize();
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const LabelMap lm = synth_layout(spec, rng);
    for (uint8_t v : lm.v) {
      ASSERT_GE(v, 1);
      ASSERT_LE(v, 6);
    }
  }
}

TEST(Synth, DomainsAreSeedDeterministic) {
  SynthSpec spec;
  spec.num_classes = 5;
  spec.tile = 16;
  spec.seed = 77;
  spec.finalize();
  const DomainSet a = generate_domain(spec, 4, DomainRole::source);
  const DomainSet b = generate_domain(spec, 4, DomainRole::source);
  ASSERT_EQ(a.tiles.size(), 4u);
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.tiles[i].bands, b.tiles[i].bands);
    EXPECT_EQ(a.tiles[i].labels.v, b.tiles[i].labels.v);
  }
  // different roles draw from different streams
  const DomainSet t = generate_domain(spec, 4, DomainRole::target);
  EXPECT_NE(a.tiles[0].bands, t.tiles[0].bands);
  for (const auto& tile : a.tiles) tile.validate();
}

TEST(Synth, FrequenciesConvergeOverManyTiles) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.tile = 32;
  spec.freq = {0.5, 0.5};
  spec.freq_jitter = 0.15;
  spec.seed = 5;
  spec.finalize();
  const DomainSet ds = generate_domain(spec, 20, DomainRole::source);
  int64_t c1 = 0, total = 0;
  for (const auto& tile : ds.tiles)
    for (uint8_t v : tile.labels.v) {
      c1 += (v == 1);
      ++total;
    }
  EXPECT_NEAR(static_cast<double>(c1) / static_cast<double>(total), 0.5, 0.02);
}

TEST(Synth, TargetShiftScalesBandMeans) {
  SynthSpec spec;
  spec.num_classes = 3;
  spec.tile = 32;
  spec.spectral_noise = 0.0;
  spec.shift_noise = 0.0;
  spec.band_mean = {{0.3, 0.3, 0.3, 0.3}, {0.4, 0.4, 0.4, 0.4},
                    {0.5, 0.5, 0.5, 0.5}};
  spec.shift_gain = {1.3, 1.3, 1.3, 1.3};
  spec.seed = 6;
  spec.finalize();
  const DomainSet src = generate_domain(spec, 6, DomainRole::source);
  const DomainSet tgt = generate_domain(spec, 6, DomainRole::target);
  auto mean_of = [](const DomainSet& ds) {
    double s = 0.0;
    int64_t n = 0;
    for (const auto& t : ds.tiles)
      for (double v : t.bands) {
        s += v;
        ++n;
      }
    return s / static_cast<double>(n);
  };
  // all class means stay below 1/1.3, so the 1.3x gain never clips
  EXPECT_NEAR(mean_of(tgt) / mean_of(src), 1.3, 0.02);
}

TEST(Synth, TargetFreqSkewTiltsClassBalance) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.tile = 32;
  spec.freq = {0.7, 0.3};
  spec.freq_jitter = 0.0;
  spec.freq_skew = 2.0;  // 0.49 : 0.09 -> ~0.845 : ~0.155
  spec.seed = 7;
  spec.finalize();
  const DomainSet tgt = generate_domain(spec, 8, DomainRole::target);
  int64_t c1 = 0, total = 0;
  for (const auto& t : tgt.tiles)
    for (uint8_t v : t.labels.v) {
      c1 += (v == 1);
      ++total;
    }
  EXPECT_NEAR(static_cast<double>(c1) / static_cast<double>(total),
              0.49 / 0.58, 0.01);
}

TEST(Synth, ConfigValidation) {
  SynthSpec bad;
  bad.freq = {0.5, 0.2};  // sums to 0.7
  bad.num_classes = 2;
  EXPECT_THROW(bad.finalize(), ConfigError);

  const Config cfg = Config::from_text("classes = 3\ntile = 16\nseed = 9\n");
  const SynthSpec spec = SynthSpec::from_config(cfg);
  EXPECT_EQ(spec.num_classes, 3);
  ASSERT_EQ(spec.freq.size(), 3u);
  EXPECT_DOUBLE_EQ(spec.freq[0], 1.0 / 3.0);
  ASSERT_EQ(spec.band_mean.size(), 3u);
  for (const auto& m : spec.band_mean)
    for (double v : m) {
      EXPECT_GE(v, 0.10);
      EXPECT_LE(v, 0.90);
    }
}

TEST(Synth, StripLabelsSealsTargets) {
  SynthSpec spec;
  spec.num_classes = 3;
  spec.tile = 16;
  spec.finalize();
  const DomainSet full = generate_domain(spec, 2, DomainRole::target);
  const DomainSet bare = strip_labels(full);
  for (const auto& t : bare.tiles) EXPECT_FALSE(t.has_labels);
  EXPECT_EQ(bare.tiles[0].bands, full.tiles[0].bands);
}

// ---------------------------------------------------------------------------

TEST(Resample, AreaPreservesMeanAndHandlesFractionalFactors) {
  // 4x4 checkerboard of 0/1 -> any box average is 0.5
  std::vector<double> board(16);
  for (int64_t y = 0; y < 4; ++y)
    for (int64_t x = 0; x < 4; ++x)
      board[static_cast<size_t>(y * 4 + x)] = static_cast<double>((y + x) % 2);
  const std::vector<double> half = area_resample(board, 4, 4, 2, 2);
  for (double v : half) EXPECT_DOUBLE_EQ(v, 0.5);

  // fractional 2.5x reduction: mean is conserved exactly
  Rng rng(12);
  std::vector<double> src(static_cast<size_t>(10 * 10));
  for (double& v : src) v = rng.uniform();
  const std::vector<double> dst = area_resample(src, 10, 10, 4, 4);
  double ms = 0.0, md = 0.0;
  for (double v : src) ms += v;
  for (double v : dst) md += v;
  EXPECT_NEAR(ms / 100.0, md / 16.0, 1e-12);

  const std::vector<double> same = area_resample(src, 10, 10, 10, 10);
  for (size_t i = 0; i < src.size(); ++i) EXPECT_NEAR(same[i], src[i], 1e-12);

  EXPECT_THROW(area_resample(src, 10, 10, 11, 10), ConfigError);
}

TEST(Resample, MajorityVoteAndTieDirection) {
  LabelMap src(4, 4);
  src.v = {1, 1, 2, 2,
           1, 3, 2, 2,
           4, 4, 5, 5,
           4, 4, 5, 5};
  const LabelMap dst = majority_resample(src, 2, 2);
  EXPECT_EQ(dst.at(0, 0), 1);  // 3 of 4
  EXPECT_EQ(dst.at(0, 1), 2);  // all 4
  EXPECT_EQ(dst.at(1, 0), 4);
  EXPECT_EQ(dst.at(1, 1), 5);

  LabelMap tie(2, 2);
  tie.v = {7, 3, 3, 7};  // exact 2-2 tie in the single output cell
  EXPECT_EQ(majority_resample(tie, 1, 1).at(0, 0), 3);

  // every output label occurs inside its footprint
  Rng rng(13);
  LabelMap big(10, 10);
  for (auto& v : big.v) v = static_cast<uint8_t>(rng.uniform_int(0, 6));
  const LabelMap small = majority_resample(big, 4, 4);
  for (int64_t oy = 0; oy < 4; ++oy)
    for (int64_t ox = 0; ox < 4; ++ox) {
      bool found = false;
      for (int64_t y = oy * 10 / 4; y <= (oy + 1) * 10 / 4 && y < 10; ++y)
        for (int64_t x = ox * 10 / 4; x <= (ox + 1) * 10 / 4 && x < 10; ++x)
          found = found || big.at(y, x) == small.at(oy, ox);
      EXPECT_TRUE(found) << oy << "," << ox;
    }
}

TEST(Multiscale, CountsFollowTwoOneOneSplit) {
  std::vector<RasterScene> scenes = {make_scene(200, 200, 30, true)};
  const DomainSet ds =
      build_multiscale_source(scenes, 400, {64, 128, 160}, 64, 99);
  ASSERT_EQ(ds.tiles.size(), 400u);
  int per_tag[3] = {0, 0, 0};
  for (const auto& t : ds.tiles) {
    EXPECT_EQ(t.h, 64);
    EXPECT_EQ(t.w, 64);
    EXPECT_TRUE(t.has_labels);
    ++per_tag[static_cast<int>(t.tag)];
  }
  EXPECT_EQ(per_tag[0], 200);
  EXPECT_EQ(per_tag[1], 100);
  EXPECT_EQ(per_tag[2], 100);
  ds.validate();
}

TEST(Multiscale, OversizedWindowSkippedWithWarning) {
  std::vector<RasterScene> scenes = {make_scene(100, 100, 31, true)};
  WarnCapture cap;
  const DomainSet ds =
      build_multiscale_source(scenes, 100, {64, 128, 96}, 32, 99);
  ASSERT_EQ(cap.messages.size(), 1u);
  EXPECT_NE(cap.messages[0].find("128"), std::string::npos);
  ASSERT_EQ(ds.tiles.size(), 100u);  // share renormalized over the survivors
  int per_tag[3] = {0, 0, 0};
  for (const auto& t : ds.tiles) ++per_tag[static_cast<int>(t.tag)];
  EXPECT_EQ(per_tag[0], 67);  // 2:1 split of 100
  EXPECT_EQ(per_tag[1], 0);
  EXPECT_EQ(per_tag[2], 33);

  EXPECT_THROW(build_multiscale_source(scenes, 10, {128, 256, 512}, 64, 1),
               ConfigError);
  EXPECT_THROW(build_multiscale_source(scenes, 10, {16, 64, 64}, 32, 1),
               ConfigError);
}

TEST(Multiscale, ConstantSceneYieldsConstantCrops) {
  RasterScene flat(96, 96);
  flat.geo_id = "flat";
  std::fill(flat.bands.begin(), flat.bands.end(), 0.625);
  flat.has_labels = true;
  flat.labels = LabelMap(96, 96);
  std::fill(flat.labels.v.begin(), flat.labels.v.end(), uint8_t{3});
  const DomainSet ds = build_multiscale_source({flat}, 40, {32, 64, 80}, 32, 7);
  for (const auto& t : ds.tiles) {
    for (double v : t.bands) ASSERT_NEAR(v, 0.625, 1e-12);
    for (uint8_t v : t.labels.v) ASSERT_EQ(v, 3);
  }
}

// ---------------------------------------------------------------------------

namespace {

UNet tiny_net(int classes = 3) {
  UNetConfig cfg;
  cfg.in_channels = 4;
  cfg.num_classes = classes;
  cfg.depth = 1;
  cfg.base_width = 2;
  cfg.init_seed = 404;
  return UNet(cfg);
}

}  // namespace

TEST(Stitch, SingleWindowMatchesDirectForward) {
  const UNet net = tiny_net();
  const RasterScene sc = make_scene(16, 16, 41, false);
  const ClassMap stitched = stitch_inference(net, sc, 16, 0.0);
  const Tensor logits = net.forward(to_tensor(sc));
  const ClassMap direct = argmax_classes(logits);
  EXPECT_EQ(stitched.v, direct.v);
}

TEST(Stitch, ConstantSceneIsUniformPrediction) {
  const UNet net = tiny_net();
  RasterScene sc(40, 56);
  std::fill(sc.bands.begin(), sc.bands.end(), 0.5);
  const ClassMap cm = stitch_inference(net, sc, 16, 0.5);
  for (uint8_t v : cm.v) ASSERT_EQ(v, cm.v[0]);
}

TEST(Stitch, ZeroOverlapEqualsPartitionOfWindows) {
  const UNet net = tiny_net();
  const RasterScene sc = make_scene(32, 32, 42, false);
  const ClassMap cm = stitch_inference(net, sc, 16, 0.0);
  // with no overlap each 16x16 output block must equal that window's argmax
  Tensor window = Tensor::zeros({1, 4, 16, 16});
  for (int64_t by = 0; by < 2; ++by)
    for (int64_t bx = 0; bx < 2; ++bx) {
      for (int b = 0; b < 4; ++b)
        for (int64_t y = 0; y < 16; ++y)
          for (int64_t x = 0; x < 16; ++x)
            window.at(0, b, y, x) = sc.band(b, by * 16 + y, bx * 16 + x);
      const ClassMap part = argmax_classes(net.forward(window));
      for (int64_t y = 0; y < 16; ++y)
        for (int64_t x = 0; x < 16; ++x)
          ASSERT_EQ(cm.at(by * 16 + y, bx * 16 + x), part.at(y, x));
    }
}

TEST(Stitch, OddScenesAndOversizedTiles) {
  const UNet net = tiny_net();
  const RasterScene odd = make_scene(23, 37, 43, false);  // not tile-aligned
  const ClassMap cm = stitch_inference(net, odd, 16, 0.25);
  EXPECT_EQ(cm.h, 23);
  EXPECT_EQ(cm.w, 37);
  for (uint8_t v : cm.v) ASSERT_LT(v, 3);

  WarnCapture cap;
  const RasterScene small = make_scene(10, 10, 44, false);
  const ClassMap sm = stitch_inference(net, small, 16, 0.0);
  EXPECT_EQ(sm.h, 10);
  EXPECT_EQ(sm.w, 10);
  ASSERT_EQ(cap.messages.size(), 1u);

  EXPECT_THROW(stitch_inference(net, odd, 15, 0.0), ConfigError);
  EXPECT_THROW(stitch_inference(net, odd, 16, 1.0), ConfigError);
}

TEST(Stitch, OverlapAgreesWithNoOverlapOnInterior) {
  const UNet net = tiny_net();
  const RasterScene sc = make_scene(48, 48, 45, false);
  const ClassMap a = stitch_inference(net, sc, 16, 0.0);
  const ClassMap b = stitch_inference(net, sc, 16, 0.5);
  int64_t agree = 0, interior = 0;
  for (int64_t y = 4; y < 44; ++y)
    for (int64_t x = 4; x < 44; ++x) {
      ++interior;
      agree += (a.at(y, x) == b.at(y, x));
    }
  // fusion may flip genuinely ambiguous pixels; the bulk must agree
  EXPECT_GT(static_cast<double>(agree) / static_cast<double>(interior), 0.9);
}
