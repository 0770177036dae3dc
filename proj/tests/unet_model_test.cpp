#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracle_helpers.hpp"

using namespace lcadapt;

namespace {

std::string temp_dir() {
  static int n = 0;
  const std::string d = (std::filesystem::temp_directory_path() /
                         strf("lcadapt_unet_%d_%d", getpid(), n++))
                            .string();
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(UNet, ForwardShapeAndErrors) {
  UNetConfig cfg;
  cfg.in_channels = 4;
  cfg.num_classes = 24;
  cfg.depth = 3;
  cfg.base_width = 8;
  UNet model(cfg);
  Tensor x = Tensor::zeros({2, 4, 32, 32});
  Tensor y = model.forward(x);
  EXPECT_TRUE(y.shape() == (Shape4{2, 24, 32, 32}));
  EXPECT_THROW(model.forward(Tensor::zeros({1, 3, 32, 32})), ConfigError);
  EXPECT_THROW(model.forward(Tensor::zeros({1, 4, 20, 32})), ConfigError);  // 20 % 8 != 0
}

TEST(UNet, ParameterCountMatchesHandSum) {
  UNetConfig small;
  small.in_channels = 2;
  small.num_classes = 3;
  small.depth = 1;
  small.base_width = 4;
  EXPECT_EQ(UNet(small).param_count(), 1703);

  UNetConfig dflt;  // 4 -> 24 classes, depth 3, width 8
  EXPECT_EQ(UNet(dflt).param_count(), 122392);
}

TEST(UNet, InitIsSeededGlorotWithZeroBias) {
  UNetConfig cfg;
  cfg.init_seed = 7;
  UNet a(cfg), b(cfg);
  cfg.init_seed = 8;
  UNet c(cfg);
  bool any_diff = false;
  for (size_t i = 0; i < a.params().size(); ++i) {
    const auto& pa = a.params()[i].value.data();
    const auto& pb = b.params()[i].value.data();
    const auto& pc = c.params()[i].value.data();
    for (size_t j = 0; j < pa.size(); ++j) {
      ASSERT_EQ(pa[j], pb[j]);  // same seed, bitwise equal
      any_diff |= pa[j] != pc[j];
    }
  }
  EXPECT_TRUE(any_diff);

  for (const auto& np : a.params()) {
    const Shape4 s = np.value.shape();
    if (np.name.size() > 2 && np.name.substr(np.name.size() - 2) == ".b") {
      for (double v : np.value.data()) EXPECT_EQ(v, 0.0);
    } else {
      const double fan_in = static_cast<double>(s.c * s.h * s.w);
      const double fan_out = static_cast<double>(s.n * s.h * s.w);
      const double lim = std::sqrt(6.0 / (fan_in + fan_out));
      for (double v : np.value.data()) {
        EXPECT_LE(std::abs(v), lim);
      }
    }
  }
}

TEST(UNet, EndToEndGradCheck) {
  UNetConfig cfg;
  cfg.in_channels = 2;
  cfg.num_classes = 2;
  cfg.depth = 1;
  cfg.base_width = 2;
  cfg.init_seed = 3;
  UNet model(cfg);
  Rng rng(19);
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  oracle::fill_away_from_zero(x, rng, 0.2, 0.9);
  Tensor mix = Tensor::zeros({1, 2, 1, 1});
  for (double& v : mix.data()) v = rng.uniform(0.5, 1.5);
  auto fn = [&](Tape* t) {
    return reduce_mean(conv2d(softmax_channels(model.forward(x, t), t), mix, 1, 0, t), t);
  };
  std::vector<Tensor> wrt = {x};
  for (const auto& np : model.params()) wrt.push_back(np.value);
  EXPECT_LT(oracle::grad_check(fn, wrt).max_rel_err, 1e-3);
}

TEST(ArgmaxClasses, LowestIdWinsTies) {
  Tensor logits = Tensor::zeros({1, 3, 1, 2});
  // pixel 0: all equal -> class 0; pixel 1: channel 2 wins
  logits.at(0, 2, 0, 1) = 1.0;
  const ClassMap cm = argmax_classes(logits);
  EXPECT_EQ(cm.at(0, 0), 0);
  EXPECT_EQ(cm.at(0, 1), 2);
}

TEST(PolyLr, ScheduleShape) {
  EXPECT_DOUBLE_EQ(poly_lr(0.001, 0, 100, 0.9), 0.001);
  EXPECT_DOUBLE_EQ(poly_lr(0.001, 100, 100, 0.9), 0.0);
  EXPECT_DOUBLE_EQ(poly_lr(0.01, 25, 100, 1.0), 0.0075);  // linear at power 1
  double prev = 1e9;
  for (int e = 0; e <= 50; ++e) {
    const double lr = poly_lr(0.001, e, 50, 0.9);
    EXPECT_LT(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(poly_lr(0.001, -1, 10, 0.9), ConfigError);
  EXPECT_THROW(poly_lr(0.001, 11, 10, 0.9), ConfigError);
}

TEST(Sgd, MatchesHandComputedSequence) {
  // v <- m v + g + wd p ; p <- p - lr v, two steps by hand
  Tensor p = Tensor::scalar(1.0);
  std::vector<NamedParam> params = {{"p", p}};
  OptimizerState st;
  const double lr = 0.1, m = 0.9, wd = 0.01;

  p.grad()[0] = 0.5;
  sgd_step(params, st, lr, m, wd);
  const double v1 = 0.5 + wd * 1.0;  // 0.51
  const double p1 = 1.0 - lr * v1;   // 0.949
  EXPECT_DOUBLE_EQ(p.data()[0], p1);

  p.grad()[0] = -0.2;
  sgd_step(params, st, lr, m, wd);
  const double v2 = m * v1 - 0.2 + wd * p1;
  EXPECT_DOUBLE_EQ(p.data()[0], p1 - lr * v2);

  EXPECT_THROW(sgd_step(params, st, -1.0, m, wd), ConfigError);
  EXPECT_THROW(sgd_step(params, st, lr, 1.0, wd), ConfigError);
}

TEST(Checkpoint, BitExactRoundTrip) {
  const std::string dir = temp_dir();
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_width = 4;
  cfg.init_seed = 99;
  UNet model(cfg);
  // make the values less regular than a fresh init
  Rng rng(20);
  for (auto& np : model.params())
    for (double& v : np.value.data()) v += rng.uniform(-0.01, 0.01);

  const std::string p1 = dir + "/a.ckpt";
  const std::string p2 = dir + "/b.ckpt";
  save_checkpoint(model, p1);
  UNet loaded = load_checkpoint(p1);
  EXPECT_EQ(loaded.config().depth, 2);
  EXPECT_EQ(loaded.config().base_width, 4);
  EXPECT_EQ(loaded.config().init_seed, 99u);
  ASSERT_EQ(loaded.params().size(), model.params().size());
  for (size_t i = 0; i < model.params().size(); ++i) {
    EXPECT_EQ(loaded.params()[i].name, model.params()[i].name);
    const auto& a = model.params()[i].value.data();
    const auto& b = loaded.params()[i].value.data();
    ASSERT_EQ(a.size(), b.size());
    for (size_t j = 0; j < a.size(); ++j) ASSERT_EQ(a[j], b[j]);
  }
  save_checkpoint(loaded, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsGarbageWithOffset) {
  const std::string dir = temp_dir();
  const std::string path = dir + "/bad.ckpt";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTACKPTxxxxxxxxxxxx";
  }
  try {
    load_checkpoint(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
  // truncated but valid magic
  {
    std::ofstream os(path, std::ios::binary);
    os.write(kCkptMagic, 8);
  }
  EXPECT_THROW(load_checkpoint(path), DataError);
  std::filesystem::remove_all(dir);
}
