#include "dsr/fcn.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

namespace dsr {
namespace {

using testing::Rng;

FeatureMapd image(Rng& rng, Index w, Index h, Index c = 3) {
  FeatureMapd fm(w, h, testing::gaussian(rng, c, w * h));
  return fm;
}

TEST(FcnConfig, ParseAndDefaults) {
  auto cfg = FcnConfig::parse("c8,p,c16,p,c16", 3);
  EXPECT_EQ(cfg, FcnConfig::desk_default(3));
  EXPECT_EQ(cfg.pool_count(), 2);
  EXPECT_EQ(cfg.output_channels(), 16);
  EXPECT_EQ(cfg.to_string(), "c8,p,c16,p,c16");
  EXPECT_THROW(FcnConfig::parse("c8,c8", 3), std::invalid_argument);
  EXPECT_THROW(FcnConfig::parse("p,p", 3), std::invalid_argument);
  EXPECT_THROW(FcnConfig::parse("c8,x", 3), std::invalid_argument);
  EXPECT_THROW(FcnConfig::parse("c0,p", 3), std::invalid_argument);
}

TEST(FcnForward, FivePoolsOn64IsTwoByTwo) {
  Rng rng(1);
  auto p = init_params(FcnConfig::parse("c4,p,c4,p,c8,p,c8,p,c8,p", 3), 1);
  auto out = fcn_forward(image(rng, 64, 64), p);
  EXPECT_EQ(out.width(), 2);
  EXPECT_EQ(out.height(), 2);
  EXPECT_EQ(out.channels(), 8);
}

TEST(FcnForward, DeskConfigOn8x8IsTwoByTwo) {
  Rng rng(2);
  auto out = fcn_forward(image(rng, 8, 8), init_params(FcnConfig::desk_default(), 2));
  EXPECT_EQ(out.width(), 2);
  EXPECT_EQ(out.height(), 2);
  EXPECT_EQ(out.channels(), 16);
}

TEST(FcnForward, ZeroInputZeroBiasGivesZero) {
  auto out = fcn_forward(FeatureMapd(12, 9, 3), init_params(FcnConfig::desk_default(), 3));
  EXPECT_TRUE(out.data().isZero(0));
  EXPECT_EQ(out.width(), 3);
  EXPECT_EQ(out.height(), 2);
}

TEST(FcnForward, Errors) {
  auto p = init_params(FcnConfig::desk_default(), 4);
  EXPECT_THROW(fcn_forward(FeatureMapd(3, 8, 3), p), std::invalid_argument);
  EXPECT_THROW(fcn_forward(FeatureMapd(8, 8, 1), p), std::invalid_argument);
}

TEST(FcnForward, OutputSizeFollowsFloorDivision) {
  Rng rng(5);
  auto cfg = FcnConfig::parse("c3,p,c4,p,c5,p", 2);
  auto p = init_params(cfg, 5);
  std::uniform_int_distribution<Index> dim(8, 40);
  for (int trial = 0; trial < 30; ++trial) {
    const Index w = dim(rng), h = dim(rng);
    auto out = fcn_forward(image(rng, w, h, 2), p);
    EXPECT_EQ(out.width(), w / 8);
    EXPECT_EQ(out.height(), h / 8);
    EXPECT_EQ(cfg.output_size(w, h), std::make_pair(w / 8, h / 8));
  }
}

TEST(FcnForward, ConvolutionIsTranslationEquivariantInTheInterior) {
  Rng rng(6);
  auto p = init_params(FcnConfig::parse("c4,p", 1), 6);
  FeatureMapd a(8, 8, 1), b(8, 8, 1);
  a.at(2, 2, 0) = 1.0;
  b.at(4, 4, 0) = 1.0;
  auto oa = fcn_forward(a, p), ob = fcn_forward(b, p);
  EXPECT_TRUE(oa.fiber(1, 1).isApprox(ob.fiber(2, 2), 1e-14));
}

// Central differences of a random linear functional of the output.
TEST(FcnBackward, MatchesFiniteDifferences) {
  Rng rng(7);
  auto p = init_params(FcnConfig::parse("c4,p,c5", 2), 7);
  for (auto& c : p.convs) c.bias.setConstant(0.05);
  auto in = image(rng, 6, 6, 2);
  ForwardTrace trace;
  auto out = fcn_forward(in, p, &trace);
  const Matrix<double> probe = testing::gaussian(rng, out.channels(), out.cells());
  Matrix<double> input_grad;
  auto g = fcn_backward(trace, p, probe, &input_grad);
  auto f = [&](const FcnParams& q, const FeatureMapd& x) { return (fcn_forward(x, q).data().array() * probe.array()).sum(); };

  const double h = 1e-6;
  for (size_t l = 0; l < p.convs.size(); ++l) {
    for (Index k = 0; k < 12; ++k) {
      const Index i = static_cast<Index>(rng() % static_cast<unsigned>(p.convs[l].weights.size()));
      auto hi = p, lo = p;
      hi.convs[l].weights.data()[i] += h;
      lo.convs[l].weights.data()[i] -= h;
      const double fd = (f(hi, in) - f(lo, in)) / (2 * h);
      EXPECT_LT(testing::rel_error(fd, g.convs[l].weights.data()[i], 1e-6), 1e-5);
    }
    for (Index i = 0; i < p.convs[l].bias.size(); ++i) {
      auto hi = p, lo = p;
      hi.convs[l].bias(i) += h;
      lo.convs[l].bias(i) -= h;
      EXPECT_LT(testing::rel_error((f(hi, in) - f(lo, in)) / (2 * h), g.convs[l].bias(i), 1e-6), 1e-5);
    }
  }
  for (Index i = 0; i < in.data().size(); i += 5) {
    auto hi = in, lo = in;
    hi.data().data()[i] += h;
    lo.data().data()[i] -= h;
    EXPECT_LT(testing::rel_error((f(p, hi) - f(p, lo)) / (2 * h), input_grad.data()[i], 1e-6), 1e-5);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto p = init_params(FcnConfig::parse("c4,p,c6,p,c5,p", 3), 9);
  std::stringstream a;
  save_checkpoint(a, p);
  auto q = load_checkpoint(a);
  EXPECT_EQ(q.config, p.config);
  for (size_t l = 0; l < p.convs.size(); ++l) {
    EXPECT_TRUE(q.convs[l].weights.isApprox(p.convs[l].weights.cast<float>().cast<double>(), 0));
  }
  std::stringstream b;
  save_checkpoint(b, q);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, 4), "FCNP");
}

TEST(Checkpoint, WeightLayoutIsOutInKyKx) {
  auto p = init_params(FcnConfig::parse("c1,p", 2), 1);
  p.convs[0].weights.setZero();
  p.convs[0].weights(0, (1 * 3 + 2) * 2 + 1) = 2.0;  // ky=1, kx=2, in channel 1
  std::stringstream ss;
  save_checkpoint(ss, p);
  const std::string bytes = ss.str();
  // header 12, kind 1, shape 4+16 -> tensor at 33; [0][1][1][2] -> 9 + 5 = 14
  const size_t off = 12 + 1 + 20 + 14 * 4;
  EXPECT_EQ(static_cast<unsigned char>(bytes[off + 3]), 0x40);
}

TEST(Checkpoint, CorruptInputsAreFormatErrors) {
  auto p = init_params(FcnConfig::desk_default(), 10);
  std::stringstream ss;
  save_checkpoint(ss, p);
  const std::string good = ss.str();
  auto fails = [](std::string bytes) {
    std::stringstream in(bytes);
    EXPECT_THROW(load_checkpoint(in), FormatError);
  };
  std::string bad = good;
  bad[1] = 'X';
  fails(bad);
  bad = good;
  bad[4] = 9;
  fails(bad);
  bad = good;
  bad[12] = 7;
  fails(bad);
  fails(good.substr(0, good.size() - 2));
  fails(good + "z");
  EXPECT_THROW(load_checkpoint(std::filesystem::path("/nonexistent.ckpt")), FormatError);
}

}  // namespace
}  // namespace dsr
