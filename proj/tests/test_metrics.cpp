#include <gtest/gtest.h>

#include <random>

#include "emguide/metrics.hpp"
#include "emguide/paths.hpp"
#include "oracles.hpp"

using namespace emguide;
using namespace emguide::metrics;

namespace {

PolyLine2D straight(Vec2 a, Vec2 b, int n) {
  PolyLine2D out;
  for (int i = 0; i <= n; ++i) out.push_back(a + (b - a) * (double(i) / n));
  return out;
}

PolyLine2D arc(double r, double from, double to, int n, Vec2 c = Vec2(0.15, 0.15)) {
  PolyLine2D out;
  for (int i = 0; i <= n; ++i) {
    const double a = from + (to - from) * i / n;
    out.push_back(c + r * Vec2(std::cos(a), std::sin(a)));
  }
  return out;
}

sim::Trace trace_from(const std::vector<Vec2>& pen, const std::vector<Vec2>& magnet,
                      const std::vector<double>& theta) {
  sim::Trace t;
  t.dt = 0.02;
  for (std::size_t i = 0; i < pen.size(); ++i) {
    sim::TraceRow r;
    r.t = 0.02 * double(i + 1);
    r.pen = pen[i];
    r.magnet = magnet[i];
    r.theta = theta[i];
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace

TEST(Resample, SpacingAndEndpoints) {
  const PolyLine2D line{{0.0, 0.0}, {0.01, 0.0}, {0.01, 0.0}, {0.01, 0.0101}};
  const PolyLine2D r = resample(line, 1e-3);
  EXPECT_EQ(r.front(), line.front());
  EXPECT_NEAR((r.back() - line.back()).norm(), 0.0, 1e-15);
  for (std::size_t i = 1; i + 1 < r.size(); ++i) {
    EXPECT_NEAR(oracle::segment_distance(r[i], line[0], line[1]) *
                    oracle::segment_distance(r[i], line[2], line[3]),
                0.0, 1e-15);
  }
  EXPECT_EQ(r.size(), 22u);
  EXPECT_THROW(resample(line, 0.0), std::invalid_argument);
  EXPECT_THROW(resample(PolyLine2D{{0.1, 0.1}, {0.1, 0.1}}, 1e-3), std::invalid_argument);
}

TEST(DistanceToPolyline, MatchesSegmentOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  PolyLine2D line;
  for (int i = 0; i < 12; ++i) line.emplace_back(u(rng), u(rng));
  for (int k = 0; k < 500; ++k) {
    const Vec2 p(u(rng), u(rng));
    double best = 1e9;
    for (std::size_t i = 1; i < line.size(); ++i) {
      best = std::min(best, oracle::segment_distance(p, line[i - 1], line[i]));
    }
    EXPECT_NEAR(distance_to_polyline(p, line), best, 1e-14);
  }
}

TEST(PathDeviation, IdenticalIsZero) {
  const PolyLine2D line = arc(0.05, 0.0, 3.0, 300);
  EXPECT_NEAR(mean_path_deviation(line, line), 0.0, 1e-12);
  EXPECT_NEAR(reverse_path_deviation(line, line), 0.0, 1e-12);
}

TEST(PathDeviation, ParallelOffsetLine) {
  const PolyLine2D ref = straight(Vec2(0.05, 0.1), Vec2(0.25, 0.1), 200);
  for (double d : {0.5e-3, 2e-3, 5e-3}) {
    const PolyLine2D drawn = straight(Vec2(0.05, 0.1 + d), Vec2(0.25, 0.1 + d), 137);
    EXPECT_NEAR(mean_path_deviation(drawn, ref), d, 1e-12);
  }
}

TEST(PathDeviation, ConcentricArcOffset) {
  const PolyLine2D ref = arc(0.05, 0.0, 2.0, 4000);
  const PolyLine2D drawn = arc(0.053, 0.0, 2.0, 400);
  EXPECT_NEAR(mean_path_deviation(drawn, ref), 0.003, 1e-6);
}

TEST(PathDeviation, PerpendicularNoiseNearHalfNormalMean) {
  const double sigma = 1e-3;
  const PolyLine2D ref = straight(Vec2(0.0, 0.15), Vec2(0.3, 0.15), 10);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, sigma);
  double sum = 0.0;
  const int runs = 50;
  for (int s = 0; s < runs; ++s) {
    PolyLine2D drawn;
    for (int i = 0; i <= 200; ++i) drawn.emplace_back(0.05 + 1e-3 * i, 0.15 + n(rng));
    // At the vertices themselves the distances are folded normal.
    double direct = 0.0;
    for (const Vec2& p : drawn) direct += distance_to_polyline(p, ref);
    direct /= double(drawn.size());
    EXPECT_NEAR(direct / sigma, std::sqrt(2.0 / kPi), 0.2);
    sum += mean_path_deviation(drawn, ref);
  }
  // Points between vertices sit closer to the line, so the arc-length mean is lower.
  EXPECT_GT(sum / runs, 0.6 * sigma);
  EXPECT_LT(sum / runs, std::sqrt(2.0 / kPi) * sigma);
}

TEST(PathDeviation, TranslationInvariant) {
  const PolyLine2D ref = arc(0.04, 0.3, 2.5, 500);
  PolyLine2D drawn = arc(0.043, 0.2, 2.6, 377);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3e-4);
  for (Vec2& p : drawn) p += Vec2(n(rng), n(rng));
  const double base = mean_path_deviation(drawn, ref);
  for (const Vec2& shift : {Vec2(0.01, -0.02), Vec2(-0.05, 0.03)}) {
    PolyLine2D a = ref, b = drawn;
    for (Vec2& p : a) p += shift;
    for (Vec2& p : b) p += shift;
    EXPECT_NEAR(mean_path_deviation(b, a), base, 1e-12);
  }
}

TEST(PathDeviation, InsensitiveToDrawnDensity) {
  const PolyLine2D ref = arc(0.05, 0.0, 3.0, 3000);
  auto wavy = [](int n) {
    PolyLine2D out;
    for (int i = 0; i <= n; ++i) {
      const double a = 3.0 * i / n;
      const double r = 0.05 + 0.002 * std::sin(9.0 * a);
      out.push_back(Vec2(0.15, 0.15) + r * Vec2(std::cos(a), std::sin(a)));
    }
    return out;
  };
  const double coarse = mean_path_deviation(wavy(150), ref);  // ~1 mm between vertices
  const double fine = mean_path_deviation(wavy(3000), ref);
  EXPECT_NEAR(coarse / fine, 1.0, 0.02);
}

TEST(PathDeviation, DirectionalAsymmetry) {
  const PolyLine2D ref = straight(Vec2(0.05, 0.1), Vec2(0.25, 0.1), 100);
  const PolyLine2D half = straight(Vec2(0.05, 0.1), Vec2(0.15, 0.1), 50);
  EXPECT_NEAR(mean_path_deviation(half, ref), 0.0, 1e-12);
  EXPECT_GT(reverse_path_deviation(half, ref), 0.02);
  EXPECT_THROW(mean_path_deviation(half, PolyLine2D{{0.1, 0.1}}), std::invalid_argument);
}

TEST(Series, RidingSetpointAndGluedMagnet) {
  PathSpec spec;
  const ReferencePath path = build_path(spec);
  std::vector<Vec2> pen, magnet;
  std::vector<double> theta;
  for (int i = 0; i < 100; ++i) {
    theta.push_back(0.002 * i);
    pen.push_back(path.evaluate(theta.back()));
    magnet.push_back(pen.back());
  }
  const sim::Trace t = trace_from(pen, magnet, theta);
  for (double d : setpoint_distance_series(t, path)) EXPECT_NEAR(d, 0.0, 1e-12);
  for (double d : pen_magnet_distance_series(t)) EXPECT_EQ(d, 0.0);
}

TEST(Series, StationaryPenAgainstClockedSetpointGrowsLinearly) {
  PathSpec spec;
  const ReferencePath path = build_path(spec);
  const double v = 0.1, dt = 0.02;
  std::vector<Vec2> pen, magnet;
  std::vector<double> theta;
  for (int i = 0; i < 80; ++i) {
    theta.push_back(v * dt * (i + 1));
    pen.push_back(path.evaluate(0.0));
    magnet.push_back(path.evaluate(theta.back()));
  }
  const auto d = setpoint_distance_series(trace_from(pen, magnet, theta), path);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(d[i], v * dt * double(i + 1), 1e-12);
}

TEST(Stats, MeanStdMax) {
  const Stats s = stats({1.0, 2.0, 3.0, 6.0});
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(3.5));
  EXPECT_DOUBLE_EQ(s.max, 6.0);
  const Stats e = stats({});
  EXPECT_EQ(e.mean, 0.0);
}

TEST(Summary, RowMatchesColumns) {
  PathSpec spec;
  spec.generator = "circle";
  const ReferencePath path = build_path(spec);
  const sim::Trace t =
      sim::run_experiment(sim::ControllerKind::Mpcc, path, sim::UserModel{}, sim::SimConfig{}, 4);
  const Summary s = summarize(t, path, "circle");
  EXPECT_EQ(s.controller, "mpcc");
  EXPECT_EQ(s.seed, 4u);
  EXPECT_EQ(s.steps, t.rows.size());
  EXPECT_GT(s.pen_path_mean, 0.0);
  EXPECT_LT(s.pen_path_mean, 0.01);
  const std::string row = summary_row(s);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::ptrdiff_t(summary_columns().size() - 1));
  EXPECT_EQ(row.rfind("circle,mpcc,4,", 0), 0u);
  EXPECT_NE(row.back(), ',');
}

TEST(Summary, MpccSetpointCloserThanMpc) {
  PathSpec spec;
  spec.generator = "sinus";
  const ReferencePath path = build_path(spec);
  double mpcc = 0.0, mpc = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    mpcc += summarize(sim::run_experiment(sim::ControllerKind::Mpcc, path, sim::UserModel{},
                                          sim::SimConfig{}, seed),
                      path, "sinus")
                .setpoint_distance.mean;
    mpc += summarize(sim::run_experiment(sim::ControllerKind::Mpc, path, sim::UserModel{},
                                         sim::SimConfig{}, seed),
                     path, "sinus")
               .setpoint_distance.mean;
  }
  EXPECT_LT(mpcc, mpc);
}
