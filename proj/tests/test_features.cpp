#include <catch2/catch.hpp>

#include <cmath>
#include <sstream>

#include "seqfuse/features.hpp"

using namespace seqfuse;

namespace {

FeatureSequence make_seq(std::vector<Vec> frames) {
  FeatureSequence s;
  s.dim = frames.front().size();
  s.frames = std::move(frames);
  return s;
}

// Serializes every float of a dataset so byte-identity checks are easy.
std::string fingerprint(const Dataset& ds) {
  std::ostringstream os;
  for (const VideoSample& s : ds.samples) {
    os << s.id << "|";
    for (double v : s.label) os.write(reinterpret_cast<const char*>(&v), sizeof v);
    for (const auto* seq : {&s.spatial, &s.motion})
      for (const Vec& f : seq->frames)
        for (double v : f) os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  return os.str();
}

Vec pooled_class_mean(const Dataset& ds, std::size_t cls, std::size_t dim) {
  Vec mean(dim, 0.0);
  std::size_t n = 0;
  for (const VideoSample& s : ds.samples) {
    if (s.label[cls] == 0.0) continue;
    axpy(1.0, average_pool(s.spatial), mean);
    ++n;
  }
  for (double& v : mean) v /= static_cast<double>(n);
  return mean;
}

}  // namespace

TEST_CASE("average_pool computes the two-point mean") {
  const Vec got = average_pool(make_seq({{1.0, 2.0}, {3.0, 4.0}}));
  CHECK(got == Vec{2.0, 3.0});
}

TEST_CASE("average_pool of a constant sequence is that constant") {
  const Vec got = average_pool(make_seq({{0.5, -1.0}, {0.5, -1.0}, {0.5, -1.0}}));
  CHECK(got[0] == Approx(0.5));
  CHECK(got[1] == Approx(-1.0));
}

TEST_CASE("average_pool matches the per-dimension loop oracle") {
  RngSource rng(21);
  std::vector<Vec> frames(7, Vec(5));
  for (Vec& f : frames) fill_uniform(f, rng, -2.0, 2.0);
  const FeatureSequence seq = make_seq(frames);
  const Vec got = average_pool(seq);
  for (std::size_t d = 0; d < 5; ++d) {
    double sum = 0.0;
    for (const Vec& f : frames) sum += f[d];
    CHECK(got[d] == Approx(sum / 7.0).margin(1e-12));
  }
}

TEST_CASE("average_pool rejects an empty sequence") {
  FeatureSequence s;
  s.dim = 3;
  CHECK_THROWS_AS(average_pool(s), ArgumentError);
}

TEST_CASE("average_pool is frame-permutation invariant") {
  RngSource rng(22);
  std::vector<Vec> frames(9, Vec(4));
  for (Vec& f : frames) fill_uniform(f, rng, -1.0, 1.0);
  const Vec base = average_pool(make_seq(frames));
  for (int trial = 0; trial < 5; ++trial) {
    auto shuffled = frames;
    rng.shuffle(shuffled);
    const Vec got = average_pool(make_seq(shuffled));
    for (std::size_t d = 0; d < 4; ++d) CHECK(got[d] == Approx(base[d]).margin(1e-12));
  }
}

TEST_CASE("temporal mode leaves pooled class means indistinguishable") {
  SynthSpec spec;
  spec.classes = 2;
  spec.train_per_class = 150;
  spec.test_per_class = 10;
  spec.temporal_signal = true;
  spec.pooled_signal = false;
  spec.noise = 0.2;
  spec.seed = 99;
  const SynthResult data = synthesize(spec);

  const Vec m0 = pooled_class_mean(data.train, 0, spec.spatial_dim);
  const Vec m1 = pooled_class_mean(data.train, 1, spec.spatial_dim);
  double dist = 0.0;
  for (std::size_t d = 0; d < m0.size(); ++d) dist += (m0[d] - m1[d]) * (m0[d] - m1[d]);
  dist = std::sqrt(dist);
  // Standard error of the mean difference: noise-driven, both prototypes
  // cancel by construction. 3 * sqrt(2 * dim / n) * sigma_pool with
  // sigma_pool <= noise (pooling over >= t_min frames shrinks it further).
  const double bound =
      3.0 * spec.noise * std::sqrt(2.0 * spec.spatial_dim / spec.train_per_class);
  CHECK(dist < bound);
}

TEST_CASE("correlation mode with zero noise is separable on shared dims") {
  SynthSpec spec;
  spec.classes = 3;
  spec.train_per_class = 12;
  spec.test_per_class = 4;
  spec.temporal_signal = false;
  spec.pooled_signal = true;
  spec.noise = 0.0;
  spec.spatial_dim = 12;
  spec.motion_dim = 8;
  spec.seed = 5;
  const SynthResult data = synthesize(spec);
  const std::size_t shared = std::min(spec.spatial_dim, spec.motion_dim) / 4;

  // Nearest class centroid on the shared block alone: 100% on train.
  std::vector<Vec> centroid(spec.classes, Vec(shared, 0.0));
  std::vector<std::size_t> count(spec.classes, 0);
  for (const VideoSample& s : data.train.samples) {
    const Vec pooled = average_pool(s.spatial);
    std::size_t cls = 0;
    while (s.label[cls] == 0.0) ++cls;
    for (std::size_t d = 0; d < shared; ++d) centroid[cls][d] += pooled[d];
    ++count[cls];
  }
  for (std::size_t c = 0; c < spec.classes; ++c)
    for (double& v : centroid[c]) v /= static_cast<double>(count[c]);

  std::size_t hits = 0;
  for (const VideoSample& s : data.train.samples) {
    const Vec pooled = average_pool(s.spatial);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < spec.classes; ++c) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < shared; ++d)
        d2 += (pooled[d] - centroid[c][d]) * (pooled[d] - centroid[c][d]);
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    std::size_t cls = 0;
    while (s.label[cls] == 0.0) ++cls;
    hits += best == cls;
  }
  CHECK(hits == data.train.samples.size());

  // Shared block really is identical across streams with zero noise.
  for (const VideoSample& s : data.train.samples) {
    const Vec ps = average_pool(s.spatial);
    const Vec pm = average_pool(s.motion);
    for (std::size_t d = 0; d < shared; ++d) CHECK(ps[d] == Approx(pm[d]).margin(1e-12));
  }
}

TEST_CASE("synthesize is deterministic per seed") {
  SynthSpec spec;
  spec.classes = 2;
  spec.train_per_class = 8;
  spec.test_per_class = 8;
  spec.temporal_signal = true;
  spec.pooled_signal = true;
  spec.seed = 1234;
  const SynthResult a = synthesize(spec);
  const SynthResult b = synthesize(spec);
  CHECK(fingerprint(a.train) == fingerprint(b.train));
  CHECK(fingerprint(a.test) == fingerprint(b.test));

  spec.seed = 1235;
  const SynthResult c = synthesize(spec);
  CHECK(fingerprint(a.train) != fingerprint(c.train));
}

TEST_CASE("synthesize rejects impossible specs") {
  SynthSpec spec;
  spec.classes = 3;
  spec.segments = 2;  // only 2 orderings available
  spec.temporal_signal = true;
  CHECK_THROWS_AS(synthesize(spec), ArgumentError);

  SynthSpec bad_t;
  bad_t.temporal_signal = true;
  bad_t.t_min = 1;
  CHECK_THROWS_AS(synthesize(bad_t), ArgumentError);

  SynthSpec bad_dim;
  bad_dim.spatial_dim = 1;
  CHECK_THROWS_AS(synthesize(bad_dim), ArgumentError);

  SynthSpec short_t;  // 5 classes need 3 segments, but T caps at 2
  short_t.classes = 5;
  short_t.temporal_signal = true;
  short_t.t_min = 2;
  short_t.t_max = 2;
  CHECK_THROWS_AS(synthesize(short_t), ArgumentError);
}

TEST_CASE("temporal sequences have equal segment lengths") {
  SynthSpec spec;
  spec.classes = 2;
  spec.train_per_class = 10;
  spec.test_per_class = 2;
  spec.temporal_signal = true;
  spec.t_min = 4;
  spec.t_max = 11;
  spec.seed = 8;
  const SynthResult data = synthesize(spec);
  for (const VideoSample& s : data.train.samples) {
    CHECK(s.spatial.frames.size() % 2 == 0);  // 2 segments for 2 classes
    CHECK(s.spatial.frames.size() >= 4);
    CHECK(s.spatial.frames.size() == s.motion.frames.size());
  }
}

TEST_CASE("split_dataset is deterministic and partitions the samples") {
  SynthSpec spec;
  spec.classes = 2;
  spec.train_per_class = 20;
  spec.test_per_class = 2;
  spec.pooled_signal = true;
  const SynthResult data = synthesize(spec);
  auto [rest_a, hold_a] = split_dataset(data.train, 0.25, 7);
  auto [rest_b, hold_b] = split_dataset(data.train, 0.25, 7);
  CHECK(fingerprint(rest_a) == fingerprint(rest_b));
  CHECK(fingerprint(hold_a) == fingerprint(hold_b));
  CHECK(hold_a.samples.size() == 10);
  CHECK(rest_a.samples.size() + hold_a.samples.size() == data.train.samples.size());
}
