#include <catch2/catch.hpp>

#include <cmath>

#include "seqfuse/metrics.hpp"
#include "seqfuse/verify.hpp"

using namespace seqfuse;

namespace {

ScoreTable make_table(std::vector<std::string> ids, std::vector<Vec> rows, std::size_t classes) {
  ScoreTable t;
  t.model = "test";
  for (std::size_t c = 0; c < classes; ++c) t.class_names.push_back("c" + std::to_string(c));
  t.ids = std::move(ids);
  t.rows = std::move(rows);
  return t;
}

GroundTruth make_truth(std::vector<std::string> ids, std::vector<Vec> labels,
                       std::size_t classes) {
  GroundTruth g;
  for (std::size_t c = 0; c < classes; ++c) g.class_names.push_back("c" + std::to_string(c));
  g.ids = std::move(ids);
  g.labels = std::move(labels);
  return g;
}

}  // namespace

TEST_CASE("accuracy on worked cases") {
  const ScoreTable t =
      make_table({"v1", "v2", "v3"}, {{0.9, 0.1}, {0.2, 0.8}, {0.7, 0.3}}, 2);

  SECTION("perfect scores give 1.0") {
    const GroundTruth g = make_truth({"v1", "v2", "v3"}, {{1, 0}, {0, 1}, {1, 0}}, 2);
    CHECK(accuracy(t, g) == 1.0);
  }

  SECTION("two of three correct gives 2/3") {
    const GroundTruth g = make_truth({"v1", "v2", "v3"}, {{1, 0}, {0, 1}, {0, 1}}, 2);
    CHECK(accuracy(t, g) == Approx(2.0 / 3.0));
  }

  SECTION("argmax ties break to the lowest class index") {
    const ScoreTable tie = make_table({"v1"}, {{0.5, 0.5}}, 2);
    const GroundTruth g0 = make_truth({"v1"}, {{1, 0}}, 2);
    const GroundTruth g1 = make_truth({"v1"}, {{0, 1}}, 2);
    CHECK(accuracy(tie, g0) == 1.0);
    CHECK(accuracy(tie, g1) == 0.0);
  }

  SECTION("multi-label ground truth is rejected") {
    const GroundTruth g = make_truth({"v1", "v2", "v3"}, {{1, 1}, {0, 1}, {1, 0}}, 2);
    CHECK_THROWS_AS(accuracy(t, g), DataError);
  }

  SECTION("id mismatches raise an alignment error") {
    const GroundTruth g = make_truth({"v1", "v2", "v9"}, {{1, 0}, {0, 1}, {1, 0}}, 2);
    CHECK_THROWS_AS(accuracy(t, g), AlignmentError);
  }
}

TEST_CASE("average precision worked example") {
  const auto ap = average_precision({"a", "b", "c"}, {0.9, 0.8, 0.7}, {1, 0, 1});
  REQUIRE(ap);
  CHECK(*ap == Approx((1.0 / 1.0 + 2.0 / 3.0) / 2.0).margin(1e-9));  // 0.83333...
}

TEST_CASE("average precision trivia") {
  SECTION("all positives ranked first") {
    const auto ap = average_precision({"a", "b", "c", "d"}, {0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
    REQUIRE(ap);
    CHECK(*ap == 1.0);
  }
  SECTION("no positives is absent") {
    CHECK_FALSE(average_precision({"a", "b"}, {0.9, 0.8}, {0, 0}).has_value());
  }
  SECTION("ranking ties are broken by video id") {
    // Same scores; "a" sorts before "b".
    const auto ap1 = average_precision({"a", "b"}, {0.5, 0.5}, {1, 0});
    const auto ap2 = average_precision({"a", "b"}, {0.5, 0.5}, {0, 1});
    REQUIRE(ap1);
    REQUIRE(ap2);
    CHECK(*ap1 == 1.0);
    CHECK(*ap2 == 0.5);
  }
}

TEST_CASE("average precision matches the brute-force oracle exactly") {
  RngSource rng(50);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.index(30);
    std::vector<std::string> ids;
    Vec scores(n);
    std::vector<char> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("v" + std::to_string(i));
      scores[i] = rng.uniform();
      if (rng.uniform() < 0.3) scores[i] = std::round(scores[i] * 8.0) / 8.0;
      pos[i] = rng.uniform() < 0.45;
    }
    const auto got = average_precision(ids, scores, pos);
    const auto want = verify::average_precision_reference(ids, scores, pos);
    REQUIRE(got.has_value() == want.has_value());
    if (got) CHECK(*got == *want);  // bitwise equal by construction
  }
}

TEST_CASE("reversed-perfect ranking hits the oracle's worst case") {
  // All positives ranked last.
  const std::size_t n = 10, npos = 4;
  std::vector<std::string> ids;
  Vec scores(n);
  std::vector<char> pos(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("v" + std::to_string(i));
    scores[i] = 1.0 - 0.05 * static_cast<double>(i);
    if (i >= n - npos) pos[i] = 1;
  }
  const auto got = average_precision(ids, scores, pos);
  const auto want = verify::average_precision_reference(ids, scores, pos);
  REQUIRE(got);
  REQUIRE(want);
  CHECK(*got == *want);
  // Analytic worst case: positives at ranks 7..10.
  double analytic = 0.0;
  for (std::size_t k = 1; k <= npos; ++k)
    analytic += static_cast<double>(k) / static_cast<double>(n - npos + k);
  analytic /= npos;
  CHECK(*got == Approx(analytic).margin(1e-12));
}

TEST_CASE("mean_ap basics") {
  CHECK(mean_ap({0.75}) == 0.75);
  CHECK(mean_ap({1.0, 0.0}) == 0.5);
  CHECK_THROWS_AS(mean_ap({}), ArgumentError);

  RngSource rng(51);
  Vec aps(20);
  fill_uniform(aps, rng, 0.0, 1.0);
  double want = 0.0;
  for (double v : aps) want += v;
  want /= 20.0;
  CHECK(mean_ap(std::vector<double>(aps.begin(), aps.end())) == Approx(want).margin(1e-12));
}

TEST_CASE("evaluate produces a coherent report") {
  const ScoreTable t = make_table({"v1", "v2", "v3", "v4"},
                                  {{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.3, 0.7}}, 2);
  const GroundTruth g =
      make_truth({"v1", "v2", "v3", "v4"}, {{1, 0}, {0, 1}, {0, 1}, {0, 1}}, 2);
  const EvalReport rep = evaluate(t, g);
  CHECK(rep.samples == 4);
  REQUIRE(rep.accuracy);
  CHECK(*rep.accuracy == Approx(0.75));
  REQUIRE(rep.map);
  REQUIRE(rep.class_ap.size() == 2);
  REQUIRE(rep.class_ap[0]);
  REQUIRE(rep.class_ap[1]);
  CHECK(*rep.map == Approx((*rep.class_ap[0] + *rep.class_ap[1]) / 2.0).margin(1e-12));
  // Confusion counts: row = true class, column = prediction.
  CHECK(rep.confusion(0, 0) == 1.0);
  CHECK(rep.confusion(1, 1) == 2.0);
  CHECK(rep.confusion(1, 0) == 1.0);
}

TEST_CASE("classes without positives are excluded from mAP with a warning") {
  const ScoreTable t = make_table({"v1", "v2"}, {{0.9, 0.1, 0.2}, {0.2, 0.8, 0.3}}, 3);
  const GroundTruth g = make_truth({"v1", "v2"}, {{1, 0, 0}, {0, 1, 0}}, 3);
  const EvalReport rep = evaluate(t, g);
  CHECK_FALSE(rep.class_ap[2].has_value());
  REQUIRE(rep.map);
  bool warned = false;
  for (const std::string& w : rep.warnings) warned = warned || w.find("c2") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("evaluate handles multi-label ground truth") {
  const ScoreTable t = make_table({"v1", "v2", "v3"},
                                  {{0.9, 0.8}, {0.2, 0.7}, {0.6, 0.1}}, 2);
  GroundTruth g = make_truth({"v1", "v2", "v3"}, {{1, 1}, {0, 1}, {1, 0}}, 2);
  const EvalReport rep = evaluate(t, g);
  CHECK_FALSE(rep.accuracy.has_value());  // accuracy undefined for multi-label
  REQUIRE(rep.map);
  REQUIRE(rep.class_ap[0]);
  REQUIRE(rep.class_ap[1]);
  CHECK(rep.confusion.empty());
  bool warned = false;
  for (const std::string& w : rep.warnings)
    warned = warned || w.find("multi-label") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("class-name disagreements are rejected") {
  ScoreTable t = make_table({"v1"}, {{0.9, 0.1}}, 2);
  GroundTruth g = make_truth({"v1"}, {{1, 0}}, 2);
  g.class_names = {"x", "y"};
  CHECK_THROWS_AS(accuracy(t, g), DataError);
  CHECK_THROWS_AS(evaluate(t, g), DataError);
}

TEST_CASE("accuracy and AP are invariant under strictly monotone transforms") {
  const verify::SuiteResult res = verify::run_metrics_suite(10, 10);
  const std::string note = res.notes.empty() ? std::string("no failures") : res.notes.front();
  INFO(note);
  CHECK(res.pass());
}
