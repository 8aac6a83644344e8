#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "esfo/efast.hpp"
#include "esfo/evaluation.hpp"
#include "esfo/hdbscan.hpp"
#include "esfo/simulator.hpp"
#include "esfo/tracker.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace esfo;

namespace {

CornerEvent corner_at(double t, int x, int y, int p = 1) {
  CornerEvent c;
  c.event = {t, x, y, p};
  return c;
}

Cluster cluster_of(std::vector<CornerEvent> members, int id, int n_sigma = 5) {
  Cluster c;
  c.id = id;
  c.members = std::move(members);
  c.refresh(n_sigma);
  return c;
}

// Same partition up to renaming of the labels.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("no corners in an empty stream") {
  CHECK(detect_corners(EventStream{}).empty());
}

TEST_CASE("an isolated event is not a corner") {
  EventStream s;
  s.events = {{0.5, 100, 100, 1}};
  CHECK(detect_corners(s).empty());
}

TEST_CASE("arc test on explicit circles") {
  std::vector<double> ts(16, 0.0);
  for (int i = 2; i < 6; ++i) ts[i] = 1.0;
  CHECK(has_newest_arc(ts, 3, 6));
  CHECK_FALSE(has_newest_arc(ts, 5, 6));
  ts[15] = ts[0] = ts[1] = 2.0;  // wraps around the start
  for (int i = 2; i < 6; ++i) ts[i] = 0.0;
  CHECK(has_newest_arc(ts, 3, 6));
  ts[8] = 2.0;  // a second newest sample breaks contiguity
  CHECK_FALSE(has_newest_arc(ts, 3, 6));
}

TEST_CASE("moving right-angle corner fires at the apex") {
  // Quadrant x <= x0 + s, y <= y0 + s grows one pixel per step; the leading
  // edges emit, apex last.
  EventStream s;
  s.sensor = {64, 64};
  const int x0 = 20, y0 = 20;
  double t = 0.0;
  std::vector<Event> apexes;
  for (int step = 0; step < 12; ++step) {
    const int ax = x0 + step, ay = y0 + step;
    for (int i = 1; i <= 10; ++i) {
      s.events.push_back({t += 1e-4, ax, ay - i, 1});
      s.events.push_back({t += 1e-4, ax - i, ay, 1});
    }
    apexes.push_back({t += 1e-4, ax, ay, 1});
    s.events.push_back(apexes.back());
  }
  const auto got = detect_corners(s);
  CHECK(got == oracle::brute_force_corners(s));
  // Once the quadrant is wide enough to fill both circles.
  int fired = 0;
  for (std::size_t k = 5; k < apexes.size(); ++k) {
    if (std::find(got.begin(), got.end(), apexes[k]) != got.end()) ++fired;
  }
  CHECK(fired == int(apexes.size()) - 5);
}

TEST_CASE("detector matches the arc-enumeration oracle on random streams") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = oracle::random_stream(3000, seed);
    CHECK(detect_corners(s) == oracle::brute_force_corners(s));
  }
}

TEST_CASE("density without neighbours is zero") {
  EventStream s;
  s.events = {{0.1, 50, 50, 1}, {0.1, 50, 51, -1}, {0.5, 50, 50, 1}};
  const std::vector<std::size_t> idx = {0};
  const auto d = corner_densities(idx, s, TrackerConfig{});
  REQUIRE(d.size() == 1);
  CHECK(d[0].density == 0.0);
}

TEST_CASE("density counts same-polarity neighbours within lambda") {
  EventStream s;
  const double t0 = 0.1;
  s.events.push_back({t0, 50, 50, 1});
  for (int i = 1; i <= 7; ++i) {
    s.events.push_back({t0, 50 + (i % 3), 50 - (i % 2), 1});
    s.events.push_back({t0 + i * 0.0008, 50, 50, 1});  // 0.8 ms steps, 5.6 scaled at most
  }
  s.events.push_back({t0, 50, 51, -1});      // other polarity
  s.events.push_back({t0, 58, 50, 1});       // just beyond lambda
  s.events.push_back({t0 + 0.02, 50, 50, 1});  // 20 ms later
  sort_events(s.events);
  std::size_t corner = 0;
  while (!(s.events[corner] == Event{t0, 50, 50, 1})) ++corner;
  const std::vector<std::size_t> idx = {corner};
  TrackerConfig cfg;
  cfg.lambda = 7.0;
  const auto d = corner_densities(idx, s, cfg);
  CHECK(d[0].density == doctest::Approx(2.0));
}

TEST_CASE("density threshold keeps corners at or above the polarity mean") {
  std::vector<CornerEvent> c = {corner_at(0.1, 1, 1), corner_at(0.2, 2, 2),
                                corner_at(0.3, 3, 3, -1)};
  c[0].density = 1.0;
  c[1].density = 3.0;
  c[2].density = 0.5;
  const auto kept = threshold_by_polarity_mean(c);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].event.x == 2);
  CHECK(kept[1].event.p == -1);  // alone at its own mean
}

TEST_CASE("two separated groups cluster like single linkage") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> jitter(0.0, 1.5);
  std::vector<CornerEvent> corners;
  std::vector<Eigen::Vector3d> pts;
  TrackerConfig cfg;
  for (int g = 0; g < 2; ++g) {
    for (int i = 0; i < 20; ++i) {
      const int x = 50 + 100 * g + int(jitter(rng));
      const int y = 60 + int(jitter(rng));
      const double t = 0.2 + jitter(rng) / cfg.time_scale;
      corners.push_back(corner_at(t, x, y));
      pts.emplace_back(x, y, t * cfg.time_scale);
    }
  }
  const auto clusters = cluster_corners(corners, cfg);
  REQUIRE(clusters.size() == 2);
  std::vector<int> got(corners.size(), -1);
  for (const auto& c : clusters) {
    for (const auto& m : c.members) {
      for (std::size_t i = 0; i < corners.size(); ++i) {
        if (corners[i].event == m.event) got[i] = c.id;
      }
    }
  }
  CHECK(same_partition(got, oracle::single_linkage(pts, 10.0)));
}

TEST_CASE("too few corners are all noise") {
  std::vector<CornerEvent> c;
  for (int i = 0; i < 5; ++i) c.push_back(corner_at(0.1, 10 + i, 10));
  CHECK(cluster_corners(c, TrackerConfig{}).empty());
}

TEST_CASE("one tight group is one cluster") {
  std::vector<CornerEvent> c;
  for (int i = 0; i < 30; ++i) c.push_back(corner_at(0.1 + (i % 3) * 1e-4, 10 + i % 2, 10 + i % 3));
  const auto clusters = cluster_corners(c, TrackerConfig{});
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].members.size() == 30);
}

TEST_CASE("hdbscan labels follow point order") {
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 15; ++i) pts.emplace_back(100 + 0.1 * i, 0, 0);
  for (int i = 0; i < 15; ++i) pts.emplace_back(0.1 * i, 0, 0);
  HdbscanParams params;
  params.min_cluster_size = 5;
  const auto labels = hdbscan(pts, params);
  CHECK(labels.front() == 0);
  CHECK(labels.back() == 1);
}

TEST_CASE("cluster descriptors average the first and last members") {
  std::vector<CornerEvent> m;
  for (int i = 0; i < 10; ++i) m.push_back(corner_at(0.01 * (9 - i), i, 2 * i));
  const Cluster c = cluster_of(m, 0, 2);
  CHECK(c.members.front().event.t == 0.0);
  CHECK(c.head.t == doctest::Approx(0.005));
  CHECK(c.head.x == doctest::Approx(8.5));
  CHECK(c.tail.x == doctest::Approx(0.5));
  CHECK(c.tail.y == doctest::Approx(1.0));
  CHECK(c.head.t <= c.tail.t);
}

TEST_CASE("merge joins a tail to a later head within phi") {
  TrackerConfig cfg;
  std::vector<CornerEvent> a(5, corner_at(0.0, 0, 0));
  std::vector<CornerEvent> b(5, corner_at(0.010, 10, 10));
  const auto merged = merge_clusters({cluster_of(a, 0), cluster_of(b, 1)}, cfg);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].members.size() == 10);
}

TEST_CASE("merge never reaches backwards in time") {
  TrackerConfig cfg;
  // a runs from far away to the origin; b sits 10 ms before a's tail.
  std::vector<CornerEvent> a(5, corner_at(-0.050, -100, 0));
  for (int i = 0; i < 5; ++i) a.push_back(corner_at(0.0, 0, 0));
  std::vector<CornerEvent> b(5, corner_at(-0.010, 10, 10));
  CHECK(merge_clusters({cluster_of(a, 0), cluster_of(b, 1)}, cfg).size() == 2);
}

TEST_CASE("chained merges follow the transitive closure") {
  TrackerConfig cfg;
  SUBCASE("three collinear clusters") {
    std::vector<Cluster> cs;
    for (int i = 0; i < 3; ++i) {
      cs.push_back(cluster_of(std::vector<CornerEvent>(5, corner_at(0.005 * i, 20 * i, 0)), i));
    }
    CHECK(oracle::closure_groups(3, {{0, 1}, {1, 2}}) == 1);
    CHECK(merge_clusters(cs, cfg).size() == 1);
  }
  SUBCASE("random chains") {
    std::mt19937_64 rng(8);
    std::bernoulli_distribution linked(0.6);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Cluster> cs;
      std::vector<std::pair<int, int>> edges;
      double x = 0.0;
      for (int i = 0; i < 8; ++i) {
        if (i > 0) {
          const bool link = linked(rng);
          x += link ? 20.0 : 40.0;  // only neighbours can qualify
          if (link) edges.emplace_back(i - 1, i);
        }
        cs.push_back(
            cluster_of(std::vector<CornerEvent>(6, corner_at(0.002 * i, int(x), 0)), i));
      }
      std::shuffle(cs.begin(), cs.end(), rng);
      CHECK(int(merge_clusters(cs, cfg).size()) == oracle::closure_groups(8, edges));
    }
  }
}

TEST_CASE("window bookkeeping") {
  CHECK(window_count(3.0, 0.030) == 99);
  CHECK(window_index(0.1, 0.03) == 3);
  CHECK(window_index(0.09, 0.03) == 2);
}

TEST_CASE("track samples are per-window means") {
  std::vector<CornerEvent> m = {corner_at(0.100, 10, 20), corner_at(0.110, 12, 22),
                                corner_at(0.160, 30, 30)};
  const auto tracks = extract_tracks(std::vector<Cluster>{cluster_of(m, 4)}, 0.03, 3.0);
  REQUIRE(tracks.size() == 1);
  REQUIRE(tracks[0].samples.size() == 2);
  CHECK(tracks[0].source_cluster == 4);
  CHECK(tracks[0].samples[0].k == 3);
  CHECK(tracks[0].samples[0].u == doctest::Approx(11.0));
  CHECK(tracks[0].samples[0].v == doctest::Approx(21.0));
  CHECK(tracks[0].samples[1].k == 5);
}

TEST_CASE("a cluster seen in one window yields no track") {
  std::vector<CornerEvent> m = {corner_at(0.100, 10, 20), corner_at(0.110, 12, 22)};
  CHECK(extract_tracks(std::vector<Cluster>{cluster_of(m, 0)}, 0.03, 3.0).empty());
}

TEST_CASE("tracker on a simulated cube keeps tracks pure") {
  SceneSpec spec;
  spec.preset = ObjectPreset::cube_corners;
  spec.duration = 1.0;
  spec.events.events_per_landmark_per_second = 8000;
  const SimScene scene = make_scene(spec);
  const auto ev = gt_events_labeled(scene, spec.events);
  const auto res = run_tracker(ev.stream, TrackerConfig{});
  REQUIRE(!res.tracks.empty());
  CHECK(pure_track_fraction(res.tracks, ev.labels) >= 0.8);
  for (const auto& t : res.tracks) {
    for (std::size_t i = 1; i < t.samples.size(); ++i) CHECK(t.samples[i].k > t.samples[i - 1].k);
  }
}

TEST_CASE("track csv round trip") {
  const auto dir = scratch_dir("tracks_csv");
  FeatureTrack t;
  t.track_id = 3;
  t.source_cluster = 7;
  t.samples = {{2, 10.25, 20.5, 3}, {4, 1.0 / 3.0, 2.0 / 7.0, 1}};
  save_tracks_csv(dir / "t.csv", std::vector<FeatureTrack>{t}, 0.03);
  const auto back = load_tracks_csv(dir / "t.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].track_id == 3);
  REQUIRE(back[0].samples.size() == 2);
  CHECK(back[0].samples[1].k == 4);
  CHECK(back[0].samples[1].u == 1.0 / 3.0);
  CHECK(back[0].samples[1].v == 2.0 / 7.0);
}
