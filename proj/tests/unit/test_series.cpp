#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mira/series.hpp"

using namespace mira;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/mira_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("quantize: already unique on the grid is unchanged") {
  CHECK(series::quantize_timestamps({1.0, 2.0, 3.0}) ==
        std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("quantize: shrink resolves duplicates at the next resolution") {
  const auto out = series::quantize_timestamps({1.23, 1.27});
  // The quantizer casts through float32, so compare at float precision.
  CHECK(out[0] == doctest::Approx(1.2).epsilon(1e-6));
  CHECK(out[1] == doctest::Approx(1.3).epsilon(1e-6));
}

TEST_CASE("quantize: exact ties fall back to bounded jitter") {
  const std::vector<double> raw{0.5, 0.5, 0.7};
  const auto out = series::quantize_timestamps(raw);
  CHECK(out.size() == 3);
  CHECK(out[0] < out[1]);
  CHECK(out[1] < out[2]);
  const double bound = series::quantize_jitter_bound(raw);
  for (std::size_t i = 0; i < 3; ++i) {
    // One final-resolution unit plus the jitter allowance.
    CHECK(std::abs(out[i] - raw[i]) <= 1e-7 + 3 * bound);
  }
}

TEST_CASE("quantize rejects decreasing and non-finite input") {
  CHECK_THROWS_AS((void)series::quantize_timestamps({2.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS((void)series::quantize_timestamps({0.0, 1.0 / 0.0}),
                  std::invalid_argument);
}

TEST_CASE("quantize property: strictly increasing, order preserved, float32-unique") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> gap(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> raw;
    double t = 0.0;
    for (int i = 0; i < 200; ++i) {
      // Inject exact duplicates and near-duplicates.
      if (i % 7 == 3 && !raw.empty()) {
        raw.push_back(raw.back());
      } else {
        t += gap(rng);
        raw.push_back(t);
      }
    }
    const auto out = series::quantize_timestamps(raw);
    REQUIRE(out.size() == raw.size());
    std::set<float> as_float;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i > 0) {
        CHECK(out[i - 1] < out[i]);
        if (raw[i - 1] < raw[i]) CHECK(out[i - 1] < out[i]);
      }
      as_float.insert(static_cast<float>(out[i]));
    }
    CHECK(as_float.size() == out.size());
  }
}

TEST_CASE("CSV ingestion sorts, parses missing, and round-trips") {
  TempFile f("ingest.csv");
  {
    std::ofstream out(f.path);
    out << "series_id,timestamp,value\n"
        << "b,3,0.5\n"
        << "a,2,\n"  // empty value field = missing
        << "a,1,1.25\n"
        << "b,1,NaN\n"
        << "a,3,-0.5\n"
        << "b,2,2.5\n";
  }
  const auto data = series::ingest_csv(f.path);
  REQUIRE(data.size() == 2);
  const auto& a = data.at("a");
  CHECK(a.timestamps == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(a.values[0] == 1.25);
  CHECK(series::is_missing(a.values[1]));
  CHECK(series::is_missing(data.at("b").values[0]));

  TempFile g("roundtrip.csv");
  series::write_csv(g.path, data);
  const auto again = series::ingest_csv(g.path);
  REQUIRE(again.size() == 2);
  for (const auto& [id, s] : data) {
    CHECK(again.at(id).timestamps == s.timestamps);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (series::is_missing(s.values[i])) {
        CHECK(series::is_missing(again.at(id).values[i]));
      } else {
        CHECK(again.at(id).values[i] == s.values[i]);
      }
    }
  }
}

TEST_CASE("CSV ingestion rejects malformed and duplicate rows with line numbers") {
  TempFile f("bad.csv");
  {
    std::ofstream out(f.path);
    out << "series_id,timestamp,value\na,1,2,3,4\n";
  }
  CHECK_THROWS_WITH_AS((void)series::ingest_csv(f.path),
                       doctest::Contains("line 2"), std::runtime_error);
  {
    std::ofstream out(f.path);
    out << "series_id,timestamp,value\na,1,2\na,1,3\n";
  }
  CHECK_THROWS_WITH_AS((void)series::ingest_csv(f.path),
                       doctest::Contains("lines 2 and 3"), std::runtime_error);
}

TEST_CASE("make_windows index arithmetic and missing handling") {
  series::IrregularSeries s;
  s.id = "w";
  for (int i = 0; i < 10; ++i) {
    s.timestamps.push_back(i);
    s.values.push_back(i * 0.5);
  }
  series::WindowOptions opts;
  opts.context_length = 4;
  opts.horizon = 2;
  opts.stride = 4;
  opts.min_context = 1;
  const auto windows = series::make_windows(s, opts);
  REQUIRE(windows.size() == 2);
  for (const auto& w : windows) {
    CHECK(w.context_values.size() == 4);  // nothing missing
    CHECK(w.target_timestamps.size() == 2);
    CHECK(w.context_timestamps.back() < w.target_timestamps.front());
  }

  // Series shorter than L+H yields no windows.
  series::IrregularSeries tiny;
  tiny.id = "t";
  tiny.timestamps = {0.0, 1.0};
  tiny.values = {1.0, 2.0};
  CHECK(series::make_windows(tiny, opts).empty());

  // With 30% missing, contexts never contain the marker.
  const auto masked = series::mask_random(s, 0.3, 5);
  for (const auto& w : series::make_windows(masked, opts)) {
    for (double v : w.context_values) CHECK(!series::is_missing(v));
  }
}

TEST_CASE("normalization: degenerate, two-point, and round-trip") {
  series::Window w;
  w.context_timestamps = {0, 1, 2};
  w.context_values = {2.0, 2.0, 2.0};
  const auto stats = series::normalize(w);
  CHECK(stats.mean == 2.0);
  CHECK(stats.std == series::NormStats::kStdFloor);
  for (double v : w.context_values) CHECK(v == 0.0);

  series::Window w2;
  w2.context_timestamps = {0, 1};
  w2.context_values = {0.0, 2.0};
  const auto s2 = series::normalize(w2);
  CHECK(s2.mean == 1.0);
  CHECK(s2.std == 1.0);
  CHECK(w2.context_values == std::vector<double>{-1.0, 1.0});

  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(5.0, 3.0);
  series::Window w3;
  std::vector<double> original;
  for (int i = 0; i < 16; ++i) {
    w3.context_timestamps.push_back(i);
    original.push_back(dist(rng));
    w3.context_values.push_back(original.back());
  }
  const auto s3 = series::normalize(w3);
  const auto back = series::denormalize(w3.context_values, s3);
  for (std::size_t i = 0; i < original.size(); ++i) {
    CHECK(back[i] == doctest::Approx(original[i]).epsilon(1e-12));
  }
}

TEST_CASE("normalization statistics come from the context only") {
  series::Window w;
  w.context_timestamps = {0, 1};
  w.context_values = {0.0, 2.0};
  w.target_timestamps = {2};
  w.target_values = {1000.0};  // must not influence the stats
  const auto stats = series::normalize(w);
  CHECK(stats.mean == 1.0);
  CHECK(stats.std == 1.0);
}

TEST_CASE("synthetic generation: grids, determinism, closed form") {
  series::SynthParams p;
  p.kind = series::SynthKind::sinusoid_mixture;
  p.sampling = series::Sampling::regular_grid;
  p.points = 64;
  p.grid_dt = 0.5;
  const auto s = series::synth_generate(p, 1);
  REQUIRE(s.size() == 64);
  for (std::size_t i = 1; i < s.size(); ++i) {
    CHECK(s.timestamps[i] - s.timestamps[i - 1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  p.sampling = series::Sampling::exponential_inter_arrival;
  const auto e1 = series::synth_generate(p, 42);
  const auto e2 = series::synth_generate(p, 42);
  CHECK(e1.timestamps == e2.timestamps);
  CHECK(e1.values == e2.values);

  p.kind = series::SynthKind::damped_oscillator;
  p.noise_std = 0.0;
  const auto d = series::synth_generate(p, 9);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.values[i] ==
          doctest::Approx(series::synth_signal(p, 9, d.timestamps[i])).epsilon(1e-12));
  }

  CHECK_THROWS_AS((void)series::parse_synth_kind("no-such-kind"), std::invalid_argument);
}

TEST_CASE("mask_random: exact count, determinism, no resurrection") {
  series::SynthParams p;
  p.points = 100;
  const auto s = series::synth_generate(p, 2);

  const auto same = series::mask_random(s, 0.0, 1);
  CHECK(same.values == s.values);

  const auto m1 = series::mask_random(s, 0.3, 1);
  const auto m2 = series::mask_random(s, 0.3, 2);
  auto count = [](const series::IrregularSeries& x) {
    std::size_t n = 0;
    for (double v : x.values) n += series::is_missing(v);
    return n;
  };
  CHECK(count(m1) == 30);
  CHECK(count(m2) == 30);
  bool differ = false;
  for (std::size_t i = 0; i < m1.size(); ++i) {
    differ |= series::is_missing(m1.values[i]) != series::is_missing(m2.values[i]);
  }
  CHECK(differ);

  const auto m12 = series::mask_random(m1, 0.2, 7);
  for (std::size_t i = 0; i < m1.size(); ++i) {
    if (series::is_missing(m1.values[i])) CHECK(series::is_missing(m12.values[i]));
  }

  CHECK_THROWS_AS((void)series::mask_random(s, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)series::mask_random(s, -0.1, 0), std::invalid_argument);
}
