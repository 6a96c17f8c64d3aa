#include "mira/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mira::series {

bool is_missing(double v) { return std::isnan(v); }

void IrregularSeries::validate() const {
  if (timestamps.size() != values.size()) {
    throw std::invalid_argument("series '" + id + "': " +
                                std::to_string(timestamps.size()) + " timestamps vs " +
                                std::to_string(values.size()) + " values");
  }
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    if (!std::isfinite(timestamps[i]) || timestamps[i] < 0.0) {
      throw std::invalid_argument("series '" + id + "': timestamp " +
                                  std::to_string(i) + " is not finite and >= 0");
    }
    if (i > 0 && timestamps[i] <= timestamps[i - 1]) {
      throw std::invalid_argument("series '" + id + "': timestamps not strictly increasing at index " +
                                  std::to_string(i));
    }
  }
}

double quantize_jitter_bound(const std::vector<double>& raw) {
  double mx = 0.0;
  for (double t : raw) mx = std::max(mx, std::abs(t));
  return 1e-7 * std::max(1.0, mx);
}

namespace {

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] <= v[i - 1]) return false;
  }
  return true;
}

std::vector<double> round_to(const std::vector<double>& raw, double res) {
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = std::round(raw[i] / res) * res;
  }
  return out;
}

}  // namespace

std::vector<double> quantize_timestamps(const std::vector<double>& raw,
                                        const QuantizeOptions& opts) {
  if (opts.initial_resolution <= 0.0 || opts.shrink_factor <= 1.0 || opts.max_iterations < 1) {
    throw std::invalid_argument("quantize_timestamps: bad options");
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      throw std::invalid_argument("quantize_timestamps: non-finite timestamp at index " +
                                  std::to_string(i));
    }
    if (i > 0 && raw[i] < raw[i - 1]) {
      throw std::invalid_argument("quantize_timestamps: decreasing input at index " +
                                  std::to_string(i));
    }
  }
  if (raw.empty()) return {};

  double res = opts.initial_resolution;
  std::vector<double> q = round_to(raw, res);
  for (int it = 1; it < opts.max_iterations && !strictly_increasing(q); ++it) {
    res /= opts.shrink_factor;
    q = round_to(raw, res);
  }

  if (!strictly_increasing(q)) {
    // Fallback: rank-ordered jitter within each tie group, capped below the
    // gap to the next distinct value so order is preserved.
    const double base = quantize_jitter_bound(raw);
    std::size_t i = 0;
    while (i < q.size()) {
      std::size_t j = i;
      while (j + 1 < q.size() && q[j + 1] == q[i]) ++j;
      const std::size_t group = j - i + 1;
      if (group > 1) {
        const double gap = (j + 1 < q.size()) ? q[j + 1] - q[i]
                                              : std::numeric_limits<double>::infinity();
        const double step = std::min(base, gap / (2.0 * static_cast<double>(group)));
        for (std::size_t k = i + 1; k <= j; ++k) {
          q[k] += static_cast<double>(k - i) * step;
        }
      }
      i = j + 1;
    }
  }

  // Cast to 32-bit precision; nudge any collision the cast reintroduces.
  std::vector<float> f(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) f[k] = static_cast<float>(q[k]);
  for (std::size_t k = 1; k < f.size(); ++k) {
    while (f[k] <= f[k - 1]) {
      f[k] = std::nextafter(f[k - 1], std::numeric_limits<float>::infinity());
    }
  }
  std::vector<double> out(f.begin(), f.end());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct CsvRow {
  std::string id;
  double timestamp;
  double value;  // NaN for missing
  std::size_t line;
};

}  // namespace

std::map<std::string, IrregularSeries> ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("ingest_csv: empty file " + path);
  if (line == "series_id,timestamp,value\r") line.pop_back();
  if (line != "series_id,timestamp,value") {
    throw std::runtime_error("ingest_csv: bad header '" + line + "' in " + path);
  }

  std::vector<CsvRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw std::runtime_error("ingest_csv: malformed row at line " + std::to_string(lineno));
    }
    CsvRow row;
    row.id = line.substr(0, c1);
    row.line = lineno;
    const std::string ts = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string vs = line.substr(c2 + 1);
    try {
      std::size_t pos = 0;
      row.timestamp = std::stod(ts, &pos);
      if (pos != ts.size()) throw std::invalid_argument(ts);
    } catch (const std::exception&) {
      throw std::runtime_error("ingest_csv: bad timestamp at line " + std::to_string(lineno));
    }
    if (vs.empty() || vs == "NaN" || vs == "nan") {
      row.value = kMissing;
    } else {
      try {
        std::size_t pos = 0;
        row.value = std::stod(vs, &pos);
        if (pos != vs.size()) throw std::invalid_argument(vs);
      } catch (const std::exception&) {
        throw std::runtime_error("ingest_csv: bad value at line " + std::to_string(lineno));
      }
    }
    if (row.id.empty()) {
      throw std::runtime_error("ingest_csv: empty series id at line " + std::to_string(lineno));
    }
    rows.push_back(std::move(row));
  }

  std::map<std::string, std::vector<CsvRow>> grouped;
  for (auto& row : rows) grouped[row.id].push_back(row);

  std::map<std::string, IrregularSeries> result;
  for (auto& [id, group] : grouped) {
    std::stable_sort(group.begin(), group.end(),
                     [](const CsvRow& a, const CsvRow& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < group.size(); ++i) {
      if (group[i].timestamp == group[i - 1].timestamp) {
        throw std::runtime_error("ingest_csv: duplicate (" + id + ", " +
                                 std::to_string(group[i].timestamp) + ") at lines " +
                                 std::to_string(group[i - 1].line) + " and " +
                                 std::to_string(group[i].line));
      }
    }
    IrregularSeries s;
    s.id = id;
    for (const CsvRow& row : group) {
      s.timestamps.push_back(row.timestamp);
      s.values.push_back(row.value);
    }
    s.timestamps = quantize_timestamps(s.timestamps);
    s.validate();
    result.emplace(id, std::move(s));
  }
  return result;
}

void write_csv(const std::string& path, const std::map<std::string, IrregularSeries>& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out << "series_id,timestamp,value\n";
  char buf[64];
  for (const auto& [id, s] : data) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.timestamps[i]);
      out << id << ',' << buf << ',';
      if (!is_missing(s.values[i])) {
        std::snprintf(buf, sizeof(buf), "%.17g", s.values[i]);
        out << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

// ---------------------------------------------------------------------------

std::vector<Window> make_windows(const IrregularSeries& s, const WindowOptions& opts) {
  if (opts.context_length < 1 || opts.horizon < 1 || opts.stride < 1) {
    throw std::invalid_argument("make_windows: L, H and stride must be >= 1");
  }
  std::vector<Window> windows;
  const std::size_t L = opts.context_length, H = opts.horizon;
  if (s.size() < L + H) return windows;
  for (std::size_t i0 = 0; i0 + L + H <= s.size(); i0 += opts.stride) {
    Window w;
    for (std::size_t i = i0; i < i0 + L; ++i) {
      if (is_missing(s.values[i])) continue;
      w.context_timestamps.push_back(s.timestamps[i]);
      w.context_values.push_back(s.values[i]);
    }
    if (w.context_timestamps.size() < opts.min_context) continue;
    for (std::size_t i = i0 + L; i < i0 + L + H; ++i) {
      w.target_timestamps.push_back(s.timestamps[i]);
      w.target_values.push_back(s.values[i]);
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

NormStats normalize(Window& w) {
  if (w.context_values.empty()) {
    throw std::invalid_argument("normalize: empty context");
  }
  NormStats stats;
  const double n = static_cast<double>(w.context_values.size());
  stats.mean = std::accumulate(w.context_values.begin(), w.context_values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : w.context_values) var += (v - stats.mean) * (v - stats.mean);
  stats.std = std::max(std::sqrt(var / n), NormStats::kStdFloor);
  for (double& v : w.context_values) v = (v - stats.mean) / stats.std;
  for (double& v : w.target_values) {
    if (!is_missing(v)) v = (v - stats.mean) / stats.std;
  }
  return stats;
}

std::vector<double> denormalize(const std::vector<double>& values, const NormStats& stats) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = denormalize(values[i], stats);
  return out;
}

double denormalize(double value, const NormStats& stats) {
  return value * stats.std + stats.mean;
}

// ---------------------------------------------------------------------------

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "sinusoid-mixture") return SynthKind::sinusoid_mixture;
  if (name == "damped-oscillator") return SynthKind::damped_oscillator;
  if (name == "piecewise-trend") return SynthKind::piecewise_trend;
  throw std::invalid_argument("unknown synthetic kind '" + name + "'");
}

Sampling parse_sampling(const std::string& name) {
  if (name == "regular-grid") return Sampling::regular_grid;
  if (name == "exponential") return Sampling::exponential_inter_arrival;
  if (name == "exponential-inter-arrival") return Sampling::exponential_inter_arrival;
  throw std::invalid_argument("unknown sampling mode '" + name + "'");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::sinusoid_mixture: return "sinusoid-mixture";
    case SynthKind::damped_oscillator: return "damped-oscillator";
    case SynthKind::piecewise_trend: return "piecewise-trend";
  }
  return "?";
}

std::string to_string(Sampling mode) {
  return mode == Sampling::regular_grid ? "regular-grid" : "exponential-inter-arrival";
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit_double(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace

double synth_signal(const SynthParams& params, std::uint64_t seed, double t) {
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (params.kind) {
    case SynthKind::sinusoid_mixture: {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double amp = 0.4 + 0.8 * unit(rng);
        const double period = 8.0 * std::pow(2.5, k) * (0.8 + 0.4 * unit(rng));
        const double phase = 2.0 * M_PI * unit(rng);
        v += amp * std::sin(2.0 * M_PI * t / period + phase);
      }
      return v;
    }
    case SynthKind::damped_oscillator: {
      const double amp = 1.0 + unit(rng);
      const double gamma = 0.002 + 0.004 * unit(rng);
      const double omega = 2.0 * M_PI / (10.0 + 30.0 * unit(rng));
      const double phase = 2.0 * M_PI * unit(rng);
      return amp * std::exp(-gamma * t) * std::sin(omega * t + phase);
    }
    case SynthKind::piecewise_trend: {
      // Continuous piecewise-linear trend; segment slopes come from a
      // counter-based hash so the value at any t is closed-form.
      const double seg = 16.0 + 16.0 * unit(rng);
      const std::uint64_t slope_key = rng();
      const auto slope = [&](std::uint64_t i) {
        return 0.2 * (2.0 * unit_double(splitmix64(slope_key ^ (i * 0x9e3779b97f4a7c15ULL))) - 1.0);
      };
      const double nseg_f = std::floor(t / seg);
      const auto nseg = static_cast<std::uint64_t>(std::max(0.0, nseg_f));
      double v = 0.0;
      for (std::uint64_t i = 0; i < nseg; ++i) v += slope(i) * seg;
      v += slope(nseg) * (t - static_cast<double>(nseg) * seg);
      return v;
    }
  }
  throw std::invalid_argument("synth_signal: bad kind");
}

IrregularSeries synth_generate(const SynthParams& params, std::uint64_t seed,
                               const std::string& id) {
  if (params.points == 0) throw std::invalid_argument("synth_generate: points must be > 0");
  std::vector<double> raw(params.points);
  if (params.sampling == Sampling::regular_grid) {
    if (params.grid_dt <= 0.0) throw std::invalid_argument("synth_generate: grid_dt must be > 0");
    for (std::size_t i = 0; i < params.points; ++i) raw[i] = static_cast<double>(i) * params.grid_dt;
  } else {
    if (params.arrival_rate <= 0.0) throw std::invalid_argument("synth_generate: rate must be > 0");
    std::mt19937_64 rng(splitmix64(seed ^ 0x74696d65ULL));
    std::exponential_distribution<double> gap(params.arrival_rate);
    double t = 0.0;
    for (std::size_t i = 0; i < params.points; ++i) {
      raw[i] = t;
      t += gap(rng);
    }
  }
  IrregularSeries s;
  s.id = id;
  s.timestamps = quantize_timestamps(raw);
  s.values.resize(params.points);
  std::mt19937_64 noise_rng(splitmix64(seed ^ 0x6e6f697365ULL));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < params.points; ++i) {
    s.values[i] = synth_signal(params, seed, s.timestamps[i]);
    if (params.noise_std > 0.0) s.values[i] += params.noise_std * noise(noise_rng);
  }
  s.validate();
  return s;
}

IrregularSeries mask_random(const IrregularSeries& s, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("mask_random: rate " + std::to_string(rate) +
                                " outside [0, 1)");
  }
  IrregularSeries out = s;
  const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(s.size())));
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(splitmix64(seed));
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < k; ++i) out.values[idx[i]] = kMissing;
  return out;
}

}  // namespace mira::series
