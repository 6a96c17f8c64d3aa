#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

// Irregular time-series data model: ingestion, timestamp quantization,
// windowing, per-window normalization, synthetic generation and masking.
// Missing observations are NaN; timestamps are seconds, strictly increasing.

namespace mira::series {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool is_missing(double v);

struct IrregularSeries {
  std::string id;
  std::vector<double> timestamps;  // strictly increasing, finite, >= 0
  std::vector<double> values;      // NaN marks missing

  std::size_t size() const { return timestamps.size(); }
  void validate() const;  // throws on invariant violation
};

struct Window {
  std::vector<double> context_timestamps;  // missing entries already dropped
  std::vector<double> context_values;
  std::vector<double> target_timestamps;  // length H, always emitted
  std::vector<double> target_values;      // may contain NaN
};

struct NormStats {
  double mean = 0.0;
  double std = 1.0;  // clamped to >= kStdFloor
  static constexpr double kStdFloor = 1e-8;
};

struct QuantizeOptions {
  double initial_resolution = 1.0;
  double shrink_factor = 10.0;
  int max_iterations = 8;
};

// Rounds timestamps to the coarsest resolution at which they are all unique,
// shrinking the grid each iteration. If duplicates survive every iteration,
// a rank-ordered jitter of at most 1e-7 * max(1, max|t|) per rank breaks the
// ties. The result is cast to 32-bit float precision (with a corrective
// nudge for any collision that rounding reintroduces), so the output is
// collision-free as float32 and strictly increasing.
std::vector<double> quantize_timestamps(const std::vector<double>& raw,
                                        const QuantizeOptions& opts = {});

double quantize_jitter_bound(const std::vector<double>& raw);

// CSV with header `series_id,timestamp,value`; empty or `NaN` value fields
// mean missing. Rows may be unsorted; exact duplicate (id, timestamp) rows
// are rejected with both line numbers. Timestamps are quantized on ingest.
std::map<std::string, IrregularSeries> ingest_csv(const std::string& path);
void write_csv(const std::string& path,
               const std::map<std::string, IrregularSeries>& data);

struct WindowOptions {
  std::size_t context_length = 64;  // L
  std::size_t horizon = 24;         // H
  std::size_t stride = 1;
  std::size_t min_context = 4;  // windows with fewer surviving tokens are dropped
};

std::vector<Window> make_windows(const IrregularSeries& s, const WindowOptions& opts);

// Statistics come from the context only; timestamps are untouched.
NormStats normalize(Window& w);
std::vector<double> denormalize(const std::vector<double>& values, const NormStats& stats);
double denormalize(double value, const NormStats& stats);

enum class SynthKind { sinusoid_mixture, damped_oscillator, piecewise_trend };
enum class Sampling { regular_grid, exponential_inter_arrival };

SynthKind parse_synth_kind(const std::string& name);  // throws on unknown kind
Sampling parse_sampling(const std::string& name);
std::string to_string(SynthKind kind);
std::string to_string(Sampling mode);

struct SynthParams {
  SynthKind kind = SynthKind::sinusoid_mixture;
  Sampling sampling = Sampling::regular_grid;
  std::size_t points = 512;
  double grid_dt = 1.0;          // regular-grid spacing
  double arrival_rate = 1.0;     // exponential inter-arrival rate
  double noise_std = 0.0;
};

IrregularSeries synth_generate(const SynthParams& params, std::uint64_t seed,
                               const std::string& id = "synth");

// Closed-form signal value used by the generators (noise-free part).
double synth_signal(const SynthParams& params, std::uint64_t seed, double t);

// Replaces exactly round(rate * N) values with the missing marker.
IrregularSeries mask_random(const IrregularSeries& s, double rate, std::uint64_t seed);

}  // namespace mira::series
