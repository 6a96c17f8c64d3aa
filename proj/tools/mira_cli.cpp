// mira: train, evaluate, and inspect irregular time-series forecasting models.
//
// Every command is deterministic given its flags, config file, and seed; all
// numeric output is printed with %.17g so repeated runs are byte-identical.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mira/checkpoint.hpp"
#include "mira/harness.hpp"
#include "mira/model.hpp"
#include "mira/runconfig.hpp"
#include "mira/series.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace mira;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

runconfig::RunConfig load_config(const std::string& path) {
  return path.empty() ? runconfig::RunConfig{} : runconfig::parse_file(path);
}

std::vector<series::Window> all_windows(const std::map<std::string, series::IrregularSeries>& data,
                                        const series::WindowOptions& opts) {
  std::vector<series::Window> out;
  for (const auto& [id, s] : data) {
    auto w = series::make_windows(s, opts);
    out.insert(out.end(), w.begin(), w.end());
  }
  if (out.empty()) throw std::runtime_error("no usable windows in the input data");
  return out;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

json report_json(const harness::EvalReport& r) {
  return json{{"rmse", r.rmse},
              {"mae", r.mae},
              {"baseline_rmse", r.baseline_rmse},
              {"baseline_mae", r.baseline_mae},
              {"points", r.points}};
}

int cmd_gen_data(const std::string& kind, const std::string& sampling, std::size_t points,
                 double grid_dt, double rate, double noise_std, std::uint64_t seed,
                 const std::string& out_path) {
  series::SynthParams sp;
  sp.kind = series::parse_synth_kind(kind);
  sp.sampling = series::parse_sampling(sampling);
  sp.points = points;
  sp.grid_dt = grid_dt;
  sp.arrival_rate = rate;
  sp.noise_std = noise_std;
  const series::IrregularSeries s = series::synth_generate(sp, seed);
  series::write_csv(out_path, {{s.id, s}});
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& ckpt_path,
              const std::string& curve_path, long steps_override, long seed_override) {
  runconfig::RunConfig cfg = load_config(config_path);
  if (steps_override >= 0) cfg.train.steps = static_cast<std::size_t>(steps_override);
  if (seed_override >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.train.seed = cfg.seed;
  }
  if (cfg.data_path.empty()) throw std::runtime_error("config key 'data.path' is required");
  const auto data = series::ingest_csv(cfg.data_path);
  std::vector<series::Window> windows = all_windows(data, cfg.window);
  for (auto& w : windows) series::normalize(w);

  model::Model m = model::Model::init(cfg.model, cfg.seed);
  std::vector<harness::LossPoint> curve;
  if (cfg.train.steps > 0) curve = harness::train(m, windows, cfg.train);
  checkpoint::save(ckpt_path, m);
  if (!curve_path.empty()) harness::write_loss_curve_csv(curve_path, curve);
  if (!curve.empty()) {
    std::cout << "final_loss " << fmt(curve.back().total) << '\n';
  }
  return 0;
}

int cmd_forecast(const std::string& ckpt_path, const std::string& input_path,
                 const std::string& targets_path, const std::string& out_path) {
  const model::Model m = checkpoint::load(ckpt_path);
  const auto data = series::ingest_csv(input_path);

  // Targets: CSV of `series_id,timestamp` rows.
  std::ifstream tf(targets_path);
  if (!tf) throw std::runtime_error("cannot open targets file '" + targets_path + "'");
  std::string line;
  if (!std::getline(tf, line)) throw std::runtime_error("targets file is empty");
  std::map<std::string, std::vector<double>> targets;
  std::vector<std::pair<std::string, double>> order;
  std::size_t lineno = 1;
  while (std::getline(tf, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("targets row " + std::to_string(lineno) +
                               ": expected 'series_id,timestamp'");
    }
    const std::string id = line.substr(0, comma);
    const double t = std::stod(line.substr(comma + 1));
    const auto it = data.find(id);
    if (it == data.end()) {
      throw std::runtime_error("targets row " + std::to_string(lineno) +
                               ": unknown series '" + id + "'");
    }
    if (t <= it->second.timestamps.back()) {
      throw std::runtime_error("targets row " + std::to_string(lineno) + ": timestamp " +
                               fmt(t) + " is not after the last observation of '" + id +
                               "'");
    }
    targets[id].push_back(t);
    order.emplace_back(id, t);
  }

  std::map<std::string, std::map<double, double>> preds;
  for (const auto& [id, ts] : targets) {
    const series::IrregularSeries& s = data.at(id);
    std::vector<double> ctx_t, ctx_v;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!series::is_missing(s.values[i])) {
        ctx_t.push_back(s.timestamps[i]);
        ctx_v.push_back(s.values[i]);
      }
    }
    series::Window w;
    w.context_timestamps = ctx_t;
    w.context_values = ctx_v;
    const series::NormStats stats = series::normalize(w);
    std::vector<double> sorted = ts;  // forecast wants increasing targets
    std::sort(sorted.begin(), sorted.end());
    const std::vector<double> out = model::forecast(m, ctx_v, ctx_t, sorted, stats);
    for (std::size_t j = 0; j < sorted.size(); ++j) preds[id][sorted[j]] = out[j];
  }

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open '" + out_path + "' for writing");
  out << "series_id,timestamp,prediction\n";
  for (const auto& [id, t] : order) {
    out << id << ',' << fmt(t) << ',' << fmt(preds.at(id).at(t)) << '\n';
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& config_path, const std::string& out_csv,
             const std::string& out_json) {
  runconfig::RunConfig cfg = load_config(config_path);
  const model::Model m = checkpoint::load(ckpt_path);
  const auto data = series::ingest_csv(data_path);
  const harness::EvalReport rep = harness::evaluate(m, all_windows(data, cfg.window));
  if (!out_csv.empty()) harness::write_eval_csv(out_csv, rep);
  if (!out_json.empty()) write_json(out_json, report_json(rep));
  std::cout << "rmse " << fmt(rep.rmse) << " mae " << fmt(rep.mae) << " baseline_rmse "
            << fmt(rep.baseline_rmse) << " baseline_mae " << fmt(rep.baseline_mae)
            << " points " << rep.points << '\n';
  return 0;
}

int cmd_sweep(const std::string& ckpt_path, const std::string& data_path,
              const std::string& config_path, std::vector<double> rates,
              std::uint64_t seed, const std::string& out_csv, const std::string& out_json) {
  runconfig::RunConfig cfg = load_config(config_path);
  const model::Model m = checkpoint::load(ckpt_path);
  const auto data = series::ingest_csv(data_path);
  if (data.size() != 1) {
    throw std::runtime_error("sweep expects exactly one series, found " +
                             std::to_string(data.size()));
  }
  if (rates.empty()) {
    for (int i = 1; i <= 9; ++i) rates.push_back(0.1 * i);
  }
  const auto rows =
      harness::robustness_sweep(m, data.begin()->second, rates, cfg.window, seed);
  if (!out_csv.empty()) harness::write_sweep_csv(out_csv, rows);
  if (!out_json.empty()) {
    json j = json::array();
    for (const auto& r : rows) {
      json row = report_json(r.report);
      row["rate"] = r.rate;
      j.push_back(row);
    }
    write_json(out_json, j);
  }
  for (const auto& r : rows) {
    std::cout << "rate " << fmt(r.rate) << " rmse " << fmt(r.report.rmse) << " mae "
              << fmt(r.report.mae) << '\n';
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& toggles_arg,
               const std::string& out_csv, const std::string& out_json) {
  runconfig::RunConfig cfg = load_config(config_path);
  if (cfg.data_path.empty()) throw std::runtime_error("config key 'data.path' is required");
  const auto data = series::ingest_csv(cfg.data_path);
  std::vector<series::Window> windows = all_windows(data, cfg.window);
  const std::size_t split = windows.size() * 4 / 5;
  if (split == 0 || split == windows.size()) {
    throw std::runtime_error("too few windows for a train/eval split");
  }
  std::vector<series::Window> train_w(windows.begin(), windows.begin() + split);
  std::vector<series::Window> eval_w(windows.begin() + split, windows.end());
  for (auto& w : train_w) series::normalize(w);

  std::vector<std::string> toggles;
  std::string cur;
  for (char c : toggles_arg + ",") {
    if (c == ',') {
      if (!cur.empty()) toggles.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  const auto results = harness::ablation(cfg.model, toggles, train_w, eval_w, cfg.train);

  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw std::runtime_error("cannot open '" + out_csv + "' for writing");
    out << "label,rmse,mae,baseline_rmse,baseline_mae,points\n";
    for (const auto& r : results) {
      out << r.label << ',' << fmt(r.report.rmse) << ',' << fmt(r.report.mae) << ','
          << fmt(r.report.baseline_rmse) << ',' << fmt(r.report.baseline_mae) << ','
          << r.report.points << '\n';
    }
  }
  if (!out_json.empty()) {
    json j = json::array();
    for (const auto& r : results) {
      json row = report_json(r.report);
      row["label"] = r.label;
      j.push_back(row);
    }
    write_json(out_json, j);
  }
  for (const auto& r : results) {
    std::cout << r.label << " rmse " << fmt(r.report.rmse) << " mae " << fmt(r.report.mae)
              << '\n';
  }
  return 0;
}

int cmd_gating(const std::string& ckpt_path, const std::string& data_path,
               const std::string& config_path, const std::string& out_csv) {
  runconfig::RunConfig cfg = load_config(config_path);
  const model::Model m = checkpoint::load(ckpt_path);
  const auto data = series::ingest_csv(data_path);
  const auto rows = harness::gating_report(m, all_windows(data, cfg.window));
  if (!out_csv.empty()) harness::write_gating_csv(out_csv, rows);
  for (const auto& r : rows) {
    std::cout << "layer " << r.layer << " expert " << r.expert << " fraction "
              << fmt(r.selection_fraction) << " mean_score " << fmt(r.mean_score) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIRA-style decoder for forecasting irregularly sampled time series"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic series CSV");
  std::string kind = "sinusoid-mixture", sampling = "exponential", out_path;
  std::size_t points = 512;
  double grid_dt = 1.0, rate = 1.0, noise_std = 0.0;
  std::uint64_t seed = 0;
  gen->add_option("--kind", kind, "sinusoid-mixture|damped-oscillator|piecewise-trend");
  gen->add_option("--sampling", sampling, "regular|exponential");
  gen->add_option("--points", points);
  gen->add_option("--grid-dt", grid_dt);
  gen->add_option("--rate", rate, "exponential inter-arrival rate");
  gen->add_option("--noise-std", noise_std);
  gen->add_option("--seed", seed);
  gen->add_option("--out", out_path)->required();

  // train
  auto* train = app.add_subcommand("train", "train a model from a config file");
  std::string config_path, ckpt_path, curve_path;
  long steps_override = -1, seed_override = -1;
  train->add_option("--config", config_path)->required();
  train->add_option("--out-checkpoint", ckpt_path)->required();
  train->add_option("--loss-curve", curve_path, "loss-curve CSV path");
  train->add_option("--steps", steps_override, "override train.steps");
  train->add_option("--seed", seed_override, "override seed");

  // forecast
  auto* fc = app.add_subcommand("forecast", "predict at listed target timestamps");
  std::string fc_ckpt, fc_input, fc_targets, fc_out;
  fc->add_option("--checkpoint", fc_ckpt)->required();
  fc->add_option("--input-csv", fc_input)->required();
  fc->add_option("--targets-csv", fc_targets)->required();
  fc->add_option("--out", fc_out)->required();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on windowed data");
  std::string ev_ckpt, ev_data, ev_config, ev_csv, ev_json;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--config", ev_config);
  ev->add_option("--out-csv", ev_csv);
  ev->add_option("--out-json", ev_json);

  // sweep
  auto* sw = app.add_subcommand("sweep", "missing-rate robustness sweep");
  std::string sw_ckpt, sw_data, sw_config, sw_csv, sw_json;
  std::vector<double> sw_rates;
  std::uint64_t sw_seed = 0;
  sw->add_option("--checkpoint", sw_ckpt)->required();
  sw->add_option("--data", sw_data)->required();
  sw->add_option("--config", sw_config);
  sw->add_option("--rates", sw_rates, "masking rates (default 0.1..0.9)");
  sw->add_option("--seed", sw_seed);
  sw->add_option("--out-csv", sw_csv);
  sw->add_option("--out-json", sw_json);

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and compare ablation variants");
  std::string ab_config, ab_toggles = "no_ctrope,dense_ffn,identity_extrapolation";
  std::string ab_csv, ab_json;
  ab->add_option("--config", ab_config)->required();
  ab->add_option("--toggles", ab_toggles, "comma-separated variant toggles");
  ab->add_option("--out-csv", ab_csv);
  ab->add_option("--out-json", ab_json);

  // gating-stats
  auto* gt = app.add_subcommand("gating-stats", "per-layer expert routing statistics");
  std::string gt_ckpt, gt_data, gt_config, gt_csv;
  gt->add_option("--checkpoint", gt_ckpt)->required();
  gt->add_option("--data", gt_data)->required();
  gt->add_option("--config", gt_config);
  gt->add_option("--out-csv", gt_csv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen_data(kind, sampling, points, grid_dt, rate, noise_std, seed, out_path);
    }
    if (train->parsed()) {
      return cmd_train(config_path, ckpt_path, curve_path, steps_override, seed_override);
    }
    if (fc->parsed()) return cmd_forecast(fc_ckpt, fc_input, fc_targets, fc_out);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_config, ev_csv, ev_json);
    if (sw->parsed()) {
      return cmd_sweep(sw_ckpt, sw_data, sw_config, sw_rates, sw_seed, sw_csv, sw_json);
    }
    if (ab->parsed()) return cmd_ablate(ab_config, ab_toggles, ab_csv, ab_json);
    if (gt->parsed()) return cmd_gating(gt_ckpt, gt_data, gt_config, gt_csv);
  } catch (const std::exception& e) {
    std::cerr << "mira: error: " << e.what() << '\n';
    return 1;
  }
  std::cerr << "mira: error: no command\n";
  return 1;
}
