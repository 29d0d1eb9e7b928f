// roadguard: roadmap-backed GPS spoof detection for vehicle fleets.
//
// Subcommands:
//   preprocess  build and cache the preprocessed road graph
//   simulate    run a trip/attacker/detector experiment from a config file
//   attack      like simulate, with extra scenarios from a scenario file
//   evaluate    recompute summary statistics from an outcomes CSV
//   bench-hmac  measure packet signing/verification latency

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "roadguard/attacker.hpp"
#include "roadguard/detector.hpp"
#include "roadguard/packet.hpp"
#include "roadguard/rng.hpp"
#include "roadguard/roadmap.hpp"
#include "roadguard/simulator.hpp"

namespace {

using namespace roadguard;
namespace fs = std::filesystem;

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("JSON parse failed for " + path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write file: " + path);
  out << text;
}

int cmd_preprocess(const std::string& map_path, const std::string& out_path) {
  const RoadGraph g = load_roadmap(map_path);
  std::size_t sampled = 0;
  for (const auto& [id, road] : g.roads) sampled += road.samples.size();

  write_text_file(out_path, graph_cache_json(g).dump(1) + "\n");
  std::cout << "junctions: " << g.junctions.size() << "\n"
            << "roads: " << g.roads.size() << "\n"
            << "sampled_points: " << sampled << "\n"
            << "cache: " << out_path << "\n";
  return 0;
}

int run_simulation(SimConfig cfg, const std::string& out_dir) {
  const RoadGraph g = load_roadmap(cfg.map_path);
  const auto trips = build_trips(g, cfg);
  const auto report = run_experiment(g, trips, cfg.scenarios, cfg);

  fs::create_directories(out_dir);
  std::ostringstream csv;
  write_outcomes_csv(report, csv);
  write_text_file(out_dir + "/outcomes.csv", csv.str());
  std::ostringstream jsonl;
  write_outcomes_jsonl(report, jsonl);
  write_text_file(out_dir + "/outcomes.jsonl", jsonl.str());
  write_text_file(out_dir + "/report.json", report_summary_json(report, cfg).dump(2) + "\n");

  std::cout << "packets: " << report.total_packets << "\n"
            << "flagged: " << report.flagged << "\n"
            << "false_positives: " << report.false_positives << "\n"
            << "alerts: " << report.alerts << "\n"
            << "report: " << out_dir << "/report.json\n"
            << "outcomes: " << out_dir << "/outcomes.csv\n";
  return 0;
}

std::vector<AttackScenario> scenarios_from_file(const std::string& path) {
  const auto doc = load_json_file(path);
  std::vector<AttackScenario> out;
  if (doc.is_array()) {
    for (const auto& js : doc) out.push_back(scenario_from_json(js));
  } else if (doc.is_object() && doc.contains("scenarios")) {
    for (const auto& js : doc["scenarios"]) out.push_back(scenario_from_json(js));
  } else if (doc.is_object()) {
    out.push_back(scenario_from_json(doc));
  } else {
    throw ConfigError("scenario file must hold a scenario object or array: " + path);
  }
  return out;
}

int cmd_evaluate(const std::string& csv_path, const std::string& out_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open CSV: " + csv_path);

  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty CSV: " + csv_path);
  if (line != outcome_csv_header())
    throw ValidationError("unexpected CSV header in " + csv_path);

  std::map<std::string, int> reasons, cases;
  std::map<std::string, double> per_vehicle_max_e;
  int rows = 0, flagged = 0;
  double max_e = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    while (cols.size() < 9) cols.push_back("");
    if (cols.size() != 9) throw ValidationError("bad CSV row: " + line);
    ++rows;
    if (!cols[2].empty()) ++cases[cols[2]];
    if (!cols[5].empty()) {
      const double e = std::stod(cols[5]);
      max_e = std::max(max_e, e);
      auto& ve = per_vehicle_max_e[cols[0]];
      ve = std::max(ve, e);
    }
    if (cols[6] == "true") {
      ++flagged;
      ++reasons[cols[7]];
    }
  }

  nlohmann::ordered_json j;
  j["packets"] = rows;
  j["vehicles"] = per_vehicle_max_e.size();
  j["flagged"] = flagged;
  j["reasons"] = reasons;
  j["case_counts"] = cases;
  j["max_e"] = max_e;
  auto by_vehicle = nlohmann::ordered_json::object();
  for (const auto& [vid, e] : per_vehicle_max_e) by_vehicle[vid] = e;
  j["max_e_by_vehicle"] = std::move(by_vehicle);

  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) write_text_file(out_path, text);
  return 0;
}

int cmd_bench_hmac(int iterations, std::uint64_t seed) {
  VehicleKeyStore keys;
  keys.assign(1, seed);
  const VehicleKey& key = keys.get(1);

  SplitMix64 rng(seed);
  std::vector<double> sign_ms(static_cast<std::size_t>(iterations));
  std::vector<double> verify_ms(static_cast<std::size_t>(iterations));
  for (int i = 0; i < iterations; ++i) {
    LocationPacket p;
    p.vehicle_id = 1;
    p.lat = rng.next_double(-90.0, 90.0);
    p.lon = rng.next_double(-180.0, 180.0);
    p.bearing = rng.next_double(0.0, 360.0);
    p.timestamp_ms = static_cast<std::int64_t>(rng.next_below(1'900'000'000'000ULL));

    const auto t0 = std::chrono::steady_clock::now();
    const auto signed_p = sign(p, key);
    const auto t1 = std::chrono::steady_clock::now();
    const bool ok = verify(signed_p, key);
    const auto t2 = std::chrono::steady_clock::now();
    if (!ok) throw ValidationError("benchmark verification failed");
    sign_ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    verify_ms[i] = std::chrono::duration<double, std::milli>(t2 - t1).count();
  }

  const auto stats = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    return std::tuple<double, double, double>{sum / v.size(), v[v.size() / 2],
                                              v[static_cast<std::size_t>(v.size() * 0.99)]};
  };
  const auto [smean, smed, sp99] = stats(sign_ms);
  const auto [vmean, vmed, vp99] = stats(verify_ms);

  std::printf("iterations: %d\n", iterations);
  std::printf("sign    mean %.6f ms | median %.6f ms | p99 %.6f ms\n", smean, smed, sp99);
  std::printf("verify  mean %.6f ms | median %.6f ms | p99 %.6f ms\n", vmean, vmed, vp99);
  std::printf("soft gate: mean sign time < 5 ms -> %s\n", smean < 5.0 ? "ok" : "exceeded");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"roadmap-backed GPS spoof detection simulator"};
  app.require_subcommand(1);

  std::string map_path, out_path, config_path, scenario_path, csv_path;
  std::string out_dir = "out";
  int iterations = 10000;
  std::uint64_t bench_seed = 1;
  std::int64_t seed_override = -1;

  auto* pre = app.add_subcommand("preprocess", "build and cache the preprocessed road graph");
  pre->add_option("--map", map_path, "roadmap interchange JSON")->required();
  pre->add_option("--out", out_path, "cache output path")->required();

  auto* sim = app.add_subcommand("simulate", "run an experiment from a config file");
  sim->add_option("--config", config_path, "run configuration JSON")->required();
  sim->add_option("--out-dir", out_dir, "report output directory");
  sim->add_option("--seed", seed_override, "override the config's seed");

  auto* atk = app.add_subcommand("attack", "run an experiment with extra attack scenarios");
  atk->add_option("--config", config_path, "run configuration JSON")->required();
  atk->add_option("--scenario", scenario_path, "scenario JSON (object or array)")->required();
  atk->add_option("--out-dir", out_dir, "report output directory");
  atk->add_option("--seed", seed_override, "override the config's seed");

  auto* eva = app.add_subcommand("evaluate", "recompute summary stats from an outcomes CSV");
  eva->add_option("--csv", csv_path, "outcomes CSV from a previous run")->required();
  eva->add_option("--out", out_path, "optional JSON output path");

  auto* ben = app.add_subcommand("bench-hmac", "measure signing/verification latency");
  ben->add_option("--iterations", iterations, "iteration count (>= 1000)")
      ->check(CLI::Range(1000, 100000000));
  ben->add_option("--seed", bench_seed, "seed for the benchmark packets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (pre->parsed()) return cmd_preprocess(map_path, out_path);
    if (sim->parsed() || atk->parsed()) {
      const auto doc = load_json_file(config_path);
      const std::string base_dir = fs::path(config_path).parent_path().string();
      SimConfig cfg = config_from_json(doc, base_dir);
      if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
      if (atk->parsed()) {
        for (auto& sc : scenarios_from_file(scenario_path)) cfg.scenarios.push_back(sc);
      }
      return run_simulation(std::move(cfg), out_dir);
    }
    if (eva->parsed()) return cmd_evaluate(csv_path, out_path);
    if (ben->parsed()) return cmd_bench_hmac(iterations, bench_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
