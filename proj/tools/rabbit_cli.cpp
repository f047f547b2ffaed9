// rabbit: closed-loop bed-bathing simulator front end.
#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rabbit/rabbit.hpp"

namespace fs = std::filesystem;
using namespace rabbit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFault = 2;
constexpr int kExitUsage = 3;

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  2  runtime fault (controller fault, planning failure, rank-deficient calibration)\n"
    "  3  usage or configuration error (bad flags, malformed config, missing or unreadable files)";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

unsigned worker_count(std::size_t items) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RABBIT_SIM_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) throw UsageError("RABBIT_SIM_THREADS must be a positive integer");
    n = std::min(n, static_cast<unsigned>(cap));
  }
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(n, items)));
}

// Runs fn(i) for i in [0, n) on a bounded pool; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
  if (n == 0) return;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  const unsigned threads = worker_count(n);
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::ofstream open_output(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + p.string() + "'");
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  auto out = open_output(p);
  out << text;
  if (!out) throw UsageError("write failed for '" + p.string() + "'");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> phases;
};

int cmd_run(const RunArgs& a) {
  ScenarioConfig cfg = a.config.empty() ? default_scenario() : load_scenario(a.config);
  if (a.seed) cfg.seed = *a.seed;
  TrialOptions opt;
  for (const auto& p : a.phases) {
    const auto t = parse_task(trim(p));
    if (!t || *t == TaskKind::FreeMotion) throw ConfigError("unknown phase '" + p + "'");
    opt.phases.push_back(*t);
  }

  const TrialResult r = run_trial(cfg, opt);

  const fs::path out(a.out);
  fs::create_directories(out);
  {
    auto f = open_output(out / "trial.csv");
    write_trial_csv(f, r.log);
  }
  {
    auto f = open_output(out / "events.csv");
    write_events_csv(f, r.events);
  }
  for (const auto& prim : r.primitives) {
    auto f = open_output(out / ("primitive_" + std::string(to_string(prim.task)) + ".csv"));
    write_primitive_csv(f, prim);
  }
  write_text(out / "report.json", report_json(r.report).dump(2) + "\n");

  std::cerr << "run: " << r.ticks << " ticks, soap " << r.report.residual_soap_pct << "%, water "
            << r.report.residual_water_pct << "%, peak " << r.report.peak_force_n << " N\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string data;
  std::string split = "test";
  std::uint64_t seed = 0;
};

int cmd_bench_seg(const BenchArgs& a) {
  const fs::path dir(a.data);
  const fs::path manifest = dir / "manifest.csv";
  if (!fs::exists(manifest)) throw UsageError("missing manifest '" + manifest.string() + "'");
  std::ifstream in(manifest);
  if (!in) throw UsageError("cannot read '" + manifest.string() + "'");

  std::string line;
  if (!std::getline(in, line) || trim(line) != "id,tone,hair,coverage,camera_pose")
    throw UsageError("manifest header must be 'id,tone,hair,coverage,camera_pose'");
  std::vector<std::string> ids;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 5 || cells[0].empty()) throw UsageError("malformed manifest row '" + line + "'");
    ids.push_back(cells[0]);
  }
  if (ids.empty()) throw UsageError("manifest lists no scenes");

  std::vector<std::string> missing;
  for (const auto& id : ids)
    for (const char* suffix : {"_rgb.ppm", "_thermal.pgm", "_depth.pgm", "_mask.pgm"})
      if (!fs::exists(dir / (id + suffix))) missing.push_back(id + suffix);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw UsageError("missing dataset files:" + list);
  }

  const DatasetSplit<std::string> split = split_dataset(ids, a.seed);
  const std::vector<std::string>* chosen = nullptr;
  if (a.split == "train") chosen = &split.train;
  else if (a.split == "val") chosen = &split.val;
  else if (a.split == "test") chosen = &split.test;
  else if (a.split == "all") chosen = &ids;
  else throw UsageError("--split must be train, val, test or all");

  const SegParams params = default_scenario().segmentation;
  std::vector<IoUCounts> counts(chosen->size());
  parallel_for(chosen->size(), [&](std::size_t i) {
    const std::string& id = (*chosen)[i];
    try {
      const RgbImage rgb = load_ppm(dir / (id + "_rgb.ppm"));
      const ThermalImage thermal = load_thermal(dir / (id + "_thermal.pgm"));
      const SegMask truth = load_mask(dir / (id + "_mask.pgm"));
      counts[i] = iou_counts(segment_rgbt(rgb, thermal, params), truth);
    } catch (const std::exception& e) {
      throw UsageError(id + ": " + e.what());
    }
  });
  IoUCounts total;
  for (const auto& c : counts) total += c;
  const IoUReport rep = iou_report(total);

  static constexpr std::array<const char*, kNumClasses> kNames{"background", "dry_skin", "water", "soap"};
  std::cout << "class,iou\n";
  Json per_class = Json::object();
  char buf[64];
  for (int c = 0; c < kNumClasses; ++c) {
    if (rep.defined[static_cast<std::size_t>(c)]) {
      const double v = rep.per_class[static_cast<std::size_t>(c)];
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      per_class[kNames[static_cast<std::size_t>(c)]] = round_to(v, 1e-6);
    } else {
      std::snprintf(buf, sizeof(buf), "nan");
      per_class[kNames[static_cast<std::size_t>(c)]] = nullptr;
    }
    std::cout << kNames[static_cast<std::size_t>(c)] << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", rep.miou);
  std::cout << "miou," << buf << '\n';

  Json j;
  j["split"] = a.split;
  j["seed"] = a.seed;
  j["scenes"] = chosen->size();
  j["ids"] = *chosen;
  j["per_class_iou"] = per_class;
  j["miou"] = round_to(rep.miou, 1e-6);
  write_text(dir / "iou_report.json", j.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string out;
  int count = 60;
  std::uint64_t seed = 0;
  int tones = static_cast<int>(kSkinTones.size());
  std::string noise = "off";
};

int cmd_gen_scene(const GenArgs& a) {
  if (a.count < 0) throw UsageError("--count must be non-negative");
  if (a.noise != "on" && a.noise != "off") throw UsageError("--noise must be on or off");
  const bool noise = a.noise == "on";
  const fs::path dir(a.out);
  fs::create_directories(dir);
  const ScenarioConfig cfg = default_scenario();

  std::vector<SceneSpec> specs;
  for (int i = 0; i < a.count; ++i) specs.push_back(scene_spec(i, noise, a.tones));

  parallel_for(specs.size(), [&](std::size_t i) {
    const SceneSpec& s = specs[i];
    const RenderedScene scene = generate_scene(cfg, s, a.seed);
    const std::string id = scene_name(s.id);
    save_ppm(dir / (id + "_rgb.ppm"), scene.rgb);
    save_thermal(dir / (id + "_thermal.pgm"), scene.thermal);
    save_depth(dir / (id + "_depth.pgm"), scene.depth);
    save_mask(dir / (id + "_mask.pgm"), scene.mask);
  });

  std::ostringstream m;
  m << "id,tone,hair,coverage,camera_pose\n";
  for (const auto& s : specs)
    m << scene_name(s.id) << ',' << s.tone << ',' << (s.hair ? 1 : 0) << ',' << to_string(s.coverage) << ','
      << s.camera_pose << '\n';
  write_text(dir / "manifest.csv", m.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string samples;
  std::string out;
};

// Header row, then k feature columns followed by fx, fy, fz.
std::vector<CalibrationSample> read_calibration_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read samples '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw UsageError(path + ": empty file");
  const auto header = split_csv_line(trim(line));
  if (header.size() < 4) throw UsageError(path + ": expected feature columns followed by fx,fy,fz");
  const std::size_t k = header.size() - 3;
  std::vector<CalibrationSample> samples;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " columns");
    std::vector<double> v(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        std::size_t used = 0;
        v[c] = std::stod(cells[c], &used);
        if (trim(cells[c].substr(used)).size() != 0) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw UsageError(path + ":" + std::to_string(line_no) + ": bad number '" + cells[c] + "'");
      }
    }
    CalibrationSample s;
    s.features = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(k));
    s.force = Vec3(v[k], v[k + 1], v[k + 2]);
    samples.push_back(std::move(s));
  }
  return samples;
}

int cmd_calibrate(const CalibrateArgs& a) {
  const DigitCalibration cal = fit_digit_calibration(read_calibration_csv(a.samples));
  Json j;
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < cal.A.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < cal.A.cols(); ++c) row.push_back(cal.A(r, c));
    rows.push_back(row);
  }
  j["features"] = cal.feature_count();
  j["A"] = rows;
  j["b"] = {cal.b.x(), cal.b.y(), cal.b.z()};
  j["residual_rms"] = cal.residual_rms;
  if (a.out.empty()) std::cout << j.dump(2) << '\n';
  else write_text(a.out, j.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robot bed-bathing simulator"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a closed-loop wash/rinse/dry trial");
  run_cmd->add_option("--config", run.config, "Scenario JSON (defaults built in)");
  run_cmd->add_option("--out", run.out, "Output directory")->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "Override the scenario seed");
  run_cmd->add_option("--phases", run.phases, "Comma-separated phases, e.g. wash,rinse,dry")->delimiter(',');

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench-seg", "Benchmark RGB-thermal segmentation on a dataset");
  bench_cmd->add_option("--data", bench.data, "Dataset directory with manifest.csv")->required();
  bench_cmd->add_option("--split", bench.split, "train, val, test or all")->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "Split shuffle seed")->capture_default_str();

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-scene", "Render a synthetic labelled dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of scenes")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generation seed")->capture_default_str();
  gen_cmd->add_option("--tones", gen.tones, "Skin tone presets to cycle (1..6)")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "Sensor noise: on or off")->capture_default_str();

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Fit the tactile flow-to-force map");
  cal_cmd->add_option("--samples", cal.samples, "CSV: feature columns then fx,fy,fz")->required();
  cal_cmd->add_option("--out", cal.out, "Output JSON (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*bench_cmd) return cmd_bench_seg(bench);
    if (*gen_cmd) return cmd_gen_scene(gen);
    if (*cal_cmd) return cmd_calibrate(cal);
  } catch (const ControllerFault& e) {
    std::cerr << "controller fault: " << e.what() << '\n';
    return kExitFault;
  } catch (const PlanningError& e) {
    std::cerr << "planning error: " << e.what() << '\n';
    return kExitFault;
  } catch (const CalibrationError& e) {
    std::cerr << "calibration error: " << e.what() << '\n';
    return kExitFault;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ImageError& e) {
    std::cerr << "image error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
