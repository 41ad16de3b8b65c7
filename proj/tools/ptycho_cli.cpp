// ptycho: simulate | reconstruct | evaluate | compare | lattice

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ptycho/ptycho.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ptycho;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDivergence = 4, kOverlap = 5 };

// Flags shared by every subcommand that resolves an ExperimentConfig.
struct CommonFlags {
  std::string config;
  std::string out;
  std::string data;
  std::string preset;
  std::string solver;
  std::string metric;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iters;
  std::optional<double> rfactor_tol;
  std::optional<double> eta;
  std::optional<int> dist;
  std::string lattice;
  std::vector<std::string> set;
  bool dump_pgm = false;

  void attach(CLI::App* app, bool with_data) {
    app->add_option("--config", config, "flat JSON config file");
    app->add_option("--out", out, "output directory (file for `lattice`)");
    if (with_data) app->add_option("--data", data, "dataset directory written by `simulate`");
    app->add_option("--preset", preset, "named preset, e.g. paper-noiseless-pagm");
    app->add_option("--solver", solver, "admm|admm2|epie|dr|palm");
    app->add_option("--metric", metric, "pagm|pipm|igm|wigm");
    app->add_option("--seed", seed, "noise / lattice / ePIE seed");
    app->add_option("--max-iters", max_iters, "iteration budget");
    app->add_option("--rfactor-tol", rfactor_tol, "stop when R-factor <= this");
    app->add_option("--eta", eta, "Poisson peak factor (omit for noiseless data)");
    app->add_option("--dist", dist, "scan step in pixels");
    app->add_option("--lattice", lattice, "square|hex|random");
    app->add_option("--set", set, "extra config override KEY=VALUE (repeatable)");
    app->add_flag("--dump-pgm", dump_pgm, "write PGM images of |u|, arg(u), |omega|");
  }

  json overrides() const {
    json o = json::object();
    if (!preset.empty()) o["preset"] = preset;
    if (!solver.empty()) o["solver"] = solver;
    if (!metric.empty()) o["metric"] = metric;
    if (seed) o["seed"] = *seed;
    if (max_iters) o["max_iters"] = *max_iters;
    if (rfactor_tol) o["rfactor_tol"] = *rfactor_tol;
    if (eta) o["eta"] = *eta;
    if (dist) o["dist"] = *dist;
    if (!lattice.empty()) o["lattice"] = lattice;
    if (!data.empty()) o["data"] = data;
    if (!out.empty()) o["out"] = out;
    if (dump_pgm) o["dump_pgm"] = true;
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      json parsed = json::parse(val, nullptr, false);
      o[key] = parsed.is_discarded() || parsed.is_object() || parsed.is_array() ? json(val) : parsed;
    }
    return o;
  }

  ExperimentConfig resolve() const {
    const json file = config.empty() ? json::object() : read_config_file(config);
    return resolve_config(file, overrides());
  }
};

json config_document(const ExperimentConfig& c) {
  json j = to_json(c);
  j["data"] = c.data;
  j["out"] = c.out;
  return j;
}

fs::path require_dir(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing ") + what + " (use --" + what + " or the config key)");
  return path;
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

RealStack probe_diffraction(const ComplexField& omega) {
  const ComplexField fw = unitary_dft(omega);
  RealStack c(1, fw.rows());
  for (std::size_t t = 0; t < fw.size(); ++t) c[t] = std::abs(fw[t]);
  return c;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const CommonFlags& flags) {
  ExperimentConfig c = flags.resolve();
  const fs::path out = require_dir(c.out, "out");
  const Dataset d = make_dataset(dataset_spec(c));
  fs::create_directories(out);
  io::save_field(out / "omega_true.json", d.omega_true);
  io::save_field(out / "u_true.json", d.u_true);
  io::save_lattice(out / "lattice.json", d.lattice);
  io::save_real_stack(out / "clean_magnitudes.json", d.clean, "magnitude");
  io::save_intensity(out / "intensity.json", d.f);
  io::save_real_stack(out / "probe_dp.json", probe_diffraction(d.omega_true), "magnitude");

  json m{{"command", "simulate"},
         {"config", to_json(c)},
         {"J", d.lattice.size()},
         {"files",
          {{"omega_true", "omega_true.json"},
           {"u_true", "u_true.json"},
           {"lattice", "lattice.json"},
           {"clean_magnitudes", "clean_magnitudes.json"},
           {"intensity", "intensity.json"},
           {"probe_dp", "probe_dp.json"}}}};
  if (d.noise) m["snr_intensity_db"] = snr_intensity(d.f, d.clean);
  write_json_file(out / "manifest.json", m);
  std::cout << "wrote dataset (J = " << d.lattice.size() << ") to " << out.string() << '\n';
  return kOk;
}

// ------------------------------------------------------------- reconstruct

struct LoadedData {
  ScanLattice lattice;
  RealStack f;
  std::optional<GroundTruth> truth;
  std::optional<RealField> probe_dp;
};

LoadedData load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  LoadedData d;
  d.lattice = io::load_lattice(dir / "lattice.json");
  d.f = io::load_intensity(dir / "intensity.json");
  if (fs::exists(dir / "omega_true.json") && fs::exists(dir / "u_true.json"))
    d.truth = GroundTruth{io::load_field(dir / "omega_true.json"), io::load_field(dir / "u_true.json")};
  if (fs::exists(dir / "probe_dp.json")) {
    const RealStack c = io::load_real_stack(dir / "probe_dp.json", "magnitude");
    d.probe_dp = RealField(c.side(), c.side(), c.values());
  }
  return d;
}

struct RunOutput {
  RunResult result;
  ComplexField omega;
  ComplexField u;
};

template <class S>
RunOutput drive(S& solver, const ExperimentConfig& c, const LoadedData& d) {
  RunOutput out;
  out.result = run_solver(solver, RunOptions{c.max_iters, c.rfactor_tol, d.truth ? &*d.truth : nullptr});
  out.omega = solver.omega();
  out.u = solver.u();
  return out;
}

RunOutput run_config(const ExperimentConfig& c, const LoadedData& d) {
  switch (c.solver) {
    case SolverKind::admm: {
      AdmmSolver s(d.f, d.lattice, solver_config_i(c, d.f));
      return drive(s, c, d);
    }
    case SolverKind::admm2: {
      if (!d.probe_dp) throw DataError("Model II needs probe_dp.json in the dataset directory");
      Admm2Solver s(d.f, d.lattice, solver_config_ii(c, d.f, *d.probe_dp));
      return drive(s, c, d);
    }
    default: {
      BaselineSolver s(d.f, d.lattice, baseline_config(c, d.f));
      return drive(s, c, d);
    }
  }
}

std::string_view to_string(StopReason r) { return r == StopReason::tolerance ? "tolerance" : "max_iters"; }

int cmd_reconstruct(const CommonFlags& flags) {
  const ExperimentConfig c = flags.resolve();
  const fs::path data = require_dir(c.data, "data");
  const fs::path out = require_dir(c.out, "out");
  const LoadedData d = load_dataset(data);
  const RunOutput run = run_config(c, d);

  fs::create_directories(out);
  io::save_field(out / "omega.json", run.omega);
  io::save_field(out / "u.json", run.u);
  {
    std::ofstream os(out / "trace.csv");
    write_trace_csv(os, run.result.trace);
  }
  write_json_file(out / "config.json", config_document(c));

  json m{{"command", "reconstruct"},
         {"config", config_document(c)},
         {"iterations", run.result.trace.size()},
         {"stop_reason", std::string(to_string(run.result.reason))},
         {"r_factor", run.result.trace.empty() ? r_factor(run.omega, run.u, d.f, d.lattice)
                                               : run.result.trace.back().r_factor}};
  if (c.dump_pgm) {
    std::vector<double> v(run.u.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::abs(run.u[i]);
    const double su = io::save_pgm(out / "u_abs.pgm", run.u.rows(), run.u.cols(), v);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::arg(run.u[i]) + std::numbers::pi;
    io::save_pgm(out / "u_phase.pgm", run.u.rows(), run.u.cols(), v);
    std::vector<double> w(run.omega.size());
    for (std::size_t t = 0; t < w.size(); ++t) w[t] = std::abs(run.omega[t]);
    const double sw = io::save_pgm(out / "omega_abs.pgm", run.omega.rows(), run.omega.cols(), w);
    m["pgm"] = {{"u_abs.pgm", {{"quantity", "|u|"}, {"scale_max", su}}},
                {"u_phase.pgm", {{"quantity", "arg(u) + pi"}, {"scale_max", 2 * std::numbers::pi}}},
                {"omega_abs.pgm", {{"quantity", "|omega|"}, {"scale_max", sw}}}};
  }
  write_json_file(out / "manifest.json", m);
  std::cout << to_string(c.solver) << ": " << run.result.trace.size() << " iterations, R-factor "
            << m["r_factor"].get<double>() << " (" << to_string(run.result.reason) << ")\n";
  return kOk;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const std::string& recon, const std::string& data, const std::string& out) {
  const fs::path rdir = require_dir(recon, "recon");
  const fs::path ddir = require_dir(data, "data");
  const LoadedData d = load_dataset(ddir);
  if (!d.truth) throw DataError(ddir.string() + " holds no ground truth (omega_true.json, u_true.json)");
  const ComplexField omega = io::load_field(rdir / "omega.json");
  const ComplexField u = io::load_field(rdir / "u.json");
  if (!u.same_shape(d.truth->u) || !omega.same_shape(d.truth->omega))
    throw DataError("reconstruction and ground truth have different dimensions");
  const SnrResult su = snr_aligned(u, d.truth->u);
  const SnrResult sw = snr_aligned(omega, d.truth->omega);
  const json report{{"r_factor", r_factor(omega, u, d.f, d.lattice)},
                    {"snr_u_db", su.db},
                    {"snr_probe_db", sw.db},
                    {"alignment",
                     {{"zeta_re", su.alignment.zeta.real()},
                      {"zeta_im", su.alignment.zeta.imag()},
                      {"shift", {su.alignment.shift_row, su.alignment.shift_col}}}}};
  if (!out.empty()) write_json_file(out, report);
  std::cout << report.dump(2) << '\n';
  return kOk;
}

// ----------------------------------------------------------------- compare

int exit_code_for(const std::exception& e);

struct CompareEntry {
  std::string label;
  ExperimentConfig config;
};

CompareEntry compare_entry(const std::string& spec, const CommonFlags& flags) {
  json file = flags.config.empty() ? json::object() : read_config_file(flags.config);
  json over = flags.overrides();
  std::string label = spec;
  if (spec.size() > 5 && spec.ends_with(".json")) {
    for (const auto& [k, v] : read_config_file(spec).items()) file[k] = v;
    label = fs::path(spec).stem().string();
  } else if (spec == "admm") {
    over["solver"] = "admm";
    over["precond"] = "none";
  } else if (spec == "admm-prox") {
    over["solver"] = "admm";
    over["precond"] = "safeguarded";
  } else {
    over["solver"] = spec;
  }
  return {label, resolve_config(file, over)};
}

int cmd_compare(const CommonFlags& flags, const std::vector<std::string>& runs) {
  if (runs.empty()) throw ConfigError("compare needs --runs (e.g. admm,admm-prox,dr,palm)");
  std::vector<CompareEntry> entries;
  for (const auto& r : runs) entries.push_back(compare_entry(r, flags));
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (entries[i].label == entries[k].label) throw ConfigError("duplicate compare label '" + entries[i].label + "'");

  const ExperimentConfig& base = entries.front().config;
  const fs::path data = require_dir(base.data, "data");
  const fs::path out = require_dir(base.out, "out");
  const LoadedData d = load_dataset(data);

  int worst = kOk;
  json status = json::array();
  std::vector<std::vector<IterationRecord>> traces;
  for (const auto& e : entries) {
    try {
      traces.push_back(run_config(e.config, d).result.trace);
      status.push_back({{"label", e.label}, {"config", to_json(e.config)}, {"status", "ok"},
                        {"iterations", traces.back().size()}});
    } catch (const std::exception& ex) {
      const int code = exit_code_for(ex);
      worst = std::max(worst, code);
      traces.emplace_back();
      status.push_back({{"label", e.label}, {"config", to_json(e.config)}, {"status", "error"},
                        {"exit_code", code}, {"error", ex.what()}});
      std::cerr << "compare: run '" << e.label << "' failed: " << ex.what() << '\n';
    }
  }

  // One column group per run, in the order given.
  std::ostringstream csv;
  const char* fields[] = {"r_factor", "snr_u", "snr_probe", "aug_lagrangian", "i_u", "i_omega", "wall_ms"};
  csv << "iter";
  for (const auto& e : entries)
    for (const char* f : fields) csv << ',' << e.label << '.' << f;
  csv << '\n';
  std::size_t rows = 0;
  for (const auto& t : traces) rows = std::max(rows, t.size());
  const bool timing = !deterministic_mode();
  for (std::size_t r = 0; r < rows; ++r) {
    csv << r + 1;
    for (const auto& t : traces) {
      if (r >= t.size()) {
        csv << ",,,,,,,";
        continue;
      }
      std::ostringstream one;
      write_trace_csv(one, {t[r]}, timing);
      std::string line = one.str();
      line = line.substr(line.find('\n') + 1);  // drop header
      line.pop_back();                          // drop newline
      csv << line.substr(line.find(','));       // drop iter
    }
    csv << '\n';
  }
  fs::create_directories(out);
  {
    std::ofstream os(out / "compare.csv");
    os << csv.str();
  }
  write_json_file(out / "manifest.json", json{{"command", "compare"}, {"data", data.string()}, {"runs", status}});
  std::cout << "wrote " << (out / "compare.csv").string() << " (" << entries.size() << " runs)\n";
  return worst;
}

// ----------------------------------------------------------------- lattice

int cmd_lattice(const CommonFlags& flags) {
  const ExperimentConfig c = flags.resolve();
  const ScanLattice lat = make_lattice(c.lattice, c.image_side, c.frame_side, c.dist, c.lattice_seed.value_or(c.seed));
  if (c.out.empty()) std::cout << io::lattice_to_json(lat).dump(2) << '\n';
  else io::save_lattice(c.out, lat);
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const OverlapViolation*>(&e)) return kOverlap;
  if (dynamic_cast<const DivergenceError*>(&e)) return kDivergence;
  if (dynamic_cast<const DataError*>(&e)) return kData;
  if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kData;
  return kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind ptychographic phase retrieval: simulation, reconstruction, evaluation"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 1 other, 2 config, 3 data, 4 divergence, 5 overlap violation.\n"
      "Precedence: defaults < preset < --config file < flags.\n"
      "PTYCHO_THREADS: worker cap, 0 or unset = serial deterministic mode.");
  bool list_presets = false;
  app.add_flag("--list-presets", list_presets, "print preset names and exit");

  CommonFlags sim_flags, rec_flags, cmp_flags, lat_flags;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim_flags.attach(sim, false);
  auto* rec = app.add_subcommand("reconstruct", "run one solver on a dataset");
  rec_flags.attach(rec, true);
  auto* cmp = app.add_subcommand("compare", "run several solvers on one dataset, merged CSV");
  cmp_flags.attach(cmp, true);
  std::vector<std::string> runs;
  cmp->add_option("--runs", runs, "admm|admm-prox|admm2|epie|dr|palm or a config .json, comma separated")
      ->delimiter(',');
  auto* lat = app.add_subcommand("lattice", "print or write a scan lattice");
  lat_flags.attach(lat, false);

  auto* ev = app.add_subcommand("evaluate", "score a reconstruction against ground truth");
  std::string ev_recon, ev_data, ev_out;
  ev->add_option("--recon", ev_recon, "reconstruction directory")->required();
  ev->add_option("--data", ev_data, "dataset directory with ground truth")->required();
  ev->add_option("--out", ev_out, "write the JSON report here as well");

  if (argc == 2 && std::string(argv[1]) == "--list-presets") {
    for (const auto& p : preset_names()) std::cout << p << '\n';
    return kOk;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) return cmd_simulate(sim_flags);
    if (*rec) return cmd_reconstruct(rec_flags);
    if (*ev) return cmd_evaluate(ev_recon, ev_data, ev_out);
    if (*cmp) return cmd_compare(cmp_flags, runs);
    if (*lat) return cmd_lattice(lat_flags);
  } catch (const std::exception& e) {
    std::cerr << "ptycho: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kOther;
}
