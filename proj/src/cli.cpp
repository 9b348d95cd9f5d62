#include "gcfem/cli.hpp"

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gcfem/errors.hpp"
#include "gcfem/experiments.hpp"
#include "gcfem/io.hpp"

namespace gcfem {

namespace {

std::vector<int> parse_levels(const std::string& text) {
  std::vector<int> levels;
  auto to_int = [&](const std::string& s) {
    size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ParameterError("bad --levels value '" + text + "'");
    return value;
  };
  const size_t colon = text.find(':');
  if (colon != std::string::npos) {
    const int a = to_int(text.substr(0, colon));
    const int b = to_int(text.substr(colon + 1));
    if (b < a) throw ParameterError("--levels a:b needs a <= b");
    for (int l = a; l <= b; ++l) levels.push_back(l);
    return levels;
  }
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) levels.push_back(to_int(item));
  if (levels.empty()) throw ParameterError("--levels is empty");
  return levels;
}

struct MeshOptions {
  int level = 2;
  double radius = 1.0;
  std::string out;
};

struct SolveOptions {
  std::string mesh;
  int disk_level = 2;
  double C = 10.0;
  double r = 1.0;
  FlowParams flow;
  std::string out;
  std::string dump_fields;
  std::string dump_indicators;
  std::string config;
  bool verbose = false;
};

struct StudyOptions {
  StudyConfig cfg;
  std::string levels = "1:5";
  std::string config;
  bool verbose = false;
};

void write_or_print(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty())
    out << content;
  else
    write_file_atomic(path, content);
}

int run_mesh(const MeshOptions& o, std::ostream& out) {
  const Mesh mesh = build_disk_mesh(o.radius, o.level);
  save_mesh(mesh, o.out);
  const Discretization disc(mesh);
  char buf[160];
  std::snprintf(buf, sizeof buf, "vertices %d triangles %d sides %d h %.6e min_angle %.4f\n", mesh.num_vertices(),
                mesh.num_triangles(), mesh.num_sides(), disc.mesh_size(), min_angle_degrees(mesh));
  out << buf;
  return kExitOk;
}

nlohmann::json report_json(const FlowReport& rep, const ProblemData& data, const Reconstruction* primal) {
  nlohmann::json j;
  j["iterations"] = rep.iterations;
  j["residual_norm"] = rep.residual_norm;
  j["converged"] = rep.converged;
  j["tau"] = rep.tau;
  j["dual_energy"] = {{"final", rep.dual_energy_history.empty() ? 0.0 : rep.dual_energy_history.back()},
                      {"history", rep.dual_energy_history}};
  j["max_divergence_defect"] = rep.max_divergence_defect;
  j["mesh"] = {{"vertices", data.disc.num_vertices()},
               {"triangles", data.disc.num_triangles()},
               {"sides", data.disc.num_sides()},
               {"h", data.disc.mesh_size()}};
  j["primal_energy"] = nullptr;
  j["duality_gap"] = nullptr;
  if (primal) {
    // the reconstruction satisfies the constraints only up to the solver tolerance
    const EnergyValue I = primal_energy_h(primal->u, data, PrimalTolerance{1e-6, 1e-6});
    const EnergyValue D = dual_energy_h(rep.z, data);
    j["conformity_defect"] = primal->conformity_defect;
    if (I.feasible) j["primal_energy"] = I.value;
    else j["primal_violation"] = to_string(I.violation);
    if (I.feasible && D.feasible) j["duality_gap"] = I.value - D.value;
  }
  return j;
}

int run_solve(const SolveOptions& o, std::ostream& out, std::ostream& err) {
  ManufacturedCase mc{o.C, o.r};
  mc.validate();
  o.flow.validate();
  const ExactFields ex = exact_solution(mc);
  ProblemData data = [&] {
    if (!o.mesh.empty()) {
      Discretization disc(load_mesh(o.mesh));
      const double C = mc.C;
      return project_data([C](const Vec2&) { return C; }, [](const Vec2&) { return 0.0; }, ex.u,
                          [](const Vec2&) { return 1.0; }, disc);
    }
    if (o.disk_level < 0 || o.disk_level > 6) throw ParameterError("--disk-level must lie in 0..6");
    return manufactured_problem(mc, o.disk_level);
  }();
  FlowParams flow = o.flow;
  flow.log = o.verbose ? &err : nullptr;

  FlowReport rep;
  bool converged = true;
  std::string failure;
  try {
    rep = run_flow(data, flow);
  } catch (const NonConvergenceError& e) {
    rep = e.report();
    converged = false;
    failure = e.what();
  }
  Reconstruction primal = marini_reconstruct(rep.z, rep.lambda, data);
  const nlohmann::json j = report_json(rep, data, &primal);
  write_or_print(o.out, j.dump(2) + "\n", out);

  if (!o.dump_fields.empty()) {
    const P0VectorField means = rt_element_mean(rep.z, data.disc);
    write_file_atomic(o.dump_fields, format_field_dump({&primal.u, &rep.z, &rep.lambda, &means}));
  }
  if (!o.dump_indicators.empty()) {
    const GapBreakdown gap = discrete_gap_estimator(primal.u, rep.z, data);
    write_file_atomic(o.dump_indicators, format_indicators(gap.per_element));
  }
  if (!converged) {
    err << "error: " << failure << "\n";
    return kExitNonConvergence;
  }
  if (!o.out.empty()) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "iterations %d residual %.3e\n", rep.iterations, rep.residual_norm);
    out << buf;
  }
  return kExitOk;
}

int run_study_command(StudyOptions o, StudyKind kind, std::ostream& out, std::ostream& err) {
  o.cfg.study = kind;
  if (o.verbose && o.cfg.jobs == 1) o.cfg.flow.log = &err;
  const ConvergenceTable table = run_study(o.cfg);
  write_or_print(o.cfg.out, table.to_csv(), out);
  return kExitOk;
}

void add_flow_options(CLI::App* app, FlowParams& flow) {
  app->add_option("--tau", flow.tau, "time step of the gradient flow")->check(CLI::PositiveNumber);
  app->add_option("--eps-stop", flow.eps_stop, "stopping tolerance on the residual norm")
      ->check(CLI::PositiveNumber);
  app->add_option("--max-iter", flow.max_iter, "maximal number of flow steps")->check(CLI::PositiveNumber);
}

// Config values fill in every option not given on the command line.
void merge_solve_config(SolveOptions& o, CLI::App* app) {
  if (o.config.empty()) return;
  const StudyConfig cfg = load_study_config(o.config);
  const nlohmann::json j = nlohmann::json::parse(read_file(o.config));
  auto unset = [&](const char* name) { return app->get_option(name)->count() == 0; };
  if (j.contains("case")) {
    if (j["case"].contains("C") && unset("--C")) o.C = cfg.mc.C;
    if (j["case"].contains("r") && unset("--r")) o.r = cfg.mc.r;
  }
  if (j.contains("flow")) {
    if (j["flow"].contains("tau") && unset("--tau")) o.flow.tau = cfg.flow.tau;
    if (j["flow"].contains("eps_stop") && unset("--eps-stop")) o.flow.eps_stop = cfg.flow.eps_stop;
    if (j["flow"].contains("max_iter") && unset("--max-iter")) o.flow.max_iter = cfg.flow.max_iter;
  }
  if (j.contains("out") && unset("--out")) o.out = cfg.out;
}

void merge_study_config(StudyOptions& o, CLI::App* app) {
  StudyConfig merged;
  if (!o.config.empty()) merged = load_study_config(o.config);
  auto given = [&](const char* name) { return app->get_option(name)->count() > 0; };
  if (given("--C")) merged.mc.C = o.cfg.mc.C;
  if (given("--r")) merged.mc.r = o.cfg.mc.r;
  if (given("--tau")) merged.flow.tau = o.cfg.flow.tau;
  if (given("--eps-stop")) merged.flow.eps_stop = o.cfg.flow.eps_stop;
  if (given("--max-iter")) merged.flow.max_iter = o.cfg.flow.max_iter;
  if (given("--out")) merged.out = o.cfg.out;
  if (given("--jobs")) merged.jobs = o.cfg.jobs;
  if (given("--levels")) merged.levels = parse_levels(o.levels);
  merged.validate();
  o.cfg = merged;
}

void add_study_options(CLI::App* app, StudyOptions& o) {
  app->add_option("--C", o.cfg.mc.C, "load constant f = C")->check(CLI::PositiveNumber);
  app->add_option("--r", o.cfg.mc.r, "disk radius")->check(CLI::PositiveNumber);
  app->add_option("--levels", o.levels, "mesh levels, a:b or a comma list (0..6)");
  add_flow_options(app, o.cfg.flow);
  app->add_option("--out", o.cfg.out, "CSV output path (stdout if empty)");
  app->add_option("--jobs", o.cfg.jobs, "levels solved in parallel")->check(CLI::PositiveNumber);
  app->add_option("--config", o.config, "JSON config; command-line flags take precedence");
  app->add_flag("--verbose", o.verbose, "log the residual of every flow step (with --jobs 1)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gradient-constrained problems by the dual gradient flow", "gcfem"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  MeshOptions mesh_opts;
  CLI::App* mesh = app.add_subcommand("mesh", "write a disk mesh");
  mesh->add_option("--level", mesh_opts.level, "refinement level (0..8)")->check(CLI::Range(0, 8));
  mesh->add_option("--radius", mesh_opts.radius, "disk radius")->check(CLI::PositiveNumber);
  mesh->add_option("--out", mesh_opts.out, "mesh file path")->required();

  SolveOptions solve_opts;
  CLI::App* solve = app.add_subcommand("solve", "solve the model problem on one mesh");
  auto* mesh_path = solve->add_option("--mesh", solve_opts.mesh, "mesh file (all boundary data from the disk case)");
  auto* disk_level = solve->add_option("--disk-level", solve_opts.disk_level, "disk mesh level (0..6)")
                         ->check(CLI::Range(0, 6));
  mesh_path->excludes(disk_level);
  solve->add_option("--C", solve_opts.C, "load constant f = C")->check(CLI::PositiveNumber);
  solve->add_option("--r", solve_opts.r, "disk radius")->check(CLI::PositiveNumber);
  add_flow_options(solve, solve_opts.flow);
  solve->add_option("--out", solve_opts.out, "JSON report path (stdout if empty)");
  solve->add_option("--dump-fields", solve_opts.dump_fields, "CSV dump of u_cr, z, lambda, Pi z");
  solve->add_option("--dump-indicators", solve_opts.dump_indicators, "CSV of per-element gap contributions");
  solve->add_option("--config", solve_opts.config, "JSON config; command-line flags take precedence");
  solve->add_flag("--verbose", solve_opts.verbose, "log the residual of every flow step");

  StudyOptions apriori_opts;
  CLI::App* apriori = app.add_subcommand("apriori", "a priori convergence study");
  add_study_options(apriori, apriori_opts);
  StudyOptions apost_opts;
  CLI::App* apost = app.add_subcommand("aposteriori", "a posteriori convergence study");
  add_study_options(apost, apost_opts);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (mesh->parsed()) return run_mesh(mesh_opts, out);
    if (solve->parsed()) {
      merge_solve_config(solve_opts, solve);
      return run_solve(solve_opts, out, err);
    }
    if (apriori->parsed()) {
      merge_study_config(apriori_opts, apriori);
      return run_study_command(apriori_opts, StudyKind::Apriori, out, err);
    }
    merge_study_config(apost_opts, apost);
    return run_study_command(apost_opts, StudyKind::Aposteriori, out, err);
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  } catch (const NonConvergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNonConvergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNonConvergence;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace gcfem
