#include "gcfem/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "gcfem/errors.hpp"
#include "gcfem/io.hpp"

namespace gcfem {

void ManufacturedCase::validate() const {
  if (!(C > 0.0)) throw ParameterError("C must be positive");
  if (!(r > 0.0)) throw ParameterError("r must be positive");
}

ExactFields exact_solution(const ManufacturedCase& mc) {
  mc.validate();
  const double C = mc.C;
  const double r = mc.r;
  ExactFields ex;
  ex.z = [C](const Vec2& x) -> Vec2 { return -0.5 * C * x; };
  if (mc.inactive()) {
    ex.u = [C, r](const Vec2& x) { return 0.25 * C * (r * r - x.squaredNorm()); };
    ex.grad_u = [C](const Vec2& x) -> Vec2 { return -0.5 * C * x; };
    ex.in_active_set = [](const Vec2&) { return false; };
    return ex;
  }
  const double rho = 2.0 / C;
  auto u = [C, r, rho](const Vec2& x) {
    const double d = x.norm();
    if (d >= rho) return r - d;
    return -0.25 * C * d * d + r - 1.0 / C;
  };
  const double jump = std::abs((r - rho) - (-0.25 * C * rho * rho + r - 1.0 / C));
  if (jump > 1e-14 * (1.0 + r)) throw ParameterError("exact solution branches do not match at |x| = 2/C");
  ex.u = u;
  ex.grad_u = [C, rho](const Vec2& x) -> Vec2 {
    const double d = x.norm();
    if (d >= rho) return -x / d;
    return -0.5 * C * x;
  };
  ex.in_active_set = [rho](const Vec2& x) { return x.norm() >= rho; };
  return ex;
}

ProblemData manufactured_problem(const ManufacturedCase& mc, int level) {
  const ExactFields ex = exact_solution(mc);
  const double C = mc.C;
  Discretization disc(build_disk_mesh(mc.r, level));
  return project_data([C](const Vec2&) { return C; }, [](const Vec2&) { return 0.0; }, ex.u,
                      [](const Vec2&) { return 1.0; }, disc);
}

void StudyConfig::validate() const {
  mc.validate();
  flow.validate();
  if (levels.empty()) throw ParameterError("at least one level is required");
  for (size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] < 0 || levels[i] > 6) throw ParameterError("levels must lie in 0..6");
    if (i > 0 && levels[i] <= levels[i - 1]) throw ParameterError("levels must be strictly increasing");
  }
  if (jobs < 1) throw ParameterError("jobs must be positive");
}

namespace {

int line_of(const std::string& text, size_t byte) {
  int line = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace

StudyConfig parse_study_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_of(text, e.byte));
  }
  StudyConfig cfg;
  try {
    if (!j.is_object()) throw ParseError("config must be a JSON object", 1);
    if (j.contains("case")) {
      const auto& c = j.at("case");
      if (c.contains("C")) cfg.mc.C = c.at("C").get<double>();
      if (c.contains("r")) cfg.mc.r = c.at("r").get<double>();
    }
    if (j.contains("levels")) cfg.levels = j.at("levels").get<std::vector<int>>();
    if (j.contains("flow")) {
      const auto& f = j.at("flow");
      if (f.contains("tau")) cfg.flow.tau = f.at("tau").get<double>();
      if (f.contains("eps_stop")) cfg.flow.eps_stop = f.at("eps_stop").get<double>();
      if (f.contains("max_iter")) cfg.flow.max_iter = f.at("max_iter").get<int>();
    }
    if (j.contains("study")) {
      const std::string kind = j.at("study").get<std::string>();
      if (kind == "apriori")
        cfg.study = StudyKind::Apriori;
      else if (kind == "aposteriori")
        cfg.study = StudyKind::Aposteriori;
      else
        throw ParseError("study must be \"apriori\" or \"aposteriori\"", 1);
    }
    if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
    if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad config value: ") + e.what(), 1);
  }
  return cfg;
}

StudyConfig load_study_config(const std::filesystem::path& path) { return parse_study_config(read_file(path)); }

LevelSolution solve_level(const ManufacturedCase& mc, int level, const FlowParams& flow) {
  LevelSolution sol{level, manufactured_problem(mc, level), {}, {}};
  try {
    sol.flow = run_flow(sol.data, flow);
  } catch (const NonConvergenceError& e) {
    throw NonConvergenceError("level " + std::to_string(level) + ": " + e.what(), e.report());
  }
  sol.primal = marini_reconstruct(sol.flow.z, sol.flow.lambda, sol.data);
  return sol;
}

namespace {

ConvergenceRow base_row(const LevelSolution& sol) {
  ConvergenceRow row;
  row.level = sol.level;
  row.h = sol.data.disc.mesh_size();
  row.N = static_cast<long long>(sol.data.disc.num_sides()) + sol.data.disc.num_triangles();
  row.iterations = sol.flow.iterations;
  row.residual_norm = sol.flow.residual_norm;
  row.conformity_defect = sol.primal.conformity_defect;
  return row;
}

double relative_gap(double e_tot, double e_gap) {
  const double diff = std::abs(e_tot - e_gap);
  return e_gap > 0.0 ? diff / e_gap : diff;
}

}  // namespace

ConvergenceRow apriori_row(const LevelSolution& sol, const ManufacturedCase& mc) {
  const ExactFields ex = exact_solution(mc);
  const Discretization& disc = sol.data.disc;
  const CRFunction v = cr_interpolate(ex.u, disc);
  const RTFunction y = rt_interpolate(ex.z, disc);
  ConvergenceRow row = base_row(sol);
  row.e_gap = discrete_gap_estimator(v, y, sol.data).total;
  const ConvexityMeasures m = discrete_convexity_measures(v, y, sol.primal.u, sol.flow.z, sol.data);
  row.e_tot = m.rho_primal_sq + m.rho_dual_sq;
  row.identity_gap = relative_gap(row.e_tot, row.e_gap);
  return row;
}

ConvergenceRow aposteriori_row(const LevelSolution& sol, const ManufacturedCase& mc) {
  const ExactFields ex = exact_solution(mc);
  const PostProcessed post = conforming_postprocess(sol.primal.u, sol.data, ex.u);
  ConvergenceRow row = base_row(sol);
  row.e_gap = continuous_gap_estimator(post.v, sol.flow.z, sol.data).total;
  row.e_tot = continuous_total_error(post.v, sol.flow.z, sol.data, ex).total();
  row.identity_gap = relative_gap(row.e_tot, row.e_gap);
  row.scaling = post.scaling;
  row.boundary_defect = post.boundary_defect;
  return row;
}

ConvergenceTable make_table(std::vector<ConvergenceRow> rows) {
  ConvergenceTable table{std::move(rows)};
  for (size_t i = 1; i < table.rows.size(); ++i) {
    ConvergenceRow& cur = table.rows[i];
    const ConvergenceRow& prev = table.rows[i - 1];
    const double dh = std::log(cur.h) - std::log(prev.h);
    if (cur.e_tot > 0.0 && prev.e_tot > 0.0) cur.eoc_tot = (std::log(cur.e_tot) - std::log(prev.e_tot)) / dh;
    if (cur.e_gap > 0.0 && prev.e_gap > 0.0) cur.eoc_gap = (std::log(cur.e_gap) - std::log(prev.e_gap)) / dh;
  }
  return table;
}

std::string ConvergenceTable::to_csv() const {
  std::ostringstream out;
  out << "level,h,N,e_tot,e_gap,eoc_tot,eoc_gap,identity_gap\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.10e", x);
    return std::string(buf);
  };
  for (const auto& row : rows) {
    out << row.level << ',' << num(row.h) << ',' << row.N << ',' << num(row.e_tot) << ',' << num(row.e_gap) << ','
        << (row.eoc_tot ? num(*row.eoc_tot) : "") << ',' << (row.eoc_gap ? num(*row.eoc_gap) : "") << ','
        << num(row.identity_gap) << '\n';
  }
  return out.str();
}

namespace {

double mean_last(const std::vector<ConvergenceRow>& rows, int count, bool gap) {
  std::vector<double> values;
  for (const auto& row : rows) {
    const auto& e = gap ? row.eoc_gap : row.eoc_tot;
    if (e) values.push_back(*e);
  }
  if (count <= 0 || static_cast<int>(values.size()) < count)
    throw ParameterError("not enough EOC values for the requested mean");
  double sum = 0.0;
  for (size_t i = values.size() - count; i < values.size(); ++i) sum += values[i];
  return sum / count;
}

template <class RowFn>
ConvergenceTable run_levels(const StudyConfig& config, RowFn&& row_fn) {
  config.validate();
  const int n = static_cast<int>(config.levels.size());
  std::vector<ConvergenceRow> rows(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        const LevelSolution sol = solve_level(config.mc, config.levels[i], config.flow);
        rows[i] = row_fn(sol, config.mc);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::min(config.jobs, n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return make_table(std::move(rows));
}

}  // namespace

double ConvergenceTable::mean_eoc_gap(int count) const { return mean_last(rows, count, true); }
double ConvergenceTable::mean_eoc_tot(int count) const { return mean_last(rows, count, false); }

ConvergenceTable run_apriori_study(const StudyConfig& config) {
  return run_levels(config, [](const LevelSolution& s, const ManufacturedCase& mc) { return apriori_row(s, mc); });
}

ConvergenceTable run_aposteriori_study(const StudyConfig& config) {
  return run_levels(config,
                    [](const LevelSolution& s, const ManufacturedCase& mc) { return aposteriori_row(s, mc); });
}

ConvergenceTable run_study(const StudyConfig& config) {
  return config.study == StudyKind::Apriori ? run_apriori_study(config) : run_aposteriori_study(config);
}

ActiveSetReport active_set_report(const CRFunction& u_cr, const RTFunction& z_rt, const ProblemData& data,
                                  double tol) {
  const Discretization& disc = data.disc;
  ActiveSetReport rep;
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const double zeta = data.zeta.values[t];
    const bool primal = cr_gradient(u_cr, disc, t).norm() >= zeta * (1.0 - tol);
    const bool dual = rt_element_mean(z_rt, disc, t).norm() >= zeta * (1.0 - tol);
    rep.n_active_primal += primal;
    rep.n_active_dual += dual;
    rep.n_disagree += primal != dual;
  }
  return rep;
}

}  // namespace gcfem
