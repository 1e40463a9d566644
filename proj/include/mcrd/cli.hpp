#pragma once

#include "mcrd/report.hpp"
#include "mcrd/solve.hpp"
#include "mcrd/spectrum.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mcrd::cli {

inline constexpr int kSchemaVersion = 1;

using report::Json;

struct RunConfig {
  std::string reaction_kind = "cubic_linear";
  double gamma = 0.0, delta = 0.0;
  std::vector<PolyTerm> terms;
  double M = 0.0, D = 1.0;
  int N = 1, k = 2;
  std::vector<double> eps_list{0.04, 0.02, 0.01};
  bool mirrored = false;
  GridOptions grid;
  std::optional<double> wave_Z;
  int wave_nz = 4096;
  NewtonOptions newton;
  std::uint64_t seed = 1;
  bool plots = true;

  BistableReaction reaction() const {
    if (reaction_kind == "mori") return BistableReaction::mori(gamma, delta);
    if (reaction_kind == "polynomial") return BistableReaction::polynomial(terms);
    return BistableReaction::cubic_linear();
  }
};

namespace detail {

[[noreturn]] inline void invalid(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n"), b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline double to_double(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(t, &pos);
  } catch (const std::exception&) {
    invalid("key '" + key + "': not a number: '" + t + "'");
  }
  if (pos != t.size() || !std::isfinite(x)) invalid("key '" + key + "': not a finite number: '" + t + "'");
  return x;
}

inline int to_int(const std::string& key, const std::string& s) {
  const double x = to_double(key, s);
  if (x != std::floor(x) || std::abs(x) > 1e9) invalid("key '" + key + "': not an integer: '" + trim(s) + "'");
  return static_cast<int>(x);
}

inline bool to_bool(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  invalid("key '" + key + "': not a boolean: '" + t + "'");
}

inline std::vector<std::string> split(const std::string& s, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (seps.find(ch) != std::string::npos) {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

inline std::vector<double> to_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split(s, ", \t")) out.push_back(to_double(key, t));
  return out;
}

// "p q c; p q c; ..." monomials c u^p v^q.
inline std::vector<PolyTerm> to_terms(const std::string& key, const std::string& s) {
  std::vector<PolyTerm> out;
  for (const auto& t : split(s, ";")) {
    const auto f = split(t, " \t,");
    if (f.size() != 3) invalid("key '" + key + "': each term needs 'p q c', got '" + t + "'");
    const int p = to_int(key, f[0]), q = to_int(key, f[1]);
    if (p < 0 || q < 0) invalid("key '" + key + "': negative exponent in '" + t + "'");
    out.push_back({p, q, to_double(key, f[2])});
  }
  if (out.empty()) invalid("key '" + key + "' is empty");
  return out;
}

// Sections and dotted keys both map to "section.key".
inline std::map<std::string, std::string> flatten(const boost::property_tree::ptree& pt) {
  std::map<std::string, std::string> flat;
  for (const auto& [key, node] : pt) {
    if (node.empty()) {
      flat[key] = node.data();
    } else {
      for (const auto& [sub, leaf] : node) {
        if (!leaf.empty()) invalid("nested section '" + key + "." + sub + "'");
        flat[key + "." + sub] = leaf.data();
      }
    }
  }
  return flat;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    detail::invalid(std::string("config syntax: ") + e.what());
  }
  RunConfig c;
  using namespace detail;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters{
      {"reaction.kind", [&](auto& k, auto& v) {
         c.reaction_kind = trim(v);
         if (c.reaction_kind != "cubic_linear" && c.reaction_kind != "mori" && c.reaction_kind != "polynomial")
           invalid("key '" + k + "': unknown reaction kind '" + c.reaction_kind + "'");
       }},
      {"reaction.gamma", [&](auto& k, auto& v) { c.gamma = to_double(k, v); }},
      {"reaction.delta", [&](auto& k, auto& v) { c.delta = to_double(k, v); }},
      {"reaction.terms", [&](auto& k, auto& v) { c.terms = to_terms(k, v); }},
      {"problem.M", [&](auto& k, auto& v) { c.M = to_double(k, v); }},
      {"problem.D", [&](auto& k, auto& v) { c.D = to_double(k, v); }},
      {"problem.N", [&](auto& k, auto& v) { c.N = to_int(k, v); }},
      {"problem.k", [&](auto& k, auto& v) { c.k = to_int(k, v); }},
      {"problem.eps", [&](auto& k, auto& v) { c.eps_list = to_list(k, v); }},
      {"problem.mirrored", [&](auto& k, auto& v) { c.mirrored = to_bool(k, v); }},
      {"grid.nodes_per_eps", [&](auto& k, auto& v) { c.grid.nodes_per_eps = to_double(k, v); }},
      {"grid.coarse_spacing", [&](auto& k, auto& v) { c.grid.coarse_spacing = to_double(k, v); }},
      {"grid.growth", [&](auto& k, auto& v) { c.grid.growth = to_double(k, v); }},
      {"grid.fine_cap_fraction", [&](auto& k, auto& v) { c.grid.fine_cap_fraction = to_double(k, v); }},
      {"wave.Z", [&](auto& k, auto& v) { c.wave_Z = to_double(k, v); }},
      {"wave.n_z", [&](auto& k, auto& v) { c.wave_nz = to_int(k, v); }},
      {"solve.tol", [&](auto& k, auto& v) { c.newton.tol = to_double(k, v); }},
      {"solve.max_iter", [&](auto& k, auto& v) { c.newton.max_iter = to_int(k, v); }},
      {"solve.continuation", [&](auto& k, auto& v) { c.newton.continuation = to_bool(k, v); }},
      {"output.plots", [&](auto& k, auto& v) { c.plots = to_bool(k, v); }},
      {"seed", [&](auto& k, auto& v) {
         const int s = to_int(k, v);
         if (s < 0) invalid("key 'seed' must be >= 0");
         c.seed = static_cast<std::uint64_t>(s);
       }},
  };
  std::set<std::string> seen;
  for (const auto& [key, value] : flatten(pt)) {
    const auto it = setters.find(key);
    if (it == setters.end()) invalid("unknown key '" + key + "'");
    it->second(key, value);
    seen.insert(key);
  }
  if (c.reaction_kind == "mori") {
    for (const char* key : {"reaction.gamma", "reaction.delta"})
      if (!seen.count(key)) invalid(std::string("missing key '") + key + "' for reaction kind 'mori'");
  }
  if (c.reaction_kind == "polynomial" && !seen.count("reaction.terms"))
    invalid("missing key 'reaction.terms' for reaction kind 'polynomial'");
  return c;
}

inline void validate(const RunConfig& c) {
  using detail::invalid;
  if (!(c.D > 0)) invalid("problem.D must be > 0");
  if (c.N < 1 || c.N > 3) invalid("problem.N must be 1, 2 or 3");
  if (c.k < 0) invalid("problem.k must be >= 0");
  if (c.eps_list.empty()) invalid("problem.eps is empty");
  for (std::size_t i = 0; i < c.eps_list.size(); ++i) {
    if (!(c.eps_list[i] > 0)) invalid("problem.eps values must be > 0");
    if (i && !(c.eps_list[i] < c.eps_list[i - 1])) invalid("problem.eps must be strictly descending");
  }
  if (c.grid.nodes_per_eps < 24) invalid("grid.nodes_per_eps must be >= 24");
  if (!(c.grid.coarse_spacing > 0) || !(c.grid.growth > 1) || !(c.grid.fine_cap_fraction > 0))
    invalid("grid.coarse_spacing, grid.growth - 1 and grid.fine_cap_fraction must be > 0");
  if (c.wave_nz < 1024) invalid("wave.n_z must be >= 1024");
  if (c.wave_Z && !(*c.wave_Z > 0)) invalid("wave.Z must be > 0");
  if (!(c.newton.tol > 0) || c.newton.max_iter < 1) invalid("solve.tol must be > 0 and solve.max_iter >= 1");
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) detail::invalid("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Lazily computed stages shared by the commands of one run.
class Pipeline {
 public:
  explicit Pipeline(RunConfig c) : cfg_(std::move(c)) {}

  const RunConfig& config() const { return cfg_; }

  const EquilibriumStructure& equilibrium() {
    if (!eq_) {
      eq_ = find_vstar(cfg_.reaction());
      const double lo = eq_->v_star + eq_->h.h_minus, hi = eq_->v_star + eq_->h.h_plus;
      if (!(cfg_.M > lo && cfg_.M < hi))
        throw Error(ErrorCode::MassOutOfRange,
                    "problem.M = " + sci(cfg_.M) + " outside (" + sci(lo) + ", " + sci(hi) + ")");
    }
    return *eq_;
  }

  const WaveProfile& wave() {
    if (!wave_) {
      WaveOptions o;
      o.Z = cfg_.wave_Z;
      o.n_z = cfg_.wave_nz;
      wave_ = solve_profile(equilibrium(), equilibrium().v_star, o);
    }
    return *wave_;
  }

  const ExpansionData& expansion(int k) {
    auto it = exp_.find(k);
    if (it == exp_.end()) {
      ExpansionOptions o;
      o.mirrored = cfg_.mirrored;
      it = exp_.emplace(k, build_expansion(equilibrium(), wave(), cfg_.M, cfg_.D, cfg_.N, k, o)).first;
    }
    return it->second;
  }

  AssembleOptions assemble_options() const { return {cfg_.grid}; }

 private:
  RunConfig cfg_;
  std::optional<EquilibriumStructure> eq_;
  std::optional<WaveProfile> wave_;
  std::map<int, ExpansionData> exp_;
};

using Files = std::map<std::string, std::string>;

namespace detail {

inline Json vec(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

inline std::string indexed(const std::string& stem, std::size_t i, const std::string& ext) {
  char b[16];
  std::snprintf(b, sizeof b, "%02zu", i);
  return stem + "_" + b + "." + ext;
}

inline std::string eps_name(double eps) {
  char b[32];
  std::snprintf(b, sizeof b, "eps=%.4g", eps);
  return b;
}

// Evaluates fn(eps) for every eps concurrently; results in list order.
template <class Fn>
auto fan_out(const std::vector<double>& eps_list, Fn fn) {
  using R = decltype(fn(0.0));
  std::vector<std::future<R>> jobs;
  for (double e : eps_list) jobs.push_back(std::async(std::launch::async, fn, e));
  std::vector<R> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

inline std::optional<double> slope_if_sweep(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2) return std::nullopt;
  for (double v : y)
    if (!(std::abs(v) > 0)) return std::nullopt;
  return loglog_slope(x, y);
}

inline Json opt(const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); }

}  // namespace detail

inline Json config_json(const RunConfig& c) {
  Json j;
  j["reaction"]["kind"] = c.reaction_kind;
  if (c.reaction_kind == "mori") {
    j["reaction"]["gamma"] = c.gamma;
    j["reaction"]["delta"] = c.delta;
  }
  if (c.reaction_kind == "polynomial") {
    Json t = Json::array();
    for (const auto& p : c.terms) t.push_back(Json::array({p.p, p.q, p.c}));
    j["reaction"]["terms"] = t;
  }
  j["M"] = c.M;
  j["D"] = c.D;
  j["N"] = c.N;
  j["k"] = c.k;
  j["eps"] = detail::vec(c.eps_list);
  j["mirrored"] = c.mirrored;
  j["grid"] = {{"nodes_per_eps", c.grid.nodes_per_eps},
               {"coarse_spacing", c.grid.coarse_spacing},
               {"growth", c.grid.growth},
               {"fine_cap_fraction", c.grid.fine_cap_fraction}};
  j["wave"] = {{"Z", detail::opt(c.wave_Z)}, {"n_z", c.wave_nz}};
  j["solve"] = {{"tol", c.newton.tol}, {"max_iter", c.newton.max_iter}, {"continuation", c.newton.continuation}};
  j["seed"] = c.seed;
  return j;
}

inline Json cmd_analyze(Pipeline& p, Files&) {
  const auto& eq = p.equilibrium();
  const auto a = check_assumptions(eq);
  Json j;
  j["v_star"] = eq.v_star;
  j["J_star"] = eq.J_star;
  j["J_prime"] = eq.J_prime_star;
  j["window"] = Json::array({eq.v_lo, eq.v_hi});
  Json other = Json::array();
  for (const auto& [lo, hi] : eq.other_windows) other.push_back(Json::array({lo, hi}));
  j["other_windows"] = other;
  j["h_minus"] = eq.h.h_minus;
  j["h_zero"] = eq.h.h_zero;
  j["h_plus"] = eq.h.h_plus;
  j["partials"] = {{"fu_plus", eq.fu_hp}, {"fu_minus", eq.fu_hm}, {"fv_plus", eq.fv_hp}, {"fv_minus", eq.fv_hm}};
  j["assumptions"] = {{"bistable", a.bistable},
                      {"transversal", a.transversal},
                      {"balanced", a.balanced},
                      {"max_fu_stable", a.max_fu_stable},
                      {"min_fu_middle", a.min_fu_middle},
                      {"max_transversality_margin", a.max_transversality_margin}};
  j["mass_interval"] = Json::array({eq.v_star + eq.h.h_minus, eq.v_star + eq.h.h_plus});
  const auto& c = p.config();
  j["R_star"] = interface_radius(eq, c.M, c.N, c.mirrored);
  j["derivative_self_test"] = {{"seed", c.seed},
                               {"max_rel_mismatch", derivative_self_test(eq.reaction, static_cast<unsigned>(c.seed))}};
  return j;
}

inline Json cmd_wave(Pipeline& p, Files& files) {
  const auto& eq = p.equilibrium();
  const auto& w = p.wave();
  Json j;
  j["s"] = w.s;
  j["Z"] = w.Z;
  j["n_z"] = w.n;
  j["c"] = w.c;
  j["m"] = w.m;
  j["kappa_minus"] = w.kappa_minus;
  j["kappa_plus"] = w.kappa_plus;
  j["d0"] = w.d0;
  j["iterations"] = w.iterations;
  j["newton_residual"] = w.newton_residual;
  j["ode_residual"] = w.ode_residual;
  j["tail_deviation"] = w.tail_deviation;
  j["speed_identity"] = std::abs(w.c + balance_integral(eq.reaction, w.s) / w.m);
  if (p.config().reaction_kind == "cubic_linear")
    j["tanh_error"] = (w.Q + (w.z / std::sqrt(2.0)).tanh()).abs().maxCoeff();
  files["wave.csv"] = report::csv({"z", "Q", "Qz"}, {w.z, w.Q, w.Qz});
  j["csv"] = "wave.csv";
  if (p.config().plots)
    files["wave.svg"] =
        report::svg_plot({"wave profile", "z", "Q"}, {{"Q", report::to_vec(w.z), report::to_vec(w.Q)}});
  return j;
}

// Max round trip and kernel component over `count` random solvable right-hand sides.
inline std::pair<double, double> l0_self_test(const L0Solver& L, int count, std::uint64_t seed) {
  const auto& P = L.profile();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), ctr(-6.0, 6.0), wid(0.5, 3.0);
  double rt = 0.0, orth = 0.0;
  for (int t = 0; t < count; ++t) {
    Eigen::ArrayXd g = Eigen::ArrayXd::Zero(P.n);
    for (int b = 0; b < 3; ++b) {
      const double a = amp(rng), c0 = ctr(rng), s = wid(rng);
      g += a * (-((P.z - c0) / s).square()).exp();
    }
    g -= L.inner(g, P.Qz) / L.inner(P.Qz, P.Qz) * P.Qz;
    const auto r = L.solve(g, 0.0, 0.0);
    rt = std::max(rt, r.roundtrip);
    orth = std::max(orth, std::abs(r.inner) / L.norm(P.Qz));
  }
  return {rt, orth};
}

inline Json cmd_expand(Pipeline& p, Files& files) {
  const auto& c = p.config();
  const auto& e = p.expansion(c.k);
  using detail::vec;
  Json j;
  j["R_star"] = e.R_star;
  j["r0"] = e.r0;
  j["mirrored"] = e.mirrored;
  j["A"] = vec(e.A);
  j["a"] = vec(e.a);
  j["U_inside"] = vec(e.U_minus);
  j["U_outside"] = vec(e.U_plus);
  j["J_tail"] = vec(e.J_tail);
  j["J_prime_quad"] = e.J_prime_quad;
  j["diagnostics"] = {{"independence_delta", vec(e.independence_delta)},
                      {"solvability_residual", vec(e.solvability_residual)},
                      {"B_residual", vec(e.B_residual)},
                      {"inner_residual", vec(e.inner_residual)},
                      {"orthogonality", vec(e.orthogonality)},
                      {"roundtrip", vec(e.roundtrip)},
                      {"tail_error_lo", vec(e.tail_error_lo)},
                      {"tail_error_hi", vec(e.tail_error_hi)}};
  const auto [rt, orth] = l0_self_test(*e.l0, 20, c.seed);
  j["l0_self_test"] = {{"seed", c.seed}, {"count", 20}, {"max_roundtrip", rt}, {"max_kernel_component", orth}};
  std::vector<std::string> head{"zeta"};
  std::vector<Eigen::ArrayXd> cols{e.profile.z};
  for (int i = 0; i <= e.k; ++i) {
    head.push_back("w" + std::to_string(i));
    cols.push_back(e.w[i]);
  }
  files["inner.csv"] = report::csv(head, cols);
  j["csv"] = "inner.csv";
  return j;
}

inline Json cmd_residual(Pipeline& p, Files& files) {
  const auto& c = p.config();
  const auto& e = p.expansion(c.k);
  const auto& eq = p.equilibrium();
  const auto opt = p.assemble_options();
  const auto sols = detail::fan_out(c.eps_list, [&](double eps) { return assemble(e, eps, opt); });
  const double h_in = c.mirrored ? eq.h.h_minus : eq.h.h_plus, h_out = c.mirrored ? eq.h.h_plus : eq.h.h_minus;
  Json rows = Json::array();
  std::vector<double> x, yr, ym;
  std::vector<report::Series> su, sr;
  for (std::size_t i = 0; i < sols.size(); ++i) {
    const auto& s = sols[i];
    const SweepRow row = sweep_row(s, e);
    const std::string csv = detail::indexed("profile", i, "csv");
    Eigen::ArrayXd reg(s.grid.n());
    for (int q = 0; q < s.grid.n(); ++q) reg(q) = static_cast<int>(s.region[q]);
    files[csv] = report::csv({"r", "u", "v", "residual", "region"}, {s.grid.r, s.u, s.v, s.residual, reg});
    rows.push_back({{"eps", s.eps},
                    {"nodes", s.grid.n()},
                    {"residual_inf", row.residual_inf},
                    {"residual_outer", row.res_outer},
                    {"residual_blend", row.res_blend},
                    {"residual_inner", row.res_inner},
                    {"S", s.S_value},
                    {"mean_defect", row.mean_defect},
                    {"mass_defect", row.mass_defect},
                    {"v_deviation", row.v_dev},
                    {"K_eta_0.05", plateau_width(s.grid.r, s.u, s.R_star, s.eps, h_in, h_out, 0.05)},
                    {"K_eta_0.1", plateau_width(s.grid.r, s.u, s.R_star, s.eps, h_in, h_out, 0.1)},
                    {"crossing_offset_over_eps",
                     (crossing_radius(s.grid.r, s.u, eq.h.h_zero, s.R_star) - s.R_star) / s.eps},
                    {"csv", csv}});
    x.push_back(s.eps);
    yr.push_back(row.residual_inf);
    ym.push_back(row.mean_defect);
    su.push_back({detail::eps_name(s.eps), report::to_vec(s.grid.r), report::to_vec(s.u)});
    sr.push_back({detail::eps_name(s.eps), report::to_vec(s.grid.r), report::to_vec(s.residual)});
  }
  Json j;
  j["R_star"] = e.R_star;
  j["rows"] = rows;
  j["slope"] = detail::opt(detail::slope_if_sweep(x, yr));
  j["mean_slope"] = detail::opt(detail::slope_if_sweep(x, ym));
  if (c.plots) {
    files["u_vs_r.svg"] = report::svg_plot({"approximate solution", "r", "u"}, su);
    files["residual_vs_r.svg"] = report::svg_plot({"residual", "r", "R"}, sr);
  }
  return j;
}

inline Json cmd_solve(Pipeline& p, Files& files) {
  const auto& c = p.config();
  for (int k = 0; k <= c.k; ++k) p.expansion(k);
  const auto& e = p.expansion(c.k);
  const auto opt = p.assemble_options();
  struct Out {
    ApproximateSolution init;
    SolvedState st;
    std::vector<double> du, dv;
  };
  auto results = detail::fan_out(c.eps_list, [&](double eps) {
    Out o;
    o.init = assemble(e, eps, opt);
    o.st = solve_from(o.init, e, c.newton);
    for (int k = 0; k <= c.k; ++k) {
      const auto uk = k == c.k ? o.init : assemble_on(p.expansion(k), eps, o.init.grid);
      o.du.push_back((o.st.newton.u - uk.u).abs().maxCoeff());
      o.dv.push_back((o.st.v - uk.v).abs().maxCoeff());
    }
    return o;
  });
  Json rows = Json::array();
  std::vector<report::Series> series;
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto& o = results[i];
    // The problem refers to the grid inside `init`; keep it pointing at this copy.
    o.st.problem.grid = &o.init.grid;
    Json du, dv;
    for (int k = 0; k <= c.k; ++k) {
      du[std::to_string(k)] = o.du[k];
      dv[std::to_string(k)] = o.dv[k];
    }
    const std::string csv = detail::indexed("solved", i, "csv");
    files[csv] = report::csv({"r", "u", "v", "u_k"}, {o.init.grid.r, o.st.newton.u, o.st.v, o.init.u});
    rows.push_back({{"eps", o.init.eps},
                    {"iterations", o.st.newton.iterations},
                    {"res_final", o.st.newton.residual},
                    {"history", detail::vec(o.st.newton.history)},
                    {"continued", o.st.newton.continued},
                    {"mass_defect", o.st.mass_defect},
                    {"u0", o.st.newton.u(0)},
                    {"u1", o.st.newton.u(o.st.newton.u.size() - 1)},
                    {"diff_to_uk_by_k", du},
                    {"v_diff_to_vk_by_k", dv},
                    {"csv", csv}});
    series.push_back({detail::eps_name(o.init.eps), report::to_vec(o.init.grid.r), report::to_vec(o.st.newton.u)});
  }
  Json slopes;
  std::vector<double> x;
  for (const auto& o : results) x.push_back(o.init.eps);
  for (int k = 0; k <= c.k; ++k) {
    std::vector<double> y;
    for (const auto& o : results) y.push_back(o.du[k]);
    slopes[std::to_string(k)] = detail::opt(detail::slope_if_sweep(x, y));
  }
  Json j;
  j["rows"] = rows;
  j["u_slopes_by_k"] = slopes;
  if (c.plots) files["solved.svg"] = report::svg_plot({"solved profile", "r", "u"}, series);
  return j;
}

inline Json cmd_spectrum(Pipeline& p, Files& files) {
  const auto& c = p.config();
  const auto& e = p.expansion(c.k);
  const auto opt = p.assemble_options();
  struct Out {
    ApproximateSolution s;
    SpectralReport rep;
    DecayReport dec;
    double profile_error = 0.0;
  };
  const auto results = detail::fan_out(c.eps_list, [&](double eps) {
    Out o;
    o.s = assemble(e, eps, opt);
    o.rep = analyze_spectrum(o.s, e);
    o.dec = eigenfunction_decay(o.rep.phi0, o.s);
    o.profile_error = eigenfunction_profile_error(o.rep.phi0, o.s, e);
    return o;
  });
  const auto lc = limit_constants(e.eq, c.M, c.N, wave_mass(e.profile), c.mirrored);
  Json rows = Json::array();
  std::vector<double> x, ratio, l1;
  std::vector<report::Series> series;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& o = results[i];
    const auto& r = o.rep;
    const std::string csv = detail::indexed("eigen", i, "csv");
    files[csv] = report::csv({"r", "phi0"}, {o.s.grid.r, r.phi0});
    rows.push_back({{"eps", o.s.eps},
                    {"mu0", r.mu0},
                    {"lambda0", r.lambda0},
                    {"lambda0_adj", r.lambda0_adjoint},
                    {"ratio", r.ratio},
                    {"next_eig_bound", r.next_eig_bound},
                    {"lambda_star", r.limits.lambda_star},
                    {"pairing", r.pairing},
                    {"sign_changes", r.sign_changes},
                    {"dense_lambda0", detail::opt(r.dense_lambda)},
                    {"decay_inner", o.dec.rate_inner},
                    {"decay_outer", o.dec.rate_outer},
                    {"flat_mass", o.dec.flat_mass},
                    {"l1_norm", o.dec.l1},
                    {"profile_error", o.profile_error},
                    {"csv", csv}});
    x.push_back(o.s.eps);
    ratio.push_back(r.ratio);
    l1.push_back(o.dec.l1);
    Eigen::ArrayXd z = (o.s.grid.r - o.s.R_star) / o.s.eps;
    Eigen::ArrayXd y = std::sqrt(o.s.eps) * r.phi0;
    std::vector<double> zx, yy;
    for (Eigen::Index q = 0; q < z.size(); ++q)
      if (std::abs(z(q)) <= 8) {
        zx.push_back(z(q));
        yy.push_back(y(q));
      }
    series.push_back({detail::eps_name(o.s.eps), zx, yy});
  }
  Json j;
  j["E"] = lc.E;
  j["G"] = lc.G;
  j["mu_hat"] = lc.mu_hat;
  j["Lambda_star"] = lc.Lambda_star;
  j["rows"] = rows;
  j["ratio_richardson"] = x.size() >= 2 ? Json(extrapolate_to_zero(x, ratio)) : Json(nullptr);
  j["l1_slope"] = detail::opt(detail::slope_if_sweep(x, l1));
  if (c.plots) files["eigen.svg"] = report::svg_plot({"principal eigenfunction", "z", "sqrt(eps) phi0"}, series);
  return j;
}

inline Json cmd_sweep(Pipeline& p, Files& files) {
  const auto& c = p.config();
  if (c.eps_list.size() < 3 || c.eps_list.front() < 4.0 * c.eps_list.back())
    detail::invalid("sweep needs >= 3 eps values spanning a factor >= 4");
  Json orders = Json::array();
  std::vector<report::Series> series;
  std::vector<Eigen::ArrayXd> cols(5);
  for (auto& col : cols) col.resize(0);
  std::vector<std::array<double, 5>> table;
  for (int k = 0; k <= c.k; ++k) {
    const auto sw = residual_sweep(p.expansion(k), c.eps_list, p.assemble_options());
    Json rows = Json::array();
    report::Series s{"k=" + std::to_string(k), {}, {}};
    for (const auto& r : sw.rows) {
      rows.push_back({{"eps", r.eps},
                      {"residual_inf", r.residual_inf},
                      {"mean_defect", r.mean_defect},
                      {"mass_defect", r.mass_defect},
                      {"nodes", r.nodes}});
      s.x.push_back(r.eps);
      s.y.push_back(r.residual_inf);
      table.push_back({double(k), r.eps, r.residual_inf, r.mean_defect, r.mass_defect});
    }
    orders.push_back({{"k", k},
                      {"slope", sw.slope},
                      {"expected_min", k + 0.7},
                      {"mean_slope", sw.mean_slope},
                      {"rows", rows}});
    series.push_back(std::move(s));
  }
  for (auto& col : cols) col.resize(static_cast<Eigen::Index>(table.size()));
  for (std::size_t i = 0; i < table.size(); ++i)
    for (int q = 0; q < 5; ++q) cols[q](static_cast<Eigen::Index>(i)) = table[i][q];
  files["order.csv"] = report::csv({"k", "eps", "residual_inf", "mean_defect", "mass_defect"}, cols);
  if (c.plots)
    files["order.svg"] = report::svg_plot({"residual order", "eps", "max |R|", true, true}, series);
  Json j;
  j["orders"] = orders;
  j["csv"] = "order.csv";
  return j;
}

inline Json cmd_report(Pipeline& p, Files& files) {
  Json j;
  j["analyze"] = cmd_analyze(p, files);
  j["wave"] = cmd_wave(p, files);
  j["expand"] = cmd_expand(p, files);
  j["residual"] = cmd_residual(p, files);
  j["solve"] = cmd_solve(p, files);
  j["spectrum"] = cmd_spectrum(p, files);
  return j;
}

inline const std::map<std::string, std::pair<std::string, Json (*)(Pipeline&, Files&)>>& commands() {
  static const std::map<std::string, std::pair<std::string, Json (*)(Pipeline&, Files&)>> m{
      {"analyze", {"equilibrium structure and balanced value", cmd_analyze}},
      {"wave", {"heteroclinic profile at the balanced value", cmd_wave}},
      {"expand", {"matched expansion coefficients", cmd_expand}},
      {"residual", {"assembled approximations and residual norms", cmd_residual}},
      {"solve", {"Newton solve from the approximation", cmd_solve}},
      {"spectrum", {"principal and critical eigenvalues", cmd_spectrum}},
      {"sweep", {"residual order table over k = 0..k", cmd_sweep}},
      {"report", {"all stages in one report", cmd_report}},
  };
  return m;
}

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidArgument:
    case ErrorCode::MassOutOfRange:
      return 2;
    default:
      return 3;
  }
}

inline void write_files(const std::filesystem::path& dir, const Files& files) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create '" + dir.string() + "': " + ec.message());
  for (const auto& [name, text] : files) {
    std::ofstream f(dir / name, std::ios::binary);
    f << text;
    if (!f) throw Error(ErrorCode::IoFailure, "cannot write '" + (dir / name).string() + "'");
  }
}

inline Json error_json(const std::string& command, const std::string& code, const std::string& message, int exit) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  j["status"] = "error";
  j["error"] = {{"code", code}, {"message", message}};
  j["exit_code"] = exit;
  return j;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Numerics for single-interface steady states of mass-conserving reaction-diffusion systems", "mcrd"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir = ".";
  bool mirrored = false;
  std::optional<int> k_override;
  std::optional<std::uint64_t> seed_override;
  for (const auto& [name, entry] : commands()) {
    auto* sc = app.add_subcommand(name, entry.first);
    sc->add_option("-c,--config", config_path, "run configuration (INI, dotted keys)")->required();
    sc->add_option("-o,--out", out_dir, "output directory");
    sc->add_flag("--mirrored", mirrored, "use the mirrored family (h^- inside)");
    sc->add_option("--k", k_override, "expansion order (overrides problem.k)");
    sc->add_option("--seed", seed_override, "seed for randomized self-tests (overrides seed)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  const std::filesystem::path dir(out_dir);
  auto fail = [&](const std::string& code, const std::string& msg, int rc) {
    err << "mcrd " << command << ": " << msg << "\n";
    try {
      write_files(dir, {{"error.json", report::dump(error_json(command, code, msg, rc))}});
    } catch (const Error& e) {
      err << "mcrd: " << e.what() << "\n";
    }
    return rc;
  };
  try {
    RunConfig cfg = load_config(config_path);
    if (mirrored) cfg.mirrored = true;
    if (k_override) cfg.k = *k_override;
    if (seed_override) cfg.seed = *seed_override;
    validate(cfg);
    Pipeline pipe(cfg);
    Files files;
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = command;
    j["status"] = "ok";
    j["config"] = config_json(cfg);
    j["result"] = commands().at(command).second(pipe, files);
    files[command + ".json"] = report::dump(j);
    std::error_code ec;
    std::filesystem::remove(dir / "error.json", ec);
    write_files(dir, files);
    out << "mcrd " << command << ": wrote " << files.size() << " file(s) to " << dir.string() << "\n";
    return 0;
  } catch (const Error& e) {
    return fail(e.name(), e.what(), exit_code_for(e.code()));
  } catch (const std::exception& e) {
    return fail("InternalError", e.what(), 3);
  }
}

}  // namespace mcrd::cli
