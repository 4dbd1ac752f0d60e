#include "bistab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include "bistab/classical_spin.hpp"
#include "bistab/duffing_kerr.hpp"
#include "bistab/error.hpp"
#include "bistab/imd.hpp"
#include "bistab/master_equation.hpp"
#include "bistab/rd_model.hpp"
#include "bistab/response_fit.hpp"

namespace bistab {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::uint64_t fnv1a_64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

Error input_error(const std::string& what) { return Error(ErrorCode::invalid_argument, what); }


enum class FieldType { number, integer, text, path, numbers, optional_number };

struct Field {
  std::string name;
  FieldType type;
  json fallback;
  std::vector<std::string> choices = {};
};

struct Context {
  json params;
  fs::path out;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string config_hash;
  std::vector<std::string> artifacts;

  double num(const std::string& key) const { return params.at(key).get<double>(); }
  int integer(const std::string& key) const { return params.at(key).get<int>(); }
  std::string text(const std::string& key) const { return params.at(key).get<std::string>(); }
  std::optional<double> maybe(const std::string& key) const {
    const auto& v = params.at(key);
    return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
  }
};

struct Command {
  std::string name;
  std::string help;
  std::vector<Field> fields;
  std::function<void(Context&)> body;
};

void check_field(const Field& f, const json& v) {
  const auto fail = [&](const std::string& why) { throw input_error("field '" + f.name + "': " + why); };
  switch (f.type) {
    case FieldType::number:
      if (!v.is_number()) fail("expected a number");
      break;
    case FieldType::integer:
      if (!v.is_number_integer()) fail("expected an integer");
      break;
    case FieldType::text:
    case FieldType::path:
      if (!v.is_string()) fail("expected a string");
      if (!f.choices.empty() &&
          std::find(f.choices.begin(), f.choices.end(), v.get<std::string>()) == f.choices.end()) {
        std::string list;
        for (const auto& c : f.choices) list += (list.empty() ? "" : ", ") + c;
        fail("expected one of " + list);
      }
      break;
    case FieldType::numbers:
      if (!v.is_array()) fail("expected an array of numbers");
      for (const auto& e : v)
        if (!e.is_number()) fail("expected an array of numbers");
      break;
    case FieldType::optional_number:
      if (!v.is_null() && !v.is_number()) fail("expected a number or null");
      break;
  }
}

json parse_override(const Field& f, const std::string& raw) {
  const auto number = [&]() {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(raw, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != raw.size() || raw.empty()) throw input_error("--" + f.name + ": '" + raw + "' is not a number");
    return v;
  };
  switch (f.type) {
    case FieldType::number:
      return number();
    case FieldType::optional_number:
      if (raw == "null") return nullptr;
      return number();
    case FieldType::integer: {
      const double v = number();
      if (v != std::floor(v) || std::abs(v) > 1e15) throw input_error("--" + f.name + ": expected an integer");
      return static_cast<long long>(v);
    }
    case FieldType::numbers: {
      json arr = json::array();
      std::stringstream ss(raw);
      std::string item;
      while (std::getline(ss, item, ',')) {
        Field scalar{f.name, FieldType::number, nullptr};
        arr.push_back(parse_override(scalar, item));
      }
      return arr;
    }
    case FieldType::text:
    case FieldType::path:
      return raw;
  }
  return nullptr;
}


class CsvWriter {
 public:
  CsvWriter(Context& ctx, const std::string& name, const std::vector<std::string>& header) {
    const fs::path path = ctx.out / name;
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw input_error("cannot write " + path.string());
    ctx.artifacts.push_back(name);
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) file_ << (i ? "," : "") << cells[i];
    file_ << '\n';
  }
  ~CsvWriter() { file_.flush(); }

 private:
  std::ofstream file_;
};

std::string cell(double v) { return format_double(v); }
std::string cell(int v) { return std::to_string(v); }
std::string cell(std::size_t v) { return std::to_string(v); }
std::string cell(const char* v) { return v; }

template <typename... T>
std::vector<std::string> cells(const T&... v) {
  return {cell(v)...};
}

void write_json(Context& ctx, const std::string& name, json doc) {
  doc["config_hash"] = ctx.config_hash;
  const fs::path path = ctx.out / name;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw input_error("cannot write " + path.string());
  f << doc.dump(2) << '\n';
  ctx.artifacts.push_back(name);
}

json complex_json(std::complex<double> c) { return json::array({c.real(), c.imag()}); }


std::vector<Field> spin_fields() {
  return {{"spins", FieldType::integer, 1},
          {"omega0", FieldType::number, 0.0},
          {"omega_k", FieldType::number, 0.0},
          {"omega_a", FieldType::number, 0.0},
          {"omega1", FieldType::number, 0.0},
          {"omega_t", FieldType::number, 0.0},
          {"omega_d", FieldType::optional_number, nullptr},
          {"gamma1", FieldType::number, 1.0},
          {"gamma_phi", FieldType::number, 0.0},
          {"n_thermal", FieldType::number, 0.0},
          {"gamma_d", FieldType::number, 0.0},
          {"eta", FieldType::number, 1.0},
          {"zeeman_sign", FieldType::text, "main_text", {"main_text", "appendix"}}};
}

SpinSystemParams spin_params(const Context& c) {
  SpinSystemParams p;
  p.spins = c.integer("spins");
  p.omega0 = c.num("omega0");
  p.omega_k = c.num("omega_k");
  p.omega_a = c.num("omega_a");
  p.omega1 = c.num("omega1");
  p.omega_t = c.num("omega_t");
  if (auto wd = c.maybe("omega_d")) p.set_detuning(*wd);
  p.gamma1 = c.num("gamma1");
  p.gamma_phi = c.num("gamma_phi");
  p.n_thermal = c.num("n_thermal");
  p.gamma_d = c.num("gamma_d");
  p.eta = c.num("eta");
  p.zeeman_sign = c.text("zeeman_sign") == "appendix" ? ZeemanSign::appendix : ZeemanSign::main_text;
  p.validate();
  return p;
}

std::vector<Field> integration_fields(double t_max) {
  return {{"dt", FieldType::number, 0.0},
          {"t_max", FieldType::number, t_max},
          {"tol", FieldType::number, 0.0}};
}

IntegrationOptions integration_options(const Context& c) {
  IntegrationOptions o;
  o.dt = c.num("dt");
  o.t_max = c.num("t_max");
  o.tol = c.num("tol");
  return o;
}

std::vector<Field> dk_fields() {
  return {{"gamma1", FieldType::number, 0.4},
          {"gamma2", FieldType::number, 0.6},
          {"gamma3", FieldType::number, 0.01},
          {"omega_k", FieldType::number, -0.1}};
}

DkParams dk_params(const Context& c) {
  DkParams p;
  p.gamma1 = c.num("gamma1");
  p.gamma2 = c.num("gamma2");
  p.gamma3 = c.num("gamma3");
  p.omega_k = c.num("omega_k");
  return p;
}

template <typename T>
std::vector<Field> join(std::vector<Field> a, const T& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}


void cmd_evolve(Context& c) {
  const auto p = spin_params(c);
  const Frame frame = c.text("frame") == "lab" ? Frame::lab : Frame::rotating;
  const MasterEquation eq(p, frame);
  Operator rho0;
  const std::string init = c.text("initial");
  if (init == "thermal") {
    rho0 = thermal_state(p);
  } else {
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(eq.dim());
    psi(init == "up" ? 0 : eq.dim() - 1) = 1.0;
    rho0 = pure_state(psi);
  }
  auto opt = integration_options(c);
  opt.record_every = c.integer("record_every");
  const auto rep = integrate_to_steady(rho0, eq, opt);
  CsvWriter csv(c, "evolve.csv", {"t", "Sz", "ReSp", "ImSp"});
  for (const auto& s : rep.trajectory) csv.row(cells(s.t, s.sz, s.sp.real(), s.sp.imag()));
  const auto& sp = eq.spin();
  json doc;
  doc["converged"] = rep.converged;
  doc["residual"] = rep.residual;
  doc["steps"] = rep.steps;
  doc["t"] = rep.t;
  doc["Sz"] = (sp.sz * rep.rho).trace().real();
  doc["Sp"] = complex_json((sp.sp * rep.rho).trace());
  doc["tau_pairs"] = eq.theta(rep.rho).tau_pairs;
  const auto check = check_density(rep.rho);
  doc["min_eigenvalue"] = check.min_eigenvalue;
  doc["trace_error"] = check.trace_error;
  write_json(c, "evolve.json", doc);
}

void cmd_sweep(Context& c) {
  const auto p = spin_params(c);
  SweepSpec s;
  s.axis = c.text("axis") == "drive" ? SweepAxis::drive : SweepAxis::detuning;
  s.from = c.num("from");
  s.to = c.num("to");
  s.n_points = c.integer("n_points");
  const std::string dir = c.text("direction");
  const auto opt = integration_options(c);
  for (const std::string d : {"up", "down"}) {
    if (dir != "both" && dir != d) continue;
    s.direction = d == "up" ? SweepDirection::up : SweepDirection::down;
    const auto pts = hysteresis_sweep(p, s, opt);
    std::vector<std::string> header{"sweep_value", "Sz", "ReSp", "ImSp"};
    for (int a = 1; a <= p.spins; ++a)
      for (int b = a + 1; b <= p.spins; ++b) header.push_back("tau_" + std::to_string(a) + std::to_string(b));
    header.push_back("converged");
    CsvWriter csv(c, "sweep_" + d + ".csv", header);
    for (const auto& q : pts) {
      auto row = cells(q.value, q.sz, q.sp.real(), q.sp.imag());
      for (double t : q.tau_pairs) row.push_back(cell(t));
      row.push_back(cell(q.converged ? 1 : 0));
      csv.row(row);
    }
  }
}

void cmd_rd_map(Context& c) {
  const auto map = rd_stability_map(c.num("D"), c.num("delta_lo"), c.num("delta_hi"), c.num("w_lo"), c.num("w_hi"),
                                    c.integer("n_delta"), c.integer("n_w"), c.threads);
  CsvWriter csv(c, "rd_map.csv", {"delta", "W", "n_roots", "n_stable"});
  for (const auto& cell_ : map.cells) csv.row(cells(cell_.delta, cell_.W, cell_.n_roots, cell_.n_stable));
}

void cmd_rd_curves(Context& c) {
  const double D = c.num("D");
  const int n = c.integer("n_delta");
  if (n < 2) throw input_error("n_delta must be at least 2");
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i) grid[i] = c.num("delta_lo") + (c.num("delta_hi") - c.num("delta_lo")) * i / (n - 1);
  const auto w_list = c.params.at("w_list").get<std::vector<double>>();
  const auto pts = rd_response_curves(D, w_list, grid);
  CsvWriter csv(c, "rd_curves.csv", {"W", "delta", "z", "branch", "stable"});
  for (const auto& q : pts) csv.row(cells(q.W, q.delta, q.z, q.branch, q.stability == Stability::stable ? 1 : 0));
  const auto b = rd_jump_boundaries(D, c.integer("n_jump"));
  CsvWriter jumps(c, "rd_jumps.csv", {"boundary", "z", "delta", "W"});
  for (const auto& q : b.lower) jumps.row(cells("lower", q.z, q.delta, q.W));
  for (const auto& q : b.upper) jumps.row(cells("upper", q.z, q.delta, q.W));
}

void cmd_rd_onset(Context& c) {
  const double D = c.num("D");
  json doc;
  doc["D"] = D;
  if (auto on = rd_onset_points(D)) {
    doc["bistability_excluded"] = false;
    doc["z_plus"] = on->plus.z;
    doc["delta_plus"] = on->plus.delta;
    doc["W_plus"] = on->plus.W;
    doc["z_minus"] = on->minus.z;
    doc["delta_minus"] = on->minus.delta;
    doc["W_minus"] = on->minus.W;
  } else {
    doc["bistability_excluded"] = true;
  }
  write_json(c, "rd_onset.json", doc);
}

DkOnset require_onset(const DkParams& p) {
  const auto on = dk_onset(p);
  if (!on) throw input_error("parameters are below the Kerr threshold; there is no onset point to normalize by");
  return *on;
}

void cmd_dk_map(Context& c) {
  const auto p = dk_params(c);
  p.validate();
  const auto on = require_onset(p);
  const auto grid = dk_stability_map(p, c.num("wd_lo_r") * on.omega_dc, c.num("wd_hi_r") * on.omega_dc,
                                     c.num("p_lo_r") * on.omega1c, c.num("p_hi_r") * on.omega1c, c.integer("n_wd"),
                                     c.integer("n_p"), c.threads);
  CsvWriter csv(c, "dk_map.csv", {"omega_dR", "Omega_1R", "n_roots", "n_stable"});
  for (const auto& q : grid) csv.row(cells(q.omega_d / on.omega_dc, q.omega1 / on.omega1c, q.n_roots, q.n_stable));
}

const char* to_string(DkStability s) {
  switch (s) {
    case DkStability::stable_spiral:
      return "stable_spiral";
    case DkStability::stable_node:
      return "stable_node";
    case DkStability::saddle:
      return "saddle";
    case DkStability::unstable:
      return "unstable";
  }
  return "?";
}

void cmd_dk_reflectivity(Context& c) {
  auto p = dk_params(c);
  p.omega1 = c.num("omega1");
  const int n = c.integer("n");
  if (n < 2) throw input_error("n must be at least 2");
  CsvWriter csv(c, "dk_reflectivity.csv", {"omega_d", "root", "energy", "re_r", "im_r", "abs_r", "stability"});
  for (int i = 0; i < n; ++i) {
    p.omega_d = c.num("wd_lo") + (c.num("wd_hi") - c.num("wd_lo")) * i / (n - 1);
    const auto roots = dk_roots(p);
    for (std::size_t k = 0; k < roots.size(); ++k) {
      const auto& r = roots[k];
      csv.row(cells(p.omega_d, k, r.energy, r.reflectivity.real(), r.reflectivity.imag(), std::abs(r.reflectivity),
                    to_string(r.stability)));
    }
  }
}

// Midpoint of the bistable detuning window at the drive power already set in p.
double window_midpoint(const DkParams& p) {
  const auto on = require_onset(p);
  if (!(p.omega1 > on.omega1c)) throw input_error("omega1 must exceed the onset power to pick a bistable omega_d");
  double e_max = 2.0 * on.energy_c;
  const auto crossing = [&](const std::vector<DkCurvePoint>& leg) -> std::optional<double> {
    for (std::size_t k = 1; k < leg.size(); ++k)
      if ((leg[k - 1].omega1 - p.omega1) * (leg[k].omega1 - p.omega1) <= 0.0) return leg[k].omega_d;
    return std::nullopt;
  };
  for (int it = 0; it < 60; ++it, e_max *= 1.5) {
    const auto b = dk_jump_boundaries(p, e_max, 4000);
    const auto w1 = crossing(b.first), w2 = crossing(b.second);
    if (w1 && w2) return 0.5 * (*w1 + *w2);
  }
  throw Error(ErrorCode::no_bracket, "bistable window not found at this drive power");
}

void cmd_dk_basins(Context& c) {
  auto p = dk_params(c);
  p.omega1 = c.num("omega1");
  const auto wd = c.maybe("omega_d");
  p.omega_d = wd ? *wd : window_midpoint(p);
  BasinOptions o;
  o.re_lo = c.num("re_lo");
  o.re_hi = c.num("re_hi");
  o.im_lo = c.num("im_lo");
  o.im_hi = c.num("im_hi");
  o.n_re = c.integer("n_re");
  o.n_im = c.integer("n_im");
  o.dt = c.num("dt");
  o.t_max = c.num("t_max");
  o.bisection_steps = c.integer("bisection_steps");
  o.threads = c.threads;
  const auto map = dk_basins(p, o);
  {
    CsvWriter csv(c, "dk_basins.csv", {"ReC0", "ImC0", "attractor_id"});
    for (int j = 0; j < map.n_im; ++j)
      for (int i = 0; i < map.n_re; ++i) {
        const auto z = map.cell_center(i, j);
        csv.row(cells(z.real(), z.imag(), map.labels[static_cast<std::size_t>(j) * map.n_re + i]));
      }
  }
  {
    CsvWriter csv(c, "dk_separatrix.csv", {"ReC", "ImC"});
    for (const auto& z : map.separatrix) csv.row(cells(z.real(), z.imag()));
  }
  json doc;
  doc["omega_d"] = p.omega_d;
  doc["omega1"] = p.omega1;
  doc["bistable"] = map.bistable;
  json fps = json::array();
  for (std::size_t k = 0; k < map.fixed_points.size(); ++k) {
    const auto& f = map.fixed_points[k];
    fps.push_back({{"id", k},
                   {"C", complex_json(f.amplitude)},
                   {"energy", f.energy},
                   {"class", to_string(f.stability)},
                   {"residual", f.residual}});
  }
  doc["fixed_points"] = fps;
  write_json(c, "dk_fixed_points.json", doc);
}

void cmd_classical(Context& c) {
  ClassicalParams p;
  p.omega0 = c.num("omega0");
  p.omega_k = c.num("omega_k");
  p.omega_a = c.num("omega_a");
  p.omega1 = c.num("omega1");
  p.omega_t = c.num("omega_t");
  const auto time_or_inf = [&](const char* key) {
    const auto v = c.maybe(key);
    return v ? *v : std::numeric_limits<double>::infinity();
  };
  p.t1 = time_or_inf("t1");
  p.t2 = time_or_inf("t2");
  p.sz0 = c.num("sz0");
  p.validate();
  const auto p0v = c.params.at("p0").get<std::vector<double>>();
  if (p0v.size() != 3) throw input_error("p0 must have three components");
  const double period = p.drive_period();
  const double dt = c.num("dt") > 0.0 ? c.num("dt") : period / 8000.0;
  const double t_max = c.num("t_max") > 0.0 ? c.num("t_max") : 60.0 * period;
  const int every = c.integer("record_every");
  if (every < 1) throw input_error("record_every must be at least 1");
  const auto traj = integrate_classical(Vec3(p0v[0], p0v[1], p0v[2]), p, dt, t_max, 1);
  const bool rotating = c.text("frame") == "rotating";
  {
    CsvWriter csv(c, "classical.csv", {"t", "Px", "Py", "Pz"});
    for (std::size_t k = 0; k < traj.size(); k += every) {
      const auto s = rotating ? to_rotating_frame(traj[k], p) : traj[k];
      csv.row(cells(s.t, s.p.x(), s.p.y(), s.p.z()));
    }
  }
  LimitCycleOptions lo;
  lo.transient_periods = c.integer("transient_periods");
  json doc;
  doc["period"] = period;
  doc["dt"] = dt;
  if (const auto cyc = detect_limit_cycle(traj, p, lo)) {
    doc["limit_cycle"] = true;
    doc["closure_error"] = cyc->closure_error;
    doc["wobble"] = cyc->wobble;
  } else {
    doc["limit_cycle"] = false;
    doc["closure_error"] = nullptr;
    doc["wobble"] = 0.0;
  }
  write_json(c, "classical_cycle.json", doc);
}

void cmd_imd(Context& c) {
  RdPhysical phys;
  phys.omega_k = c.num("omega_k");
  phys.t1 = c.num("t1");
  phys.t2 = c.num("t2");
  phys.pz0 = c.num("pz0");
  phys.omega1 = c.num("omega1");
  phys.omega_d = c.num("omega_d");
  const std::string br = c.text("branch");
  const ImdBranch branch = br == "high_z" ? ImdBranch::high_z : br == "low_z" ? ImdBranch::low_z : ImdBranch::unspecified;
  const auto op = imd_operating_point(phys, branch);
  std::vector<double> grid;
  const int n = c.integer("n");
  const auto lo = c.maybe("omega_lo"), hi = c.maybe("omega_hi");
  if (lo || hi) {
    if (!lo || !hi || n < 2) throw input_error("omega_lo, omega_hi and n >= 2 must be given together");
    for (int i = 0; i < n; ++i) grid.push_back(*lo + (*hi - *lo) * i / (n - 1));
  }
  const auto spec = imd_gain(op, c.num("omega_a"), c.num("omega_t"), phys.t1, phys.t2, c.num("gamma1"), grid);
  {
    CsvWriter csv(c, "imd.csv", {"omega", "g_imd"});
    for (std::size_t k = 0; k < spec.omega.size(); ++k) csv.row(cells(spec.omega[k], spec.gain[k]));
  }
  json doc;
  doc["p_plus"] = complex_json(op.p_plus);
  doc["pz"] = op.pz;
  doc["omega_dk"] = op.omega_dk;
  doc["W1"] = complex_json(spec.state.w1);
  doc["W2"] = complex_json(spec.state.w2);
  doc["trace"] = spec.state.trace;
  doc["determinant"] = spec.state.determinant;
  doc["lambda_plus"] = complex_json(spec.state.lambda_plus);
  doc["lambda_minus"] = complex_json(spec.state.lambda_minus);
  doc["weak_anisotropy_violated"] = spec.state.weak_anisotropy_violated;
  write_json(c, "imd.json", doc);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw input_error(where + ": '" + s + "' is not a number");
  return v;
}

PowerUnit parse_unit(const std::string& s, const std::string& where) {
  if (s == "linear") return PowerUnit::linear;
  if (s == "dBm" || s == "dbm") return PowerUnit::dbm;
  throw input_error(where + ": power unit must be linear or dBm");
}

MeasuredResponse read_measurements(const fs::path& csv_path, const fs::path& meta_path) {
  MeasuredResponse d;
  std::ifstream in(csv_path);
  if (!in) throw input_error("cannot read " + csv_path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "f_hz,power,power_unit,kind")
    throw input_error(csv_path.string() + ": header must be f_hz,power,power_unit,kind");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = csv_path.string() + ":" + std::to_string(line_no);
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(trim(item));
    if (f.size() != 4) throw input_error(where + ": expected 4 columns");
    MeasuredRecord r;
    r.f_hz = parse_number(f[0], where);
    r.power = parse_number(f[1], where);
    r.unit = parse_unit(f[2], where);
    if (f[3] == "peak") r.kind = PointKind::peak;
    else if (f[3] == "jump_up") r.kind = PointKind::jump_up;
    else if (f[3] == "jump_down") r.kind = PointKind::jump_down;
    else throw input_error(where + ": kind must be peak, jump_up or jump_down");
    d.records.push_back(r);
  }
  std::ifstream mf(meta_path);
  if (!mf) throw input_error("cannot read " + meta_path.string());
  json m;
  try {
    m = json::parse(mf);
  } catch (const json::exception& e) {
    throw input_error(meta_path.string() + ": " + e.what());
  }
  if (!m.is_object()) throw input_error(meta_path.string() + ": expected an object");
  for (const auto& [key, value] : m.items()) {
    if (key == "P_c_unit") {
      if (!value.is_string()) throw input_error("P_c_unit must be a string");
      d.metadata.p_c_unit = parse_unit(value.get<std::string>(), meta_path.string());
      continue;
    }
    std::optional<double>* slot = key == "f_p0" ? &d.metadata.f_p0
                                  : key == "f_c" ? &d.metadata.f_c
                                  : key == "P_c" ? &d.metadata.p_c
                                                 : nullptr;
    if (!slot) throw input_error(meta_path.string() + ": unknown field '" + key + "'");
    if (!value.is_number()) throw input_error(meta_path.string() + ": '" + key + "' must be a number");
    *slot = value.get<double>();
  }
  return d;
}

void cmd_fit(Context& c) {
  if (c.text("data").empty() || c.text("metadata").empty())
    throw input_error("fit needs both 'data' and 'metadata' paths");
  const auto pts = normalize(read_measurements(c.text("data"), c.text("metadata")));
  FitOptions o;
  o.restarts = c.integer("restarts");
  o.seed = c.seed;
  o.anchor = c.text("anchor") == "peak" ? Anchor::peak : Anchor::cusp;
  o.dk_gamma1_ratio = c.num("dk_gamma1_ratio");
  o.dk_omega_k_ratio = c.num("dk_omega_k_ratio");
  const auto blo = c.maybe("bound_lo"), bhi = c.maybe("bound_hi");
  const std::string which = c.text("model");
  if ((blo || bhi) && which == "both") throw input_error("bounds apply to a single model; set model to RD or DK");
  if (blo || bhi) {
    if (!blo || !bhi) throw input_error("bound_lo and bound_hi must be given together");
    o.bounds = FitBounds{*blo, *bhi};
  }
  std::vector<FitResult> fits;
  for (const auto m : {ModelTag::rd, ModelTag::dk}) {
    if (which != "both" && which != to_string(m)) continue;
    o.model = m;
    fits.push_back(fit_model(pts, o));
  }
  json doc;
  json arr = json::array();
  for (const auto& f : fits) {
    json per = json::array();
    for (std::size_t k = 0; k < pts.size(); ++k)
      per.push_back({{"x", pts[k].x},
                     {"y", pts[k].y},
                     {"kind", to_string(pts[k].kind)},
                     {"distance", f.per_point[k]},
                     {"matched", to_string(f.matched[k])}});
    arr.push_back({{"model", to_string(f.model)},
                   {"params", f.parameters},
                   {"residual", f.residual},
                   {"iterations", f.iterations},
                   {"restarts_converged", f.restarts_converged},
                   {"per_point", per}});
  }
  std::vector<std::size_t> order(fits.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fits[a].residual < fits[b].residual; });
  json ranking = json::array();
  for (auto i : order) ranking.push_back(to_string(fits[i].model));
  doc["fits"] = arr;
  doc["ranking"] = ranking;
  write_json(c, "fit.json", doc);
}

void cmd_material(Context& c) {
  MaterialInput in;
  in.ms = c.num("ms");
  in.kc1 = c.num("kc1");
  in.rho_s_cm3 = c.num("rho_s_cm3");
  in.radius = c.num("radius");
  in.mu0_hs = c.maybe("mu0_hs");
  const auto r = material_rates(in);
  json doc;
  doc["n_s"] = r.n_s;
  doc["omega_k_hz"] = r.omega_k_hz;
  doc["omega_k_rad_s"] = r.omega_k_rad_s;
  doc["f_m_hz"] = r.f_m_hz ? json(*r.f_m_hz) : json(nullptr);
  doc["omega_m_rad_s"] = r.omega_m_rad_s ? json(*r.omega_m_rad_s) : json(nullptr);
  write_json(c, "material.json", doc);
}

std::vector<Command> commands() {
  using F = FieldType;
  std::vector<Command> cmds;
  cmds.push_back({"evolve", "integrate the master equation to steady state",
                  join(join(spin_fields(), integration_fields(100.0)),
                       std::vector<Field>{{"frame", F::text, "rotating", {"rotating", "lab"}},
                                          {"initial", F::text, "thermal", {"thermal", "up", "down"}},
                                          {"record_every", F::integer, 100}}),
                  cmd_evolve});
  cmds.push_back({"sweep", "quasi-static hysteresis sweep in the rotating frame",
                  join(join(spin_fields(), integration_fields(200.0)),
                       std::vector<Field>{{"axis", F::text, "detuning", {"detuning", "drive"}},
                                          {"from", F::number, 0.0},
                                          {"to", F::number, 1.0},
                                          {"n_points", F::integer, 101},
                                          {"direction", F::text, "both", {"up", "down", "both"}}}),
                  cmd_sweep});
  cmds.push_back({"rd-map", "RD stability map over (delta, W)",
                  {{"D", F::number, 3.0},
                   {"delta_lo", F::number, -2.0},
                   {"delta_hi", F::number, 8.0},
                   {"w_lo", F::number, 0.0},
                   {"w_hi", F::number, 10.0},
                   {"n_delta", F::integer, 201},
                   {"n_w", F::integer, 201}},
                  cmd_rd_map});
  cmds.push_back({"rd-curves", "RD response curves z(delta) and jump boundaries",
                  {{"D", F::number, 3.0},
                   {"w_list", F::numbers, json::array({0.1, 0.5, 1.0, 2.0, 4.0})},
                   {"delta_lo", F::number, -2.0},
                   {"delta_hi", F::number, 8.0},
                   {"n_delta", F::integer, 401},
                   {"n_jump", F::integer, 400}},
                  cmd_rd_curves});
  cmds.push_back({"rd-onset", "RD onset (cusp) points", {{"D", F::number, 3.0}}, cmd_rd_onset});
  cmds.push_back({"dk-map", "DK stability map in onset-normalized coordinates",
                  join(dk_fields(), std::vector<Field>{{"wd_lo_r", F::number, 0.0},
                                                       {"wd_hi_r", F::number, 3.0},
                                                       {"p_lo_r", F::number, 0.0},
                                                       {"p_hi_r", F::number, 6.0},
                                                       {"n_wd", F::integer, 201},
                                                       {"n_p", F::integer, 201}}),
                  cmd_dk_map});
  cmds.push_back({"dk-reflectivity", "DK reflectivity of every steady state along a detuning sweep",
                  join(dk_fields(), std::vector<Field>{{"omega1", F::number, 100.0},
                                                       {"wd_lo", F::number, -8.0},
                                                       {"wd_hi", F::number, 2.0},
                                                       {"n", F::integer, 401}}),
                  cmd_dk_reflectivity});
  cmds.push_back({"dk-basins", "DK basins of attraction and separatrix",
                  join(dk_fields(), std::vector<Field>{{"omega1", F::number, 100.0},
                                                       {"omega_d", F::optional_number, nullptr},
                                                       {"re_lo", F::number, 0.0},
                                                       {"re_hi", F::number, 0.0},
                                                       {"im_lo", F::number, 0.0},
                                                       {"im_hi", F::number, 0.0},
                                                       {"n_re", F::integer, 100},
                                                       {"n_im", F::integer, 100},
                                                       {"dt", F::number, 0.01},
                                                       {"t_max", F::number, 400.0},
                                                       {"bisection_steps", F::integer, 30}}),
                  cmd_dk_basins});
  cmds.push_back({"classical", "classical spin trajectory and limit-cycle report",
                  {{"omega0", F::number, 1.0},
                   {"omega_k", F::number, 0.5},
                   {"omega_a", F::number, 50.0},
                   {"omega1", F::number, 30.0},
                   {"omega_t", F::number, 1.00001},
                   {"t1", F::optional_number, 0.01},
                   {"t2", F::optional_number, 0.01},
                   {"sz0", F::number, 0.9},
                   {"p0", F::numbers, json::array({0.0, 0.0, 0.9})},
                   {"dt", F::number, 0.0},
                   {"t_max", F::number, 0.0},
                   {"record_every", F::integer, 10},
                   {"frame", F::text, "lab", {"lab", "rotating"}},
                   {"transient_periods", F::integer, 50}},
                  cmd_classical});
  cmds.push_back({"imd", "intermodulation conversion gain spectrum",
                  {{"omega_k", F::number, -4.0 * std::sqrt(3.0)},
                   {"t1", F::number, 1.0},
                   {"t2", F::number, 1.0},
                   {"pz0", F::number, -1.0},
                   {"omega1", F::number, std::sqrt(2.0)},
                   {"omega_d", F::number, 2.5},
                   {"branch", F::text, "high_z", {"unspecified", "high_z", "low_z"}},
                   {"omega_a", F::number, 0.1},
                   {"omega_t", F::number, 1.0},
                   {"gamma1", F::number, 1.0},
                   {"omega_lo", F::optional_number, nullptr},
                   {"omega_hi", F::optional_number, nullptr},
                   {"n", F::integer, 1001}},
                  cmd_imd});
  cmds.push_back({"fit", "normalize measured peak and jump points and fit RD and DK theory",
                  {{"data", F::path, ""},
                   {"metadata", F::path, ""},
                   {"model", F::text, "both", {"RD", "DK", "both"}},
                   {"restarts", F::integer, 4},
                   {"anchor", F::text, "cusp", {"cusp", "peak"}},
                   {"bound_lo", F::optional_number, nullptr},
                   {"bound_hi", F::optional_number, nullptr},
                   {"dk_gamma1_ratio", F::number, 0.4},
                   {"dk_omega_k_ratio", F::number, -0.01}},
                  cmd_fit});
  cmds.push_back({"material", "anisotropy and magnon rates from material constants",
                  {{"ms", F::number, 140e3},
                   {"kc1", F::number, -610.0},
                   {"rho_s_cm3", F::number, 4.2e21},
                   {"radius", F::number, 125e-6},
                   {"mu0_hs", F::optional_number, nullptr}},
                  cmd_material});
  return cmds;
}

std::string usage(const std::vector<Command>& cmds) {
  std::string s = "usage: bistab <subcommand> [--config FILE] [--out DIR] [--seed N] [--threads N] [--<field> VALUE]...\n\n"
                  "subcommands:\n";
  for (const auto& c : cmds) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %-16s %s\n", c.name.c_str(), c.help.c_str());
    s += buf;
  }
  s += "\nRun 'bistab <subcommand> --help' to list the fields of a subcommand.\n";
  return s;
}

json resolve_params(const Command& cmd, const std::string& config_path, const std::map<std::string, std::string>& raw) {
  json params = json::object();
  for (const auto& f : cmd.fields) params[f.name] = f.fallback;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw input_error("cannot read config " + config_path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw input_error("config " + config_path + ": " + e.what());
    }
    if (!doc.is_object()) throw input_error("config " + config_path + ": expected a JSON object");
    const fs::path base = fs::path(config_path).parent_path();
    for (const auto& [key, value] : doc.items()) {
      const auto it = std::find_if(cmd.fields.begin(), cmd.fields.end(), [&](const Field& f) { return f.name == key; });
      if (it == cmd.fields.end()) throw input_error("config " + config_path + ": unknown field '" + key + "'");
      check_field(*it, value);
      params[key] = value;
      if (it->type == FieldType::path && !value.get<std::string>().empty()) {
        const fs::path p(value.get<std::string>());
        if (p.is_relative()) params[key] = (base / p).string();
      }
    }
  }
  for (const auto& f : cmd.fields) {
    const auto it = raw.find(f.name);
    if (it == raw.end()) continue;
    params[f.name] = parse_override(f, it->second);
    check_field(f, params[f.name]);
  }
  return params;
}

int run_command(const Command& cmd, const std::string& config, const std::string& out_dir, std::uint64_t seed,
                int threads, const std::map<std::string, std::string>& overrides, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx;
  ctx.params = resolve_params(cmd, config, overrides);
  ctx.seed = seed;
  if (threads < 1) throw input_error("--threads must be at least 1");
  ctx.threads = threads;
  ctx.out = out_dir;
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec || !fs::is_directory(ctx.out)) throw input_error("cannot create output directory " + out_dir);
  {
    const fs::path probe = ctx.out / ".bistab_write_probe";
    std::ofstream f(probe);
    if (!f) throw input_error("output directory " + out_dir + " is not writable");
    f.close();
    fs::remove(probe, ec);
  }
  json inputs = {{"subcommand", cmd.name}, {"params", ctx.params}, {"seed", seed}};
  ctx.config_hash = [&] {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a_64(inputs.dump())));
    return std::string(buf);
  }();

  cmd.body(ctx);

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest;
  manifest["tool"] = "bistab";
  manifest["version"] = kVersion;
  manifest["subcommand"] = cmd.name;
  manifest["inputs"] = inputs;
  manifest["threads"] = threads;
  manifest["config_hash"] = ctx.config_hash;
  manifest["wall_time_s"] = wall;
  json arts = json::array();
  for (const auto& a : ctx.artifacts) arts.push_back({{"path", a}, {"config_hash", ctx.config_hash}});
  manifest["artifacts"] = arts;
  const std::string name = "manifest_" + cmd.name + ".json";
  std::ofstream mf(ctx.out / name, std::ios::binary | std::ios::trunc);
  if (!mf) throw input_error("cannot write manifest");
  mf << manifest.dump(2) << '\n';
  for (const auto& a : ctx.artifacts) out << (ctx.out / a).string() << '\n';
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const auto cmds = commands();
  if (argc < 2) {
    err << usage(cmds);
    return 2;
  }
  const std::string sub = argv[1];
  if (sub == "--help" || sub == "-h" || sub == "help") {
    out << usage(cmds);
    return 0;
  }
  if (sub == "--version") {
    out << "bistab " << kVersion << '\n';
    return 0;
  }
  const auto it = std::find_if(cmds.begin(), cmds.end(), [&](const Command& c) { return c.name == sub; });
  if (it == cmds.end()) {
    err << "unknown subcommand '" << sub << "'\n\n" << usage(cmds);
    return 2;
  }

  CLI::App app{it->help, "bistab " + it->name};
  std::string config, out_dir = ".";
  std::uint64_t seed = 1;
  int threads = 1;
  app.add_option("--config", config, "JSON parameter document");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--threads", threads, "worker threads")->capture_default_str();
  std::map<std::string, std::string> raw;
  std::vector<std::pair<std::string, CLI::Option*>> field_opts;
  std::map<std::string, std::string> buffers;
  for (const auto& f : it->fields) {
    auto* opt = app.add_option("--" + f.name, buffers[f.name], "default " + f.fallback.dump());
    field_opts.emplace_back(f.name, opt);
  }
  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i >= 2; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "bistab " << it->name << ": " << e.what() << "\n\n" << app.help();
    return 2;
  }
  for (const auto& [name, opt] : field_opts)
    if (opt->count() > 0) raw[name] = buffers[name];

  try {
    return run_command(*it, config, out_dir, seed, threads, raw, out);
  } catch (const Error& e) {
    err << "bistab " << it->name << ": " << e.what() << '\n';
    return is_numerical(e.code()) ? 3 : 2;
  } catch (const json::exception& e) {
    err << "bistab " << it->name << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "bistab " << it->name << ": " << e.what() << '\n';
    return 3;
  }
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace bistab
