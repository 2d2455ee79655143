#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "plate_support/audit.hpp"
#include "plate_support/biharmonic.hpp"
#include "plate_support/dual.hpp"
#include "plate_support/field_io.hpp"
#include "plate_support/optimizer.hpp"
#include "plate_support/plate3d.hpp"

namespace plate_support::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalFailure = 3 };

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"solve", "dual", "optimize", "sweep", "audit", "gamma", "probe"};
  return s;
}

// ---------------------------------------------------------------------------
// logging

enum class LogLevel { quiet, info, debug };

struct Log {
  LogLevel level = LogLevel::info;
  std::ostream* sink = &std::cerr;
  void info(const std::string& m) const {
    if (level != LogLevel::quiet) *sink << "[info] " << m << '\n';
  }
  void debug(const std::string& m) const {
    if (level == LogLevel::debug) *sink << "[debug] " << m << '\n';
  }
  void warn(const std::string& m) const {
    if (level != LogLevel::quiet) *sink << "[warn] " << m << '\n';
  }
};

/// PLATE_SUPPORT_LOG in {quiet, info, debug}; anything else falls back to info.
inline LogLevel log_level_from_env(std::string* bad = nullptr) {
  const char* v = std::getenv("PLATE_SUPPORT_LOG");
  if (!v || !*v) return LogLevel::info;
  const std::string s(v);
  if (s == "quiet") return LogLevel::quiet;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  if (bad) *bad = s;
  return LogLevel::info;
}

// ---------------------------------------------------------------------------
// hashing

/// Git blob id: sha1("blob <size>\0" + content), lowercase hex.
inline std::string git_blob_sha1(const std::string& content) {
  const std::string head = "blob " + std::to_string(content.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, head.data(), head.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) out += hex[md[i] >> 4], out += hex[md[i] & 15];
  return out;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// schema reader: collects every problem instead of stopping at the first

class Reader {
 public:
  Reader(const json* node, std::string path, std::vector<std::string>* problems)
      : node_(node), path_(std::move(path)), problems_(problems) {
    if (node_ && !node_->is_object()) {
      fail("", "must be an object");
      node_ = nullptr;
    }
  }

  bool has(const std::string& key) const { return node_ && node_->contains(key); }
  const json* raw(const std::string& key) {
    used_.insert(key);
    return has(key) ? &(*node_)[key] : nullptr;
  }

  Reader child(const std::string& key) {
    const json* c = raw(key);
    return Reader(c && !c->is_null() ? c : nullptr, where(key), problems_);
  }

  double number(const std::string& key, double def, bool (*ok)(double) = nullptr, const char* rule = "") {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number()) return fail(key, "expected a number"), def;
    const double x = v->get<double>();
    if (!std::isfinite(x) || (ok && !ok(x))) return fail(key, std::string(rule) + ", got " + v->dump()), def;
    return x;
  }

  long integer(const std::string& key, long def, long lo, long hi) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number_integer()) return fail(key, "expected an integer"), def;
    const long x = v->get<long>();
    if (x < lo || x > hi)
      return fail(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + v->dump()), def;
    return x;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number_unsigned()) return fail(key, "expected a non-negative integer"), def;
    return v->get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_boolean()) return fail(key, "expected true or false"), def;
    return v->get<bool>();
  }

  std::string choice(const std::string& key, const std::string& def, const std::vector<std::string>& allowed) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_string()) return fail(key, "expected a string"), def;
    const auto s = v->get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      return fail(key, "must be one of {" + list + "}, got \"" + s + "\""), def;
    }
    return s;
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& def, bool (*ok)(double),
                              const char* rule) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_array() || v->empty()) return fail(key, "expected a non-empty array of numbers"), def;
    std::vector<double> out;
    for (std::size_t k = 0; k < v->size(); ++k) {
      const auto& e = (*v)[k];
      if (!e.is_number() || !std::isfinite(e.get<double>()) || (ok && !ok(e.get<double>())))
        return fail(key + "[" + std::to_string(k) + "]", std::string(rule) + ", got " + e.dump()), def;
      out.push_back(e.get<double>());
    }
    return out;
  }

  void fail(const std::string& key, const std::string& msg) { problems_->push_back(where(key) + ": " + msg); }

  /// Flags keys nobody asked for (usually typos).
  void reject_unknown() {
    if (!node_) return;
    for (const auto& [k, v] : node_->items())
      if (!used_.count(k)) fail(k, "unknown field");
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json* node_;
  std::string path_;
  std::vector<std::string>* problems_;
  std::set<std::string> used_;
};

inline bool positive(double x) { return x > 0; }
inline bool non_negative(double x) { return x >= 0; }
inline bool open_unit(double x) { return x > 0 && x < 1; }
inline bool above_three(double x) { return x > 3; }

// ---------------------------------------------------------------------------
// resolved configuration

struct Config {
  int nx = 33, ny = 33;
  double delta = 1.0 / 32;

  std::string load_type = "constant";  // constant | gaussian | csv
  double load_value = 1.0;
  double cx = 0.5, cy = 0.5, sigma = 0.1, amp = 1.0;
  std::string load_path;

  std::string support_type = "boundary";  // boundary | file
  std::string support_path;

  std::uint64_t seed = 0;
  SolveOptions solver;

  OptimizerConfig optimizer;
  bool lambda_given = false;
  std::vector<double> sweep_lambdas{1e-5, 1e-4, 1e-3};

  std::string audit_source = "support";  // support | optimize
  std::vector<double> audit_radii{0.125, 0.25};
  std::vector<int> continuity_leaves;

  std::string dual_reference;

  double alpha = 4.0;
  std::vector<double> ladder{0.125, 0.0625, 0.03125};
  int nz = 9;
  std::string glue = "pre_clamped";
  double gamma_tol = 1e-9;
  bool dump_states = false;

  std::string probe_kind = "rigidity";  // rigidity | poincare | thin_poincare
  std::vector<int> cube_n{9, 13};
  double patch_radius = 0.25;
  int trials = 10;
  double eps = 1e-3;
  std::vector<double> thin_h{0.25, 0.125, 0.0625};
  int thin_nz = 3;

  // loaded inputs
  std::optional<ScalarField2D> f;
  std::optional<SupportGraph> K;
  std::optional<ScalarField2D> reference_u;
  std::string hashed_inputs;  // bytes of referenced files, in read order

  Grid2D grid() const { return Grid2D(nx, ny, delta); }
};

inline ojson to_json(const Config& c) {
  ojson j;
  j["grid"] = {{"nx", c.nx}, {"ny", c.ny}, {"delta", c.delta}, {"extent", {(c.nx - 1) * c.delta, (c.ny - 1) * c.delta}}};
  if (c.load_type == "constant") j["f"] = {{"type", "constant"}, {"value", c.load_value}};
  else if (c.load_type == "gaussian")
    j["f"] = {{"type", "gaussian"}, {"cx", c.cx}, {"cy", c.cy}, {"sigma", c.sigma}, {"amp", c.amp}};
  else j["f"] = {{"type", "csv"}, {"path", c.load_path}};
  j["support"] = c.support_type == "boundary" ? ojson{{"type", "boundary"}} : ojson{{"type", "file"}, {"path", c.support_path}};
  j["seed"] = c.seed;
  j["solver"] = {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}};
  const auto& o = c.optimizer;
  j["optimize"] = {{"lambda", o.lambda},         {"moves_per_temp", o.moves_per_temp},
                   {"temp_init", o.temp_init},   {"cooling_ratio", o.cooling_ratio},
                   {"budget", o.budget},         {"enforce_boundary", o.enforce_boundary},
                   {"warm_start", o.warm_start}};
  j["sweep"] = {{"lambdas", c.sweep_lambdas}};
  j["audit"] = {{"source", c.audit_source}, {"radii", c.audit_radii}, {"continuity_leaves", c.continuity_leaves}};
  j["dual"] = {{"reference", c.dual_reference}};
  j["gamma"] = {{"alpha", c.alpha}, {"ladder", c.ladder}, {"nz", c.nz}, {"strategy", c.glue},
                {"solver_tol", c.gamma_tol}, {"dump_states", c.dump_states}};
  j["probe"] = {{"kind", c.probe_kind}, {"cube_n", c.cube_n}, {"patch_radius", c.patch_radius},
                {"trials", c.trials}, {"eps", c.eps}, {"thin_h", c.thin_h}, {"thin_nz", c.thin_nz}};
  return j;
}

struct Validated {
  Config config;
  std::vector<std::string> warnings;
};

namespace detail {

inline void read_grid(Reader r, Config& c) {
  const bool has_n = r.has("n"), has_nx = r.has("nx") || r.has("ny"), has_delta = r.has("delta");
  double ex = 1.0, ey = 1.0;
  if (const json* e = r.raw("extent")) {
    if (e->is_number() && e->get<double>() > 0) ex = ey = e->get<double>();
    else if (e->is_array() && e->size() == 2 && (*e)[0].is_number() && (*e)[1].is_number() &&
             (*e)[0].get<double>() > 0 && (*e)[1].get<double>() > 0)
      ex = (*e)[0].get<double>(), ey = (*e)[1].get<double>();
    else r.fail("extent", "expected a positive number or [x, y]");
  }
  const long n = r.integer("n", 33, 4, 4097);
  long nx = r.integer("nx", n, 4, 4097), ny = r.integer("ny", n, 4, 4097);
  const double delta = r.number("delta", 0.0, positive, "must be > 0");
  if (has_n && has_nx) r.fail("n", "give either n or nx/ny, not both");
  if (has_delta && delta > 0) {
    const double kx = ex / delta, ky = ey / delta;
    if (std::abs(kx - std::round(kx)) > 1e-9 * kx || std::abs(ky - std::round(ky)) > 1e-9 * ky)
      r.fail("delta", "must divide the domain extents " + format_double(ex) + " x " + format_double(ey));
    const long mx = std::lround(kx) + 1, my = std::lround(ky) + 1;
    if ((has_n || has_nx) && (mx != nx || my != ny))
      r.fail("delta", "inconsistent with the node counts (extent / delta + 1 = " + std::to_string(mx) + ")");
    nx = mx, ny = my;
    c.delta = delta;
    if (nx < 4 || ny < 4) r.fail("delta", "leaves fewer than 4 nodes per axis");
  } else {
    c.delta = ex / (nx - 1);
    if (std::abs(ey / (ny - 1) - c.delta) > 1e-12 * c.delta) r.fail("extent", "cells must be square: extent_y / (ny - 1) differs");
  }
  c.nx = static_cast<int>(nx), c.ny = static_cast<int>(ny);
  r.reject_unknown();
}

}  // namespace detail

/// Fills defaults, checks ranges and regime guards, loads referenced files.
/// Every problem is collected; ConfigError lists them all.
inline Validated validate_config(const json& j, const std::string& subcommand, const fs::path& base_dir,
                                 std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::vector<std::string> problems;
  Validated out;
  Config& c = out.config;
  Reader top(&j, "", &problems);

  if (!top.has("grid")) problems.push_back("grid: required");
  detail::read_grid(top.child("grid"), c);

  // load
  if (const json* f = top.raw("f"); f && f->is_number()) {
    c.load_value = f->get<double>();
  } else {
    Reader r = top.child("f");
    c.load_type = r.choice("type", "constant", {"constant", "gaussian", "csv"});
    c.load_value = r.number("value", 1.0);
    c.cx = r.number("cx", 0.5);
    c.cy = r.number("cy", 0.5);
    c.sigma = r.number("sigma", 0.1, positive, "must be > 0");
    c.amp = r.number("amp", 1.0);
    c.load_path = r.choice("path", "", {});
    if (c.load_type == "csv" && c.load_path.empty()) r.fail("path", "required for a csv load");
    r.reject_unknown();
  }

  // support
  if (const json* s = top.raw("support"); s && s->is_string()) {
    if (s->get<std::string>() != "boundary") problems.push_back("support: string form must be \"boundary\"");
  } else {
    Reader r = top.child("support");
    c.support_type = r.choice("type", "boundary", {"boundary", "file"});
    c.support_path = r.choice("path", "", {});
    if (c.support_type == "file" && c.support_path.empty()) r.fail("path", "required for a support file");
    r.reject_unknown();
  }

  c.seed = top.unsigned_integer("seed", 0);
  if (seed_override) c.seed = *seed_override;

  {
    Reader r = top.child("solver");
    c.solver.tol = r.number("tol", 1e-10, positive, "must be > 0");
    c.solver.max_iter = r.integer("max_iter", 0, 0, 1L << 40);
    r.reject_unknown();
  }
  {
    Reader r = top.child("optimize");
    auto& o = c.optimizer;
    c.lambda_given = r.has("lambda");
    o.lambda = r.number("lambda", 1.0, non_negative, "must be >= 0");
    o.moves_per_temp = static_cast<int>(r.integer("moves_per_temp", 20, 1, 1000000));
    o.temp_init = r.number("temp_init", -1.0, [](double x) { return x > 0 || x == -1.0; }, "must be > 0 (or -1 for automatic)");
    o.cooling_ratio = r.number("cooling_ratio", 0.95, open_unit, "must lie in (0, 1)");
    o.budget = r.integer("budget", 200, 1, 100000000);
    o.enforce_boundary = r.boolean("enforce_boundary", true);
    o.warm_start = r.boolean("warm_start", true);
    r.reject_unknown();
  }
  {
    Reader r = top.child("sweep");
    c.sweep_lambdas = r.numbers("lambdas", c.sweep_lambdas, non_negative, "must be >= 0");
    if (!std::is_sorted(c.sweep_lambdas.begin(), c.sweep_lambdas.end())) r.fail("lambdas", "must be sorted ascending");
    r.reject_unknown();
  }
  {
    Reader r = top.child("audit");
    c.audit_source = r.choice("source", "support", {"support", "optimize"});
    c.audit_radii = r.numbers("radii", c.audit_radii, positive, "must be > 0");
    if (const json* v = r.raw("continuity_leaves")) {
      if (!v->is_array()) r.fail("continuity_leaves", "expected an array of non-negative integers");
      else
        for (const auto& e : *v) {
          if (!e.is_number_unsigned()) {
            r.fail("continuity_leaves", "expected an array of non-negative integers");
            break;
          }
          c.continuity_leaves.push_back(e.get<int>());
        }
    }
    r.reject_unknown();
  }
  {
    Reader r = top.child("dual");
    c.dual_reference = r.choice("reference", "", {});
    r.reject_unknown();
  }
  {
    Reader r = top.child("gamma");
    c.alpha = r.number("alpha", 4.0, above_three, "must be > 3 (beta > 4, the biharmonic regime)");
    c.ladder = r.numbers("ladder", c.ladder, positive, "must be > 0");
    c.nz = static_cast<int>(r.integer("nz", 9, 2, 1025));
    c.glue = r.choice("strategy", "pre_clamped", {"pre_clamped", "smooth_cutoff"});
    c.gamma_tol = r.number("solver_tol", 1e-9, positive, "must be > 0");
    c.dump_states = r.boolean("dump_states", false);
    r.reject_unknown();
  }
  {
    Reader r = top.child("probe");
    c.probe_kind = r.choice("kind", "rigidity", {"rigidity", "poincare", "thin_poincare"});
    if (const json* v = r.raw("cube_n")) {
      c.cube_n.clear();
      if (!v->is_array() || v->empty()) r.fail("cube_n", "expected a non-empty array of integers >= 3");
      else
        for (const auto& e : *v) {
          if (!e.is_number_integer() || e.get<int>() < 3 || e.get<int>() > 129) {
            r.fail("cube_n", "entries must be integers in [3, 129], got " + e.dump());
            break;
          }
          c.cube_n.push_back(e.get<int>());
        }
    }
    c.patch_radius = r.number("patch_radius", 0.25, positive, "must be > 0");
    c.trials = static_cast<int>(r.integer("trials", 10, 1, 100000));
    c.eps = r.number("eps", 1e-3, positive, "must be > 0");
    c.thin_h = r.numbers("thin_h", c.thin_h, positive, "must be > 0");
    c.thin_nz = static_cast<int>(r.integer("thin_nz", 3, 2, 257));
    r.reject_unknown();
  }
  top.raw("comment");
  top.reject_unknown();

  if (subcommand == "sweep" && c.sweep_lambdas.empty()) problems.push_back("sweep.lambdas: required");
  if ((subcommand == "optimize" || subcommand == "audit") && !c.lambda_given)
    out.warnings.push_back("optimize.lambda not set; using 1.0 (unit weight on length)");

  // files, only once the grid is trustworthy
  if (problems.empty()) {
    const Grid2D g = c.grid();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    try {
      if (c.load_type == "constant") c.f = ScalarField2D(g, c.load_value);
      else if (c.load_type == "gaussian")
        c.f = ScalarField2D::sample(g, [&](double x, double y) {
          return c.amp * std::exp(-((x - c.cx) * (x - c.cx) + (y - c.cy) * (y - c.cy)) / (2 * c.sigma * c.sigma));
        });
      else {
        const auto bytes = slurp(resolve(c.load_path));
        c.hashed_inputs += bytes;
        std::istringstream is(bytes);
        c.f = read_matrix(is, g);
      }
    } catch (const ConfigError& e) {
      problems.push_back(std::string("f: ") + e.what());
    }
    try {
      if (c.support_type == "boundary") c.K = SupportGraph::boundary(g);
      else {
        const auto bytes = slurp(resolve(c.support_path));
        c.hashed_inputs += bytes;
        std::istringstream is(bytes);
        auto K = read_support(is);
        if (!K.grid().same_shape(g) || std::abs(K.grid().delta() - g.delta()) > 1e-12 * g.delta())
          throw ConfigError("support grid " + std::to_string(K.grid().nx()) + "x" + std::to_string(K.grid().ny()) +
                            " differs from the configured grid");
        c.K = std::move(K);
      }
    } catch (const ConfigError& e) {
      problems.push_back(std::string("support: ") + e.what());
    }
    if (subcommand == "dual" && !c.dual_reference.empty()) {
      try {
        const auto bytes = slurp(resolve(c.dual_reference));
        c.hashed_inputs += bytes;
        std::istringstream is(bytes);
        c.reference_u = read_matrix(is, g);
      } catch (const ConfigError& e) {
        problems.push_back(std::string("dual.reference: ") + e.what());
      }
    }
    if (subcommand == "audit" && !c.continuity_leaves.empty() && c.audit_source == "support" && c.K &&
        c.K->edges().empty())
      problems.push_back("audit.continuity_leaves: support has no edges to strip");
  }
  if (!problems.empty()) throw ConfigError(problems);
  c.optimizer.seed = c.seed;
  c.optimizer.solver_tol = c.solver.tol;
  return out;
}

// ---------------------------------------------------------------------------
// run

struct Options {
  std::string subcommand;
  std::string config_path;
  std::string out_dir = "plate_run";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool oracle = false;
};

/// Everything a run writes goes through here so the file list lands in the record.
class RunDir {
 public:
  explicit RunDir(fs::path root) : root_(std::move(root)) {}
  const fs::path& root() const { return root_; }
  void text(const std::string& name, const std::string& body) {
    std::ofstream os(root_ / name, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + (root_ / name).string());
    os << body;
    files_.push_back(name);
  }
  void csv(const std::string& name, const CsvTable& t) {
    std::ostringstream ss;
    t.write(ss);
    text(name, ss.str());
  }
  void matrix(const std::string& name, const ScalarField2D& u) {
    std::ostringstream ss;
    write_matrix(ss, u);
    text(name, ss.str());
  }
  void support(const std::string& name, const SupportGraph& K) {
    std::ostringstream ss;
    write_support(ss, K);
    text(name, ss.str());
  }
  void note_binary(const std::string& name) { files_.push_back(name); }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

namespace detail {

inline std::vector<int> all_nodes(const SupportGraph& K) { return K.nodes(); }

inline ojson solve_json(const SolveReport& r) {
  return {{"iterations", r.iterations},
          {"residual_norm", r.residual_norm},
          {"compliance", r.compliance},
          {"hessian_energy", r.hessian_energy}};
}

inline ojson run_solve(const Config& c, const Options& opt, RunDir& dir, std::vector<std::string>& warnings, const Log& log) {
  const auto sys = assemble(*c.K, *c.f);
  log.info("solve: " + std::to_string(sys.free_count()) + " free nodes");
  const auto [u, rep] = solve(sys, c.solver);
  ojson res = solve_json(rep);
  res["scheme"] = sys.scheme == ClampScheme::sector_ghost ? "sector_ghost" : "one_ring_hessian";
  res["free_nodes"] = sys.free_count();
  res["max_abs_u"] = max_abs(u);
  res["length"] = length(*c.K);
  res["compliance_identity"] = compliance_identity_check(u, *c.f, sys);
  if (opt.oracle) {
    if (sys.free_count() > 4096) {
      warnings.push_back("oracle skipped: more than 4096 free nodes");
    } else {
      const auto ref = solve_dense(sys).first;
      double diff = 0.0;
      for (int n = 0; n < u.grid().size(); ++n) diff = std::max(diff, std::abs(u[n] - ref[n]));
      res["oracle"] = {{"max_abs_difference", diff}, {"dense_compliance_identity", compliance_identity_check(ref, *c.f, sys)}};
    }
  }
  dir.matrix("u.txt", u);
  std::ostringstream ss;
  write_field_csv(ss, u);
  dir.text("u.csv", ss.str());
  dir.support("support.txt", *c.K);
  return res;
}

inline ojson run_dual(const Config& c, const Options& opt, RunDir& dir, std::vector<std::string>& warnings, const Log& log) {
  double primal = 0.0;
  ojson res;
  if (c.reference_u) {
    primal = trapezoid_inner(*c.reference_u, *c.f);
    res["primal_source"] = "reference";
  } else {
    primal = solve_plate(*c.K, *c.f, c.solver).second.compliance;
    res["primal_source"] = "solve";
  }
  if (opt.oracle) warnings.push_back("--oracle has no effect for dual");
  auto sol = dual_for(*c.K, *c.f);
  record_gap(primal, sol.report);
  log.info("dual: gap " + format_double(sol.report.gap_rel));
  const auto& r = sol.report;
  res["primal_compliance"] = primal;
  res["dual_value"] = r.dual_value;
  res["gap_abs"] = r.gap_abs;
  res["gap_rel"] = r.gap_rel;
  res["iterations"] = r.iterations;
  res["residual_norm"] = r.residual_norm;
  res["components"] = r.gauge_info.size();
  CsvTable t({"delta", "primal", "dual", "gap_abs", "gap_rel"});
  t.add_numbers({c.delta, primal, r.dual_value, r.gap_abs, r.gap_rel});
  dir.csv("dual.csv", t);
  return res;
}

inline CsvTable trace_table(const RunRecord& rec) {
  CsvTable t({"step", "solves", "move", "objective", "compliance", "length", "temperature", "best_objective", "tie"});
  for (const auto& e : rec.trace)
    t.add({std::to_string(e.step), std::to_string(e.solves), move_name(e.kind), format_double(e.objective),
           format_double(e.compliance), format_double(e.length), format_double(e.temperature),
           format_double(e.best_objective), e.tie ? "1" : "0"});
  return t;
}

inline ojson record_json(const RunRecord& rec) {
  return {{"status", rec.status},           {"best_objective", rec.best_objective},
          {"best_compliance", rec.best_compliance}, {"best_length", rec.best_length},
          {"best_edges", rec.best.edges().size()},  {"solves", rec.solves},
          {"proposals", rec.proposals},     {"ties", rec.ties},
          {"accepted", rec.trace.size() - 1}};
}

inline OptimizerConfig optimizer_config(const Config& c) {
  OptimizerConfig o = c.optimizer;
  if (c.support_type == "file") o.initial = *c.K;
  return o;
}

inline ojson run_optimize(const Config& c, const Options&, RunDir& dir, std::vector<std::string>&, const Log& log) {
  const auto rec = optimize(*c.f, optimizer_config(c));
  log.info("optimize: " + rec.status + ", best objective " + format_double(rec.best_objective));
  dir.csv("trace.csv", trace_table(rec));
  dir.support("best_support.txt", rec.best);
  dir.matrix("u_best.txt", solve_plate(rec.best, *c.f, c.solver).first);
  return record_json(rec);
}

inline ojson run_sweep(const Config& c, const Options&, RunDir& dir, std::vector<std::string>&, const Log& log) {
  const auto rows = pareto_sweep(*c.f, c.sweep_lambdas, optimizer_config(c));
  CsvTable t({"lambda", "compliance", "length", "objective", "edges"});
  ojson res = ojson::array();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    t.add_numbers({r.lambda, r.compliance, r.length, r.objective, static_cast<double>(r.K.edges().size())});
    dir.support("support_" + std::to_string(k) + ".txt", r.K);
    res.push_back({{"lambda", r.lambda}, {"compliance", r.compliance}, {"length", r.length}, {"objective", r.objective}});
    log.debug("sweep: lambda " + format_double(r.lambda) + " length " + format_double(r.length));
  }
  dir.csv("pareto.csv", t);
  return {{"rows", res}};
}

inline ojson run_audit(const Config& c, const Options&, RunDir& dir, std::vector<std::string>& warnings, const Log& log) {
  ojson res;
  SupportGraph K = *c.K;
  if (c.audit_source == "optimize") {
    const auto rec = optimize(*c.f, optimizer_config(c));
    K = rec.best;
    res["optimizer"] = record_json(rec);
    dir.support("audited_support.txt", K);
  }
  const auto in = AuditInput::from(K, *c.f, c.optimizer.lambda);
  const auto a = ahlfors_audit(in, K.nodes(), c.audit_radii);
  const auto& g = K.grid();
  CsvTable at({"center_i", "center_j", "r", "energy", "length", "lower_checked", "lower_violation", "upper_ratio"});
  for (const auto& b : a.balls)
    at.add({std::to_string(g.ij(b.center).i), std::to_string(g.ij(b.center).j), format_double(b.r), format_double(b.energy),
            format_double(b.length), b.lower_checked ? "1" : "0", b.lower_violation ? "1" : "0", format_double(b.feasible_ratio)});
  dir.csv("ahlfors.csv", at);
  res["ahlfors"] = {{"balls", a.balls.size()},          {"lower_checked", a.lower_checked},
                    {"lower_violations", a.lower_violations}, {"c_min", a.c_min},
                    {"c_upper", a.c_upper},              {"diam", a.diam}};
  // Griffith balls must sit inside the domain: filter centres per radius
  GriffithReport gr;
  for (double r : c.audit_radii) {
    std::vector<int> centres;
    for (int n : K.nodes()) {
      const auto p = g.position(n);
      if (p[0] - r >= g.origin()[0] && p[1] - r >= g.origin()[1] && p[0] + r <= g.origin()[0] + g.extent_x() &&
          p[1] + r <= g.origin()[1] + g.extent_y())
        centres.push_back(n);
    }
    if (centres.empty()) continue;
    const auto part = griffith_competitor_audit(in, centres, {r}, true);
    gr.balls.insert(gr.balls.end(), part.balls.begin(), part.balls.end());
    gr.calibrated_C = std::max(gr.calibrated_C, part.calibrated_C);
  }
  CsvTable gt({"center_i", "center_j", "r", "minimizer_side", "competitor_side", "excess"});
  for (const auto& b : gr.balls)
    gt.add({std::to_string(g.ij(b.center).i), std::to_string(g.ij(b.center).j), format_double(b.r),
            format_double(b.minimizer_side), format_double(b.competitor_side), format_double(b.excess)});
  dir.csv("griffith.csv", gt);
  res["griffith"] = {{"balls", gr.balls.size()}, {"calibrated_C", gr.calibrated_C}};
  if (gr.balls.empty()) warnings.push_back("griffith: no ball centred on K lies inside the domain");
  if (!c.continuity_leaves.empty()) {
    const auto seq = leaf_removal_sequence(K, c.continuity_leaves);
    const auto cr = continuity_audit(*c.f, seq);
    CsvTable ct({"leaves", "set_distance", "field_distance"});
    for (std::size_t k = 0; k < cr.rows.size(); ++k)
      ct.add({std::to_string(c.continuity_leaves[k]), format_double(cr.rows[k].set_distance),
              format_double(cr.rows[k].field_distance)});
    dir.csv("continuity.csv", ct);
    res["continuity"] = {{"field_monotone", cr.field_monotone}, {"final_field_distance", cr.final_field_distance}};
  }
  log.info("audit: " + std::to_string(a.lower_violations) + " lower-bound violations, c_upper " + format_double(a.c_upper));
  return res;
}

inline ojson run_gamma(const Config& c, const Options& opt, RunDir& dir, std::vector<std::string>& warnings, const Log& log) {
  GammaOptions go;
  go.nz = c.nz;
  go.strategy = c.glue == "smooth_cutoff" ? GlueStrategy::smooth_cutoff : GlueStrategy::pre_clamped;
  go.solver_tol = c.gamma_tol;
  go.threads = opt.threads;
  const auto rep = gamma_limit_experiment(*c.K, *c.f, c.alpha, c.ladder, go);
  // the field the experiment fed to the recovery map at thickness h
  auto recovery_field = [&](double h) {
    SolveOptions so;
    so.tol = c.gamma_tol;
    auto u = solve_plate(go.strategy == GlueStrategy::pre_clamped ? glue_support(*c.K, h) : *c.K, *c.f, so).first;
    for (auto& x : u.values()) x *= 12.0;
    return u;
  };
  CsvTable t({"h", "E_h", "J_h", "scaled", "gap_to_I"});
  ojson rows = ojson::array();
  bool decreasing = true;
  for (std::size_t k = 0; k < rep.rows.size(); ++k) {
    const auto& r = rep.rows[k];
    t.add_numbers({r.h, r.energy.elastic, r.energy.total, r.energy.scaled, r.gap_abs});
    const auto id = identity_energy(c.grid(), *c.f, r.h, c.alpha, c.nz);
    rows.push_back({{"h", r.h},
                    {"scaled", r.energy.scaled},
                    {"gap_rel", r.gap_rel},
                    {"glue_violation", r.glue_violation},
                    {"glued_nodes", r.glued_nodes},
                    {"u_h_distance", r.u_h_distance},
                    {"w_h_norm", r.w_h_norm},
                    {"identity_J", id.total}});
    if (k > 0 && !(r.gap_rel < rep.rows[k - 1].gap_rel)) decreasing = false;
    log.info("gamma: h " + format_double(r.h) + " gap " + format_double(r.gap_rel));
    if (c.dump_states) {
      const auto st = recovery_sequence(recovery_field(r.h), VectorField2D(c.grid()), r.h, c.alpha, *c.K,
                                        RecoveryOptions{c.nz, go.strategy});
      const std::string name = "state_" + std::to_string(k) + ".bin";
      save_state((dir.root() / name).string(), st);
      dir.note_binary(name);
    }
  }
  dir.csv("ladder.csv", t);
  const bool final_ok = !rep.rows.empty() && rep.rows.back().gap_rel < 0.05;
  if (!decreasing) warnings.push_back("gamma: gap column is not strictly decreasing");
  if (!final_ok) warnings.push_back("gamma: final relative gap " + format_double(rep.rows.back().gap_rel) + " is not below 5%");
  return {{"alpha", rep.alpha},           {"beta", rep.beta},
          {"limit_value", rep.limit_value}, {"compliance", rep.compliance},
          {"convention", rep.convention}, {"strategy", rep.strategy},
          {"rows", rows},                 {"checks", {{"gap_strictly_decreasing", decreasing}, {"final_gap_below_5pct", final_ok}}}};
}

inline ojson run_probe(const Config& c, const Options&, RunDir& dir, std::vector<std::string>&, const Log& log) {
  ojson res;
  res["kind"] = c.probe_kind;
  if (c.probe_kind == "rigidity") {
    CsvTable t({"n", "trial", "ratio", "linearized"});
    ojson per = ojson::array();
    double lo = INFINITY, hi = 0.0;
    for (int n : c.cube_n) {
      const auto r = rigidity_probe(CubeGrid{n}, c.patch_radius, c.trials, c.seed, c.eps);
      for (std::size_t k = 0; k < r.ratios.size(); ++k)
        t.add_numbers({double(n), double(k), r.ratios[k], r.linearized[k]});
      per.push_back({{"n", n}, {"max_ratio", r.max_ratio}, {"max_linearized", r.max_linearized}, {"excluded", r.excluded}});
      lo = std::min(lo, r.max_ratio), hi = std::max(hi, r.max_ratio);
      log.info("probe: cube " + std::to_string(n) + " max ratio " + format_double(r.max_ratio));
    }
    dir.csv("probe.csv", t);
    res["resolutions"] = per;
    res["spread"] = hi / lo;
  } else if (c.probe_kind == "poincare") {
    const double C = poincare_probe(*c.K);
    CsvTable t({"delta", "constant"});
    t.add_numbers({c.delta, C});
    dir.csv("probe.csv", t);
    res["constant"] = C;
  } else {
    CsvTable t({"h", "constant"});
    ojson rows = ojson::array();
    for (double h : c.thin_h) {
      const double C = thin_poincare_probe(*c.K, h, c.thin_nz);
      t.add_numbers({h, C});
      rows.push_back({{"h", h}, {"constant", C}});
    }
    dir.csv("probe.csv", t);
    res["rows"] = rows;
  }
  return res;
}

inline ojson error_json(const std::exception& e) {
  ojson j;
  const auto* pe = dynamic_cast<const Error*>(&e);
  j["kind"] = pe ? pe->kind() : "exception";
  j["message"] = e.what();
  if (const auto* ce = dynamic_cast<const ConfigError*>(&e); ce && !ce->problems().empty()) j["problems"] = ce->problems();
  if (const auto* nc = dynamic_cast<const NoConvergence*>(&e)) {
    j["iterations"] = nc->iterations();
    j["residual"] = nc->residual();
  }
  return j;
}

/// Config-side failures exit 2; anything the numerics raise exits 3.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const CutoffTooWide*>(&e) ||
      dynamic_cast<const EmptyClampSet*>(&e) || dynamic_cast<const CenterNotOnK*>(&e) ||
      dynamic_cast<const BallNotInterior*>(&e) || dynamic_cast<const json::exception*>(&e))
    return kConfigError;
  return kNumericalFailure;
}

}  // namespace detail

/// Runs one subcommand and writes run.json (always) plus its tables and dumps.
inline int run(const Options& opt, const Log& log = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ojson record;
  record["tool"] = "plate_support";
  record["subcommand"] = opt.subcommand;
  std::vector<std::string> warnings;
  ojson errors = ojson::array();
  int code = kOk;

  fs::path out(opt.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    log.warn("cannot create output directory " + out.string());
    return kConfigError;
  }
  RunDir dir(out);

  std::optional<Validated> v;
  try {
    if (std::find(subcommands().begin(), subcommands().end(), opt.subcommand) == subcommands().end())
      throw ConfigError("unknown subcommand '" + opt.subcommand + "'");
    if (opt.threads < 1) throw ConfigError("--threads must be >= 1");
    if (opt.config_path.empty()) throw ConfigError("--config is required");
    const std::string text = slurp(opt.config_path);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    v = validate_config(j, opt.subcommand, fs::path(opt.config_path).parent_path(), opt.seed);
    for (const auto& w : v->warnings) warnings.push_back(w);
    const ojson echo = to_json(v->config);
    record["config"] = echo;
    record["input_hash"] = git_blob_sha1(echo.dump() + "\n" + v->config.hashed_inputs);
    record["seed"] = v->config.seed;
    record["threads"] = opt.threads;
    record["oracle"] = opt.oracle;
    for (const auto& w : warnings) log.warn(w);
    log.debug("config: " + echo.dump());

    const Config& c = v->config;
    ojson res;
    if (opt.subcommand == "solve") res = detail::run_solve(c, opt, dir, warnings, log);
    else if (opt.subcommand == "dual") res = detail::run_dual(c, opt, dir, warnings, log);
    else if (opt.subcommand == "optimize") res = detail::run_optimize(c, opt, dir, warnings, log);
    else if (opt.subcommand == "sweep") res = detail::run_sweep(c, opt, dir, warnings, log);
    else if (opt.subcommand == "audit") res = detail::run_audit(c, opt, dir, warnings, log);
    else if (opt.subcommand == "gamma") res = detail::run_gamma(c, opt, dir, warnings, log);
    else res = detail::run_probe(c, opt, dir, warnings, log);
    record["results"] = res;
  } catch (const std::exception& e) {
    code = detail::exit_code_for(e);
    errors.push_back(detail::error_json(e));
    log.warn(e.what());
    if (const auto* nc = dynamic_cast<const NoConvergence*>(&e); nc && !nc->best_iterate().empty()) {
      std::ostringstream ss;
      for (double x : nc->best_iterate()) ss << format_double(x) << '\n';
      dir.text("best_iterate.txt", ss.str());
    }
  }
  record["status"] = code == kOk ? "ok" : code == kConfigError ? "config_error" : "numerical_failure";
  record["exit_code"] = code;
  record["warnings"] = warnings;
  record["errors"] = errors;
  record["outputs"] = dir.files();
  record["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    std::ofstream os(out / "run.json", std::ios::binary);
    os << record.dump(2) << '\n';
  }
  return code;
}

}  // namespace plate_support::cli
