#pragma once

#include <stdexcept>
#include <cstdio>
#include <string>
#include <vector>

namespace plate_support {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "Error"; }
};

/// Input or configuration does not satisfy a documented precondition.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
  explicit ConfigError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const char* kind() const noexcept override { return "ConfigError"; }
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out;
    for (const auto& s : p) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> problems_;
};

class EmptyClampSet : public Error {
 public:
  EmptyClampSet() : Error("clamp set is empty: the plate problem is not coercive") {}
  const char* kind() const noexcept override { return "EmptyClampSet"; }
};

inline std::string detail_format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

/// An iterative solver stopped at max_iter. Carries the best iterate.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& solver, long iterations, double residual,
                std::vector<double> best = {})
      : Error(solver + " did not converge after " + std::to_string(iterations) +
              " iterations (relative residual " + detail_format(residual) + ")"),
        iterations_(iterations),
        residual_(residual),
        best_(std::move(best)) {}
  const char* kind() const noexcept override { return "NoConvergence"; }
  long iterations() const { return iterations_; }
  double residual() const { return residual_; }
  const std::vector<double>& best_iterate() const { return best_; }

 private:
  long iterations_;
  double residual_;
  std::vector<double> best_;
};

class DegenerateComponent : public Error {
 public:
  explicit DegenerateComponent(int component)
      : Error("connected component " + std::to_string(component) + " of the cracked domain has no cells") {}
  const char* kind() const noexcept override { return "DegenerateComponent"; }
};

class NoLegalMove : public Error {
 public:
  NoLegalMove() : Error("support set admits no legal move") {}
  const char* kind() const noexcept override { return "NoLegalMove"; }
};

class CenterNotOnK : public Error {
 public:
  explicit CenterNotOnK(int node) : Error("audit center node " + std::to_string(node) + " is not on K") {}
  const char* kind() const noexcept override { return "CenterNotOnK"; }
};

class BallNotInterior : public Error {
 public:
  BallNotInterior() : Error("audit ball is not contained in the domain") {}
  const char* kind() const noexcept override { return "BallNotInterior"; }
};

class CutoffTooWide : public Error {
 public:
  explicit CutoffTooWide(double h)
      : Error("cutoff support 6h = " + std::to_string(6 * h) + " exceeds the grid extent") {}
  const char* kind() const noexcept override { return "CutoffTooWide"; }
};

}  // namespace plate_support
