#pragma once

#include <Eigen/Dense>

#include <cstdlib>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace khlab {

/// Largest ambient dimension supported by the fixed-capacity vector types.
inline constexpr int kMaxDim = 8;

using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

enum class ErrorKind {
  invalid_argument,
  diverging_tail,
  singular_point,
  gluing_infeasible,
  search_failed,
  domain_too_tight,
  solver_failed,
  asymptotics_not_reached,
  level_out_of_range,
  inconclusive,
  critical_point,
  config_error,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::diverging_tail: return "diverging-tail";
    case ErrorKind::singular_point: return "singular-point";
    case ErrorKind::gluing_infeasible: return "gluing-infeasible";
    case ErrorKind::search_failed: return "search-failed";
    case ErrorKind::domain_too_tight: return "domain-too-tight";
    case ErrorKind::solver_failed: return "solver-failed";
    case ErrorKind::asymptotics_not_reached: return "asymptotics-not-reached";
    case ErrorKind::level_out_of_range: return "level-out-of-range";
    case ErrorKind::inconclusive: return "inconclusive-at-this-resolution";
    case ErrorKind::critical_point: return "critical-point";
    case ErrorKind::config_error: return "config-error";
  }
  return "unknown";
}

/// Library error. `kind()` names the failure class listed in each operation's contract.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

/// Worker count: LAB_THREADS if set and positive, else the OpenMP default.
inline int worker_count() {
  int n = 1;
#ifdef _OPENMP
  n = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("LAB_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0 && cap < n) n = cap;
  }
  return n < 1 ? 1 : n;
}

inline Point make_point(std::initializer_list<double> xs) {
  Point p(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) p[i++] = x;
  return p;
}

}  // namespace khlab
