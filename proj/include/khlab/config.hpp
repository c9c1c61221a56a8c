#pragma once

// Line-oriented experiment configuration: `[section]` headers, `key = value`
// lines, `#` comments. Every key is typed and has a documented default.

#include "khlab/common.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace khlab {

enum class ValueType { integer, real, real_or_auto, boolean, text, real_list, choice };

struct KeySpec {
  const char* section;
  const char* key;
  ValueType type;
  const char* fallback;
  const char* doc;
  const char* choices = "";  // '|'-separated, for ValueType::choice
};

inline const std::vector<KeySpec>& config_schema() {
  using V = ValueType;
  static const std::vector<KeySpec> schema = {
      {"experiment", "problem", V::choice, "khessian-ring", "pipeline to run",
       "khessian-ring|khessian-exterior-sweep|harmonic-exterior|radial-control|normalize-demo"},
      {"experiment", "output", V::text, "out", "output directory (created if missing)"},

      {"spec", "n", V::integer, "3", "ambient dimension"},
      {"spec", "k", V::integer, "1", "Hessian order"},
      {"spec", "a", V::real_list, "0.4, 0.4, 0.2", "diagonal of A (S_k(a) = 1 unless normalize = true)"},
      {"spec", "normalize", V::boolean, "false", "rescale a so that S_k(a) = 1"},
      {"spec", "A", V::real_list, "", "normalize-demo: full n x n matrix, row major"},
      {"spec", "b", V::real_list, "", "normalize-demo: linear term"},
      {"spec", "c", V::real, "0", "normalize-demo: constant term"},

      {"ring", "x0", V::real_list, "0, 0, 0.45", "centre of the inner ball"},
      {"ring", "eps", V::real, "1e-6", "inner radius"},
      {"ring", "eps_list", V::real_list, "", "sweep: decreasing inner radii"},
      {"ring", "R", V::real, "160", "outer level: E_R = {x^T A x / 2 < R}"},
      {"ring", "R_list", V::real_list, "", "sweep: increasing outer levels"},
      {"ring", "R0", V::real_or_auto, "auto", "profile base point (auto: 100 lambda_max)"},
      {"ring", "alpha", V::real_or_auto, "auto", "profile parameter (auto: smallest admissible)"},
      {"ring", "standing", V::boolean, "true", "enforce 0 < |x0| < 1/2 and eps < 1/2"},

      {"grid", "mode", V::choice, "auto", "full | axisym | auto (axisym when the problem allows it)",
       "auto|full|axisym"},
      {"grid", "focus", V::real, "0.25", "ring: node spacing at the inner ball, in units of eps"},
      {"grid", "h", V::real, "0.05", "harmonic: node spacing at the body"},
      {"grid", "growth", V::real, "0.1", "relative spacing growth away from the foci (0: uniform h)"},
      {"grid", "hmax", V::real, "0.5", "largest node spacing"},
      {"grid", "margin", V::real, "1.5", "padding beyond the outer boundary"},
      {"grid", "refine", V::boolean, "true", "solve again on the halved grid for the Richardson tol_h"},

      {"solver", "tol", V::real_or_auto, "auto", "normalized residual target"},
      {"solver", "max_newton", V::integer, "60", "Newton iteration cap"},
      {"solver", "max_restarts", V::integer, "3", "pseudo-time restarts after a stalled line search"},
      {"solver", "linear", V::choice, "auto", "linear solver", "auto|direct|iterative"},
      {"solver", "verbose", V::boolean, "false", "per-iteration residuals on stderr"},

      {"analysis", "witness", V::boolean, "true", "evaluate the targeted non-convexity triple"},
      {"analysis", "expect", V::choice, "none", "verdict the run must produce", "none|non-convex|convex"},
      {"analysis", "gap_rel_tol", V::real, "0.3", "allowed relative deviation of the measured witness gap"},
      {"analysis", "level_fractions", V::real_list, "", "sampled sublevel tests at t = f max u"},
      {"analysis", "pairs", V::integer, "20000", "segment pairs per level"},
      {"analysis", "points", V::integer, "65", "points per segment"},
      {"analysis", "seed", V::integer, "1", "sampler seed"},
      {"analysis", "slice_half", V::real, "0.6", "half width of the contour slice"},
      {"analysis", "slice_res", V::integer, "241", "contour slice resolution per side"},

      {"harmonic", "semi_axes", V::real_list, "1, 1, 1.5", "ellipsoid semi-axes (all equal: ball)"},
      {"harmonic", "center", V::real_list, "0, 0, 0", "body centre"},
      {"harmonic", "R_out", V::real, "16", "truncation radius"},
      {"harmonic", "fit_radii", V::real_list, "4, 6, 9", "shells for the M fit"},
      {"harmonic", "fit_tol", V::real, "0.02", "allowed relative spread of the shell estimates of M"},
      {"harmonic", "curvature_shells", V::real_list, "5, 7, 10", "shells for K |x|^{n-1}"},
      {"harmonic", "curvature_tol", V::real, "0.02", "allowed |K |x|^{n-1} - 1| at the outermost shell"},
      {"harmonic", "superlevels", V::real_list, "0.8, 0.5, 0.2", "superlevel segment tests"},
      {"harmonic", "lap_r_lo", V::real, "2", "inner radius of the superharmonicity probes"},
      {"harmonic", "lap_r_hi", V::real, "12", "outer radius of the superharmonicity probes"},
      {"harmonic", "t_list", V::real_list, "", "sweep: Minkowski parameter between the unit ball and the body"},

      {"radial", "r", V::real, "0.5", "inner radius"},
      {"radial", "rho_out", V::real, "1.5", "outer radius"},
      {"radial", "alpha", V::real, "2", "profile parameter"},
      {"radial", "h_list", V::real_list, "0.2, 0.1, 0.05", "grid spacings, coarse to fine"},
      {"radial", "half", V::real, "1.6", "grid half width"},
      {"radial", "min_order", V::real, "1.5", "required observed order on the finest pair"},
  };
  return schema;
}

inline const KeySpec* find_key(std::string_view section, std::string_view key) {
  for (const auto& k : config_schema())
    if (section == k.section && key == k.key) return &k;
  return nullptr;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

/// Checks a raw value against its type and returns the canonical spelling.
inline std::string canonical_value(const KeySpec& k, const std::string& raw, const std::string& where) {
  auto bad = [&](const std::string& why) {
    return Error(ErrorKind::config_error, where + ": " + k.section + "." + k.key + " " + why + " (got '" + raw + "')");
  };
  switch (k.type) {
    case ValueType::integer: {
      const auto v = parse_real(raw);
      if (!v || *v != std::floor(*v) || std::abs(*v) > 1e9) throw bad("expects an integer");
      return std::to_string(static_cast<long>(*v));
    }
    case ValueType::real: {
      const auto v = parse_real(raw);
      if (!v) throw bad("expects a real number");
      return format_real(*v);
    }
    case ValueType::real_or_auto: {
      if (raw == "auto") return raw;
      const auto v = parse_real(raw);
      if (!v) throw bad("expects a real number or 'auto'");
      return format_real(*v);
    }
    case ValueType::boolean:
      if (raw == "true" || raw == "yes" || raw == "on" || raw == "1") return "true";
      if (raw == "false" || raw == "no" || raw == "off" || raw == "0") return "false";
      throw bad("expects true or false");
    case ValueType::text:
      if (raw.empty()) throw bad("must not be empty");
      return raw;
    case ValueType::real_list: {
      if (raw.empty()) return raw;
      std::string out;
      for (const auto& item : split(raw, ',')) {
        const auto v = parse_real(item);
        if (!v) throw bad("expects a comma-separated list of reals");
        out += (out.empty() ? "" : ", ") + format_real(*v);
      }
      return out;
    }
    case ValueType::choice:
      for (const auto& c : split(k.choices, '|'))
        if (c == raw) return raw;
      throw bad(std::string("expects one of ") + k.choices);
  }
  return raw;
}

}  // namespace detail

class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<config>") {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = origin + ":" + std::to_string(lineno);
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = detail::trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        require(t.back() == ']' && t.size() > 2, ErrorKind::config_error, where + ": malformed section header");
        section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
        bool known = false;
        for (const auto& k : config_schema()) known = known || section == k.section;
        require(known, ErrorKind::config_error, where + ": unknown section [" + section + "]");
        continue;
      }
      const auto eq = t.find('=');
      require(eq != std::string::npos, ErrorKind::config_error, where + ": expected key = value");
      require(!section.empty(), ErrorKind::config_error, where + ": key outside any section");
      const std::string key = detail::trim(std::string_view(t).substr(0, eq));
      const std::string raw = detail::trim(std::string_view(t).substr(eq + 1));
      const KeySpec* ks = find_key(section, key);
      require(ks != nullptr, ErrorKind::config_error, where + ": unknown key " + section + "." + key);
      const std::string full = section + "." + key;
      require(!c.values_.count(full), ErrorKind::config_error, where + ": duplicate key " + full);
      c.values_[full] = detail::canonical_value(*ks, raw, where);
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    require(static_cast<bool>(f), ErrorKind::config_error, "cannot read config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  /// Effective (possibly default) canonical value.
  const std::string& raw(const std::string& section, const std::string& key) const {
    const KeySpec* ks = find_key(section, key);
    require(ks != nullptr, ErrorKind::invalid_argument, "Config: unknown key " + section + "." + key);
    const auto it = values_.find(section + "." + key);
    if (it != values_.end()) return it->second;
    auto& slot = defaults_[section + "." + key];
    if (slot.empty()) slot = detail::canonical_value(*ks, ks->fallback, "default");
    return slot;
  }
  bool given(const std::string& section, const std::string& key) const {
    return values_.count(section + "." + key) > 0;
  }

  long integer(const std::string& s, const std::string& k) const { return std::stol(raw(s, k)); }
  double real(const std::string& s, const std::string& k) const { return std::stod(raw(s, k)); }
  std::optional<double> real_or_auto(const std::string& s, const std::string& k) const {
    const auto& v = raw(s, k);
    if (v == "auto") return std::nullopt;
    return std::stod(v);
  }
  bool boolean(const std::string& s, const std::string& k) const { return raw(s, k) == "true"; }
  const std::string& text(const std::string& s, const std::string& k) const { return raw(s, k); }
  std::vector<double> list(const std::string& s, const std::string& k) const {
    std::vector<double> out;
    const auto& v = raw(s, k);
    if (v.empty()) return out;
    for (const auto& item : detail::split(v, ',')) out.push_back(std::stod(item));
    return out;
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    const KeySpec* ks = find_key(section, key);
    require(ks != nullptr, ErrorKind::config_error, "unknown key " + section + "." + key);
    values_[section + "." + key] = detail::canonical_value(*ks, value, "override");
  }

  /// Every key with its effective value, in schema order. Hashing this text
  /// makes explicit defaults and omitted keys equivalent.
  std::string canonical() const {
    std::string out, section;
    for (const auto& k : config_schema()) {
      if (section != k.section) {
        section = k.section;
        out += "[" + section + "]\n";
      }
      out += std::string(k.key) + " = " + raw(k.section, k.key) + "\n";
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> defaults_;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const Config& c) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(c.canonical())));
  return buf;
}

inline std::string defaults_text() {
  std::string out, section;
  for (const auto& k : config_schema()) {
    if (section != k.section) {
      if (!section.empty()) out += "\n";
      section = k.section;
      out += "[" + section + "]\n";
    }
    out += std::string(k.key) + " = " + k.fallback + "  # " + k.doc + "\n";
  }
  return out;
}

}  // namespace khlab
