#pragma once

// Truncated isotropic Gaussian mixtures on the plane: the ring-8 and grid-25
// benchmarks, rejection sampling inside the truncation region, the region
// diameter, prior/eval splitting and CSV / key=value serialization.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pacgen/error.hpp"
#include "pacgen/rng.hpp"

namespace pacgen::synthdata {

using Point = Eigen::Vector2d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;

struct Disc {
  Point center{0.0, 0.0};
  double radius = 1.0;
};

struct Square {
  Point center{0.0, 0.0};
  double side = 1.0;
};

using Region = std::variant<Disc, Square>;

inline bool contains(const Region& region, const Point& p) {
  return std::visit(
      [&](const auto& r) -> bool {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, Disc>) {
          return (p - r.center).norm() <= r.radius;
        } else {
          return (p - r.center).cwiseAbs().maxCoeff() <= 0.5 * r.side;
        }
      },
      region);
}

/// Largest distance between two points of the region.
inline double diameter(const Region& region) {
  return std::visit(
      [](const auto& r) -> double {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, Disc>) {
          return 2.0 * r.radius;
        } else {
          return r.side * std::numbers::sqrt2;
        }
      },
      region);
}

struct Component {
  Point mean{0.0, 0.0};
  double std = 1.0;
};

/// Mixture of isotropic Gaussians conditioned on a truncation region.
struct MixtureSpec {
  std::vector<Component> components;
  std::vector<double> weights;
  Region truncation = Disc{};

  void validate() const {
    detail::require(!components.empty(), "mixture needs at least one component");
    detail::require(weights.size() == components.size(), "one weight per component");
    double total = 0.0;
    for (double w : weights) {
      detail::require(std::isfinite(w) && w >= 0.0, "weights must be non-negative");
      total += w;
    }
    detail::require(std::abs(total - 1.0) <= 1e-12, "weights must sum to 1");
    for (const auto& c : components) {
      detail::require(c.std > 0.0 && std::isfinite(c.std), "component std must be positive");
      detail::require(contains(truncation, c.mean), "component mean outside truncation region");
    }
    std::visit(
        [](const auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, Disc>) {
            detail::require(r.radius > 0.0, "disc radius must be positive");
          } else {
            detail::require(r.side > 0.0, "square side must be positive");
          }
        },
        truncation);
  }
};

inline double diameter(const MixtureSpec& spec) { return diameter(spec.truncation); }

/// Eight equal-weight components on a circle of radius 2, truncated to a disc of radius 3.2.
inline MixtureSpec ring8_spec() {
  MixtureSpec spec;
  for (int k = 0; k < 8; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / 8.0;
    spec.components.push_back({Point(2.0 * std::cos(angle), 2.0 * std::sin(angle)), 0.02});
  }
  spec.weights.assign(8, 1.0 / 8.0);
  spec.truncation = Disc{Point(0.0, 0.0), 3.2};
  return spec;
}

/// 5x5 grid of equal-weight components at {-4,-2,0,2,4}^2, truncated to a square of side 8.2.
inline MixtureSpec grid25_spec() {
  MixtureSpec spec;
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      spec.components.push_back({Point(2.0 * i, 2.0 * j), 0.05});
    }
  }
  spec.weights.assign(25, 1.0 / 25.0);
  spec.truncation = Square{Point(0.0, 0.0), 8.2};
  return spec;
}

/// An iid draw from a mixture. `origin[i]` is the row index of point i in the
/// set it was originally drawn as (preserved by split()); `labels[i]` is the
/// mixture component that produced it.
struct SampleSet {
  Points points;
  std::uint64_t seed = 0;
  std::vector<std::size_t> origin;
  std::vector<int> labels;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
};

inline constexpr std::size_t kMaxConsecutiveRejections = 1'000'000;

/// Draws n points: pick a component by weight, draw from it, and redraw
/// (component included) until the point falls inside the truncation region.
inline SampleSet sample(const MixtureSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  auto engine = rng::stream(seed, rng::Tag::kData);
  std::discrete_distribution<int> pick(spec.weights.begin(), spec.weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);

  SampleSet out;
  out.seed = seed;
  out.points.resize(static_cast<Eigen::Index>(n), 2);
  out.origin.resize(n);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rejections = 0;
    while (true) {
      const int k = pick(engine);
      const auto& c = spec.components[static_cast<std::size_t>(k)];
      const double x = normal(engine);
      const double y = normal(engine);
      const Point p = c.mean + c.std * Point(x, y);
      if (contains(spec.truncation, p)) {
        out.points.row(static_cast<Eigen::Index>(i)) = p.transpose();
        out.labels[i] = k;
        break;
      }
      if (++rejections > kMaxConsecutiveRejections) {
        throw InvalidArgument("rejection sampling exceeded safety cap; malformed mixture spec");
      }
    }
    out.origin[i] = i;
  }
  return out;
}

inline SampleSet take_rows(const SampleSet& data, std::size_t begin, std::size_t end) {
  SampleSet out;
  out.seed = data.seed;
  out.points = data.points.middleRows(static_cast<Eigen::Index>(begin),
                                      static_cast<Eigen::Index>(end - begin));
  out.origin.assign(data.origin.begin() + static_cast<std::ptrdiff_t>(begin),
                    data.origin.begin() + static_cast<std::ptrdiff_t>(end));
  if (!data.labels.empty()) {
    out.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      data.labels.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

/// First n0 points for the prior, the remaining n - n0 for evaluation.
inline std::pair<SampleSet, SampleSet> split(const SampleSet& data, std::size_t n0) {
  const std::size_t n = data.size();
  detail::require(n0 > 0 && n0 < n, "split requires 0 < n0 < n");
  return {take_rows(data, 0, n0), take_rows(data, n0, n)};
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_csv(std::ostream& os, const Points& points) {
  os << "x,y\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    os << points(i, 0) << ',' << points(i, 1) << '\n';
  }
}

inline void write_csv(std::ostream& os, const SampleSet& data) { write_csv(os, data.points); }

inline SampleSet read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("x,y", 0) != 0) {
    throw ConfigError("sample CSV must start with header 'x,y'");
  }
  std::vector<double> xs;
  std::vector<double> ys;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ConfigError("malformed sample CSV at line " + std::to_string(lineno));
    }
    try {
      xs.push_back(std::stod(line.substr(0, comma)));
      ys.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw ConfigError("non-numeric value in sample CSV at line " + std::to_string(lineno));
    }
  }
  SampleSet out;
  out.points.resize(static_cast<Eigen::Index>(xs.size()), 2);
  out.origin.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.points(static_cast<Eigen::Index>(i), 0) = xs[i];
    out.points(static_cast<Eigen::Index>(i), 1) = ys[i];
    out.origin[i] = i;
  }
  return out;
}

// Spec files are a `[mixture]` section of key=value lines:
//
//   [mixture]
//   components=2
//   component.0.mean=2,0
//   component.0.std=0.02
//   component.0.weight=0.5
//   ...
//   truncation=disc            # or square
//   truncation.center=0,0
//   truncation.radius=3.2      # truncation.side for squares
//
// Blank lines and lines starting with '#' are ignored.

inline std::string format_spec(const MixtureSpec& spec) {
  std::ostringstream os;
  os << std::setprecision(17) << "[mixture]\n";
  os << "components=" << spec.components.size() << '\n';
  for (std::size_t k = 0; k < spec.components.size(); ++k) {
    const auto& c = spec.components[k];
    os << "component." << k << ".mean=" << c.mean.x() << ',' << c.mean.y() << '\n';
    os << "component." << k << ".std=" << c.std << '\n';
    os << "component." << k << ".weight=" << spec.weights[k] << '\n';
  }
  std::visit(
      [&](const auto& r) {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, Disc>) {
          os << "truncation=disc\ntruncation.center=" << r.center.x() << ',' << r.center.y()
             << "\ntruncation.radius=" << r.radius << '\n';
        } else {
          os << "truncation=square\ntruncation.center=" << r.center.x() << ','
             << r.center.y() << "\ntruncation.side=" << r.side << '\n';
        }
      },
      spec.truncation);
  return os.str();
}

namespace parsing {

inline double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
  }
  if (used != text.size()) throw ConfigError("key '" + key + "': trailing characters");
  return v;
}

inline Point parse_point(const std::string& key, const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("key '" + key + "': expected 'x,y'");
  return {parse_double(key, text.substr(0, comma)), parse_double(key, text.substr(comma + 1))};
}

}  // namespace parsing

inline MixtureSpec parse_spec(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  bool in_section = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line == "[mixture]") {
      in_section = true;
      continue;
    }
    if (!in_section) throw ConfigError("spec text must start with a [mixture] section");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("spec line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("spec is missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  MixtureSpec spec;
  const double count = parsing::parse_double("components", get("components"));
  if (count < 1 || count != std::floor(count)) throw ConfigError("components must be a positive integer");
  for (std::size_t k = 0; k < static_cast<std::size_t>(count); ++k) {
    const std::string prefix = "component." + std::to_string(k) + ".";
    Component c;
    c.mean = parsing::parse_point(prefix + "mean", get(prefix + "mean"));
    c.std = parsing::parse_double(prefix + "std", get(prefix + "std"));
    spec.components.push_back(c);
    spec.weights.push_back(parsing::parse_double(prefix + "weight", get(prefix + "weight")));
  }
  const std::string kind = get("truncation");
  const Point center = parsing::parse_point("truncation.center", get("truncation.center"));
  if (kind == "disc") {
    spec.truncation = Disc{center, parsing::parse_double("truncation.radius", get("truncation.radius"))};
  } else if (kind == "square") {
    spec.truncation = Square{center, parsing::parse_double("truncation.side", get("truncation.side"))};
  } else {
    throw ConfigError("truncation must be 'disc' or 'square'");
  }
  if (!kv.empty()) throw ConfigError("unknown spec key '" + kv.begin()->first + "'");
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid mixture spec: ") + e.what());
  }
  return spec;
}

/// "ring8", "grid25", or a path to a spec file.
inline MixtureSpec spec_by_name(const std::string& name) {
  if (name == "ring8") return ring8_spec();
  if (name == "grid25") return grid25_spec();
  std::ifstream in(name);
  if (!in) throw ConfigError("unknown dataset '" + name + "' (expected ring8, grid25 or a spec file)");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_spec(buffer.str());
}

}  // namespace pacgen::synthdata
