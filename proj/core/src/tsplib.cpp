#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "nco/error.hpp"
#include "nco/instance.hpp"

namespace nco::tsp {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

}  // namespace

TspInstance parse_tsplib(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string name, edge_type;
  long dimension = -1;
  bool in_coords = false;
  std::vector<Point> raw;

  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (upper(t) == "EOF") break;

    if (in_coords) {
      std::istringstream row(t);
      long id;
      double x, y;
      if (!(row >> id >> x >> y)) {
        // A keyword after the coordinate block ends it.
        if (std::isalpha(static_cast<unsigned char>(t[0]))) {
          in_coords = false;
        } else {
          throw ValidationError(fmt::format("malformed TSPLIB coordinate line '{}'", t));
        }
      } else {
        raw.push_back({x, y});
        continue;
      }
    }

    if (upper(t).rfind("NODE_COORD_SECTION", 0) == 0) {
      in_coords = true;
      continue;
    }
    const auto colon = t.find(':');
    if (colon == std::string::npos) {
      if (std::isalpha(static_cast<unsigned char>(t[0]))) {
        // Other sections (DISPLAY_DATA_SECTION, TOUR_SECTION) are not needed.
        if (upper(t).find("_SECTION") != std::string::npos) break;
      }
      throw ValidationError(fmt::format("malformed TSPLIB header line '{}'", t));
    }
    const std::string key = upper(trim(std::string_view(t).substr(0, colon)));
    const std::string value = trim(std::string_view(t).substr(colon + 1));
    if (key == "NAME") {
      name = value;
    } else if (key == "DIMENSION") {
      const auto res = std::from_chars(value.data(), value.data() + value.size(), dimension);
      if (res.ec != std::errc() || dimension <= 0)
        throw ValidationError(fmt::format("bad TSPLIB DIMENSION '{}'", value));
    } else if (key == "EDGE_WEIGHT_TYPE") {
      edge_type = upper(value);
    } else if (key == "TYPE") {
      const std::string type = upper(value);
      if (type != "TSP") throw ValidationError(fmt::format("unsupported TSPLIB TYPE '{}'", value));
    }
  }

  if (dimension < 0) throw ValidationError("TSPLIB header lacks DIMENSION");
  if (edge_type.empty()) throw ValidationError("TSPLIB header lacks EDGE_WEIGHT_TYPE");
  if (edge_type != "EUC_2D")
    throw ValidationError(fmt::format("unsupported EDGE_WEIGHT_TYPE '{}'", edge_type));
  if (static_cast<long>(raw.size()) != dimension)
    throw ValidationError(fmt::format("DIMENSION {} but {} coordinates", dimension, raw.size()));

  double minx = std::numeric_limits<double>::infinity(), miny = minx;
  double maxx = -minx, maxy = -minx;
  for (const auto& p : raw) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  const double range = std::max(maxx - minx, maxy - miny);

  TspInstance inst;
  inst.from_tsplib = true;
  inst.name = name;
  inst.raw_coords = raw;
  inst.coords.reserve(raw.size());
  for (const auto& p : raw)
    inst.coords.push_back(range > 0.0 ? Point{(p.x - minx) / range, (p.y - miny) / range}
                                      : Point{0.0, 0.0});
  return inst;
}

std::int64_t tsplib_distance(const Point& a, const Point& b) {
  return static_cast<std::int64_t>(std::floor(std::hypot(a.x - b.x, a.y - b.y) + 0.5));
}

std::int64_t tsplib_tour_cost(const TspInstance& instance, std::span<const int> order) {
  const auto& pts = instance.raw_coords.empty() ? instance.coords : instance.raw_coords;
  if (!is_permutation(order, static_cast<int>(pts.size())))
    throw ValidationError("tour is not a permutation");
  std::int64_t cost = 0;
  for (std::size_t k = 0; k < order.size(); ++k)
    cost += tsplib_distance(pts[static_cast<std::size_t>(order[k])],
                            pts[static_cast<std::size_t>(order[(k + 1) % order.size()])]);
  return cost;
}

}  // namespace nco::tsp
