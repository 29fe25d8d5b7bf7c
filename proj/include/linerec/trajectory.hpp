#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

// Pen trajectories: a line is a list of strokes, a stroke an ordered list of
// (x, y) points. JSON schema: {"strokes": [[[x,y], ...], ...]}.

namespace linerec {

using Point = std::array<double, 2>;  // x, y

struct Stroke {
  std::vector<Point> pts;
};

struct Trajectory {
  std::vector<Stroke> strokes;

  size_t total_points() const {
    size_t n = 0;
    for (const auto& s : strokes) n += s.pts.size();
    return n;
  }

  void validate() const {
    for (const auto& s : strokes) {
      if (s.pts.empty()) throw std::invalid_argument("Trajectory: empty stroke");
      for (const auto& p : s.pts)
        if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
          throw std::invalid_argument("Trajectory: non-finite coordinate");
    }
  }

  // bounding box over all points; throws on empty trajectory
  void bounds(double& x0, double& y0, double& x1, double& y1) const {
    bool any = false;
    x0 = y0 = 1e300;
    x1 = y1 = -1e300;
    for (const auto& s : strokes)
      for (const auto& p : s.pts) {
        any = true;
        x0 = std::min(x0, p[0]);
        y0 = std::min(y0, p[1]);
        x1 = std::max(x1, p[0]);
        y1 = std::max(y1, p[1]);
      }
    if (!any) throw std::invalid_argument("Trajectory: no points");
  }
};

inline void save_trajectory(const Trajectory& t, const std::string& path) {
  nlohmann::json strokes = nlohmann::json::array();
  for (const auto& s : t.strokes) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.pts) pts.push_back({p[0], p[1]});
    strokes.push_back(std::move(pts));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << nlohmann::json{{"strokes", std::move(strokes)}}.dump() << "\n";
  if (!out) throw std::runtime_error("short write: " + path);
}

inline Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  if (!j.contains("strokes") || !j["strokes"].is_array())
    throw std::runtime_error("trajectory file lacks strokes array: " + path);
  Trajectory t;
  for (const auto& js : j["strokes"]) {
    Stroke s;
    for (const auto& jp : js) s.pts.push_back({jp.at(0).get<double>(), jp.at(1).get<double>()});
    t.strokes.push_back(std::move(s));
  }
  t.validate();
  return t;
}

}  // namespace linerec
