#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "linerec/glyphs.hpp"
#include "linerec/raster.hpp"
#include "linerec/synth.hpp"
#include "linerec/trajectory.hpp"

// Dataset layout on disk: a directory with one file per line image (PGM) or
// pen trajectory (JSON) plus manifest.jsonl, one record per line:
//   {"id": ..., "kind": "raster"|"trajectory", "input": <relative path>,
//    "transcript": "abc..", "boxes": [[x0,y0,x1,y1], ...]?}
// Box class ids are implied by transcript position. Weakly labeled splits
// simply omit "boxes".

namespace linerec {

struct ManifestEntry {
  std::string id;
  bool is_online = false;
  std::string input_path;  // absolute, resolved at load time
  std::vector<int> transcript;
  std::vector<CharBox> boxes;
  bool has_boxes = false;
};

inline void save_dataset(const std::string& dir, const std::vector<TextLineSample>& samples,
                         bool include_boxes) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream mf(fs::path(dir) / "manifest.jsonl", std::ios::trunc);
  if (!mf) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
  for (const auto& s : samples) {
    if (s.id.empty()) throw std::invalid_argument("save_dataset: sample id must not be empty");
    const std::string file = s.id + (s.is_online ? ".json" : ".pgm");
    if (s.is_online) save_trajectory(s.traj, (fs::path(dir) / file).string());
    else save_pgm(s.raster, (fs::path(dir) / file).string());
    nlohmann::json rec{{"id", s.id},
                       {"kind", s.is_online ? "trajectory" : "raster"},
                       {"input", file},
                       {"transcript", transcript_string(s.transcript)}};
    if (include_boxes) {
      auto boxes = nlohmann::json::array();
      for (const auto& b : s.boxes)
        boxes.push_back(nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max}));
      rec["boxes"] = boxes;
    }
    mf << rec.dump() << "\n";
  }
}

inline std::vector<ManifestEntry> load_manifest(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_manifest: " + manifest_path + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    ManifestEntry e;
    e.id = rec.at("id").get<std::string>();
    const std::string kind = rec.at("kind").get<std::string>();
    if (kind == "trajectory") e.is_online = true;
    else if (kind != "raster")
      throw std::runtime_error("load_manifest: unknown kind '" + kind + "' for id " + e.id);
    e.input_path = (base / rec.at("input").get<std::string>()).string();
    e.transcript = transcript_classes(rec.at("transcript").get<std::string>());
    if (rec.contains("boxes")) {
      const auto& boxes = rec.at("boxes");
      if (boxes.size() != e.transcript.size())
        throw std::runtime_error("load_manifest: id " + e.id + " has " +
                                 std::to_string(boxes.size()) + " boxes for " +
                                 std::to_string(e.transcript.size()) + " characters");
      for (size_t i = 0; i < boxes.size(); ++i) {
        const auto& q = boxes[i];
        if (q.size() != 4) throw std::runtime_error("load_manifest: bad box for id " + e.id);
        CharBox b;
        b.x_min = q[0].get<double>();
        b.y_min = q[1].get<double>();
        b.x_max = q[2].get<double>();
        b.y_max = q[3].get<double>();
        b.class_id = e.transcript[i];
        b.score = 1.0;
        e.boxes.push_back(b);
      }
      e.has_boxes = true;
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline TextLineSample load_entry(const ManifestEntry& e) {
  TextLineSample s;
  s.id = e.id;
  s.transcript = e.transcript;
  s.boxes = e.boxes;
  s.is_online = e.is_online;
  if (e.is_online) s.traj = load_trajectory(e.input_path);
  else s.raster = load_pgm(e.input_path);
  return s;
}

inline void write_corpus(const std::string& path, const std::vector<std::vector<int>>& texts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_corpus: cannot write " + path);
  for (const auto& t : texts) out << transcript_string(t) << "\n";
}

}  // namespace linerec
