#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tracenav/error.hpp"
#include "tracenav/geometry.hpp"
#include "tracenav/guidance.hpp"
#include "tracenav/icp.hpp"
#include "tracenav/metrics.hpp"
#include "tracenav/phantom.hpp"
#include "tracenav/rigid_fit.hpp"

namespace tracenav::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Files

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw InputError("write failed for '" + path + "'");
}

inline json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

inline json read_json_file(const std::string& path) { return parse_json(read_text_file(path), path); }

// Two-space indented JSON with a trailing newline.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Scalars and vectors

inline double number_field(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_number()) {
    throw ParseError(what + ": missing numeric field '" + key + "'");
  }
  return j.at(key).get<double>();
}

inline json point_json(const Vector3& p) {
  if (!is_finite(p)) return nullptr;
  return json::array({p.x(), p.y(), p.z()});
}

inline Point3 parse_point(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ParseError(what + ": expected [x, y, z]");
  Point3 p;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ParseError(what + ": coordinates must be numbers");
    p[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  if (!is_finite(p)) throw ParseError(what + ": coordinates must be finite");
  return p;
}

inline Point3 point_field(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(what + ": missing field '" + key + "'");
  return parse_point(j.at(key), what + "." + key);
}

inline UnitVector3 direction_field(const json& j, const char* key, const std::string& what) {
  const Point3 v = point_field(j, key, what);
  if (v.norm() == 0.0) throw ParseError(what + "." + key + ": zero-length direction");
  return UnitVector3(v);
}

// ---------------------------------------------------------------------------
// Rigid transforms: {"rotation": 9 values row-major, "translation": [x, y, z]}

inline json transform_json(const RigidTransform& t) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation()(r, c));
  }
  return {{"rotation", rot}, {"translation", point_json(t.translation())}};
}

inline RigidTransform parse_transform(const json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("rotation") || !j.contains("translation")) {
    throw ParseError(what + ": needs 'rotation' and 'translation'");
  }
  const json& rot = j.at("rotation");
  Matrix3 R;
  if (rot.is_array() && rot.size() == 9) {
    for (std::size_t k = 0; k < 9; ++k) {
      if (!rot[k].is_number()) throw ParseError(what + ".rotation: entries must be numbers");
      R(static_cast<Eigen::Index>(k / 3), static_cast<Eigen::Index>(k % 3)) = rot[k].get<double>();
    }
  } else if (rot.is_array() && rot.size() == 3) {
    for (std::size_t r = 0; r < 3; ++r) R.row(static_cast<Eigen::Index>(r)) = parse_point(rot[r], what + ".rotation").transpose();
  } else {
    throw ParseError(what + ".rotation: expected 9 numbers or 3 rows");
  }
  try {
    return RigidTransform(R, parse_point(j.at("translation"), what + ".translation"));
  } catch (const InputError& e) {
    throw ParseError(what + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// ASCII PLY: one vertex element with x y z and optionally nx ny nz.

inline PointCloud parse_ply(std::string_view text, const std::string& what = "ply") {
  std::istringstream in{std::string(text)};
  std::string line;
  const auto fail = [&](const std::string& msg) -> ParseError { return ParseError(what + ": " + msg); };
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw fail("missing 'ply' magic");

  std::optional<std::size_t> count;
  std::vector<std::string> props;
  bool ascii = false;
  bool ended = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word.empty() || word == "comment" || word == "obj_info") continue;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
      if (!ascii) throw fail("only ASCII PLY is supported");
    } else if (word == "element") {
      std::string name;
      long long n = -1;
      ls >> name >> n;
      if (name != "vertex" || count) throw fail("unsupported element '" + name + "'");
      if (n < 0) throw fail("bad vertex count");
      count = static_cast<std::size_t>(n);
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (!count) throw fail("property before element");
      if (type != "float" && type != "double" && type != "float32" && type != "float64") {
        throw fail("property '" + name + "' must be float or double");
      }
      props.push_back(name);
    } else if (word == "end_header") {
      ended = true;
      break;
    } else {
      throw fail("unexpected header line '" + line + "'");
    }
  }
  if (!ended || !ascii || !count) throw fail("incomplete header");
  const std::vector<std::string> xyz{"x", "y", "z"};
  const std::vector<std::string> xyzn{"x", "y", "z", "nx", "ny", "nz"};
  if (props != xyz && props != xyzn) throw fail("properties must be x y z [nx ny nz]");
  const bool normals = props.size() == 6;

  PointCloud cloud;
  cloud.points.reserve(*count);
  for (std::size_t i = 0; i < *count; ++i) {
    double v[6];
    for (std::size_t k = 0; k < props.size(); ++k) {
      std::string tok;
      if (!(in >> tok)) throw fail("truncated vertex data at vertex " + std::to_string(i));
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v[k]);
      if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
        throw fail("bad number '" + tok + "' at vertex " + std::to_string(i));
      }
    }
    const Point3 p(v[0], v[1], v[2]);
    if (!is_finite(p)) throw fail("non-finite vertex " + std::to_string(i));
    cloud.points.push_back(p);
    if (normals) {
      const Vector3 n(v[3], v[4], v[5]);
      if (!is_finite(n) || n.norm() == 0.0) throw fail("invalid normal at vertex " + std::to_string(i));
      cloud.normals.push_back(UnitVector3(n));
    }
  }
  std::string extra;
  if (in >> extra) throw fail("trailing data after vertices");
  return cloud;
}

inline std::string format_ply(const PointCloud& cloud) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) +
                    "\nproperty double x\nproperty double y\nproperty double z\n";
  if (cloud.has_normals()) out += "property double nx\nproperty double ny\nproperty double nz\n";
  out += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out += format_double(p.x()) + ' ' + format_double(p.y()) + ' ' + format_double(p.z());
    if (cloud.has_normals()) {
      const auto& n = cloud.normals[i];
      out += ' ' + format_double(n.x()) + ' ' + format_double(n.y()) + ' ' + format_double(n.z());
    }
    out += '\n';
  }
  return out;
}

inline PointCloud read_ply(const std::string& path) { return parse_ply(read_text_file(path), path); }
inline void write_ply(const std::string& path, const PointCloud& cloud) { write_text_file(path, format_ply(cloud)); }

// ---------------------------------------------------------------------------
// Landmarks: {"label": [x, y, z], ...}

// Canonical labels first in their fixed order, then any others by name.
inline LandmarkSet ordered_landmarks(const std::map<std::string, Point3>& by_label) {
  LandmarkSet out;
  for (const auto& label : canonical_landmark_labels()) {
    if (auto it = by_label.find(label); it != by_label.end()) {
      out.labels.push_back(label);
      out.positions.push_back(it->second);
    }
  }
  const auto& canon = canonical_landmark_labels();
  for (const auto& [label, p] : by_label) {
    if (std::find(canon.begin(), canon.end(), label) == canon.end()) {
      out.labels.push_back(label);
      out.positions.push_back(p);
    }
  }
  return out;
}

inline LandmarkSet parse_landmarks(const json& j, const std::string& what = "landmarks") {
  if (!j.is_object()) throw ParseError(what + ": expected an object of label -> [x, y, z]");
  std::map<std::string, Point3> by_label;
  for (const auto& [label, value] : j.items()) by_label[label] = parse_point(value, what + "." + label);
  return ordered_landmarks(by_label);
}

inline json landmarks_json(const LandmarkSet& set) {
  json j = json::object();
  for (std::size_t i = 0; i < set.size(); ++i) j[set.labels[i]] = point_json(set.positions[i]);
  return j;
}

inline LandmarkSet read_landmarks(const std::string& path) { return parse_landmarks(read_json_file(path), path); }

// Restricts both sets to their shared labels, in the same order.
inline std::pair<LandmarkSet, LandmarkSet> pair_landmarks(const LandmarkSet& a, const LandmarkSet& b) {
  std::pair<LandmarkSet, LandmarkSet> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto it = std::find(b.labels.begin(), b.labels.end(), a.labels[i]);
    if (it == b.labels.end()) continue;
    const auto k = static_cast<std::size_t>(it - b.labels.begin());
    out.first.labels.push_back(a.labels[i]);
    out.first.positions.push_back(a.positions[i]);
    out.second.labels.push_back(b.labels[k]);
    out.second.positions.push_back(b.positions[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plans: [{"id", "side", "skin_entry", "bone_entry", "target", "direction"}]

inline json plan_json(const NamedPlan& p) {
  return {{"id", p.id},
          {"side", p.side},
          {"skin_entry", point_json(p.plan.skin_entry())},
          {"bone_entry", point_json(p.plan.bone_entry())},
          {"target", point_json(p.plan.target())},
          {"direction", point_json(p.plan.direction().vec())}};
}

inline json plans_json(const std::vector<NamedPlan>& plans) {
  json j = json::array();
  for (const auto& p : plans) j.push_back(plan_json(p));
  return j;
}

inline NamedPlan parse_plan(const json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("id") || !j.at("id").is_number_integer()) {
    throw ParseError(what + ": missing integer 'id'");
  }
  const auto build = [&] {
    try {
      return TrajectoryPlan(point_field(j, "skin_entry", what), point_field(j, "bone_entry", what),
                            point_field(j, "target", what));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(what + ": " + e.what());
    }
  };
  if (j.contains("side") && !j.at("side").is_string()) throw ParseError(what + ": 'side' must be a string");
  NamedPlan out{j.at("id").get<int>(), j.value("side", std::string{}), build()};
  if (j.contains("direction")) {
    const Vector3 given = parse_point(j.at("direction"), what + ".direction");
    if (given.norm() == 0.0 || (given.normalized() - out.plan.direction().vec()).norm() > 1e-6) {
      throw ParseError(what + ": direction disagrees with target - skin_entry");
    }
  }
  return out;
}

inline std::vector<NamedPlan> parse_plans(const json& j, const std::string& what = "plans") {
  if (!j.is_array()) throw ParseError(what + ": expected an array of plans");
  std::vector<NamedPlan> out;
  std::set<int> ids;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(parse_plan(j[i], what + "[" + std::to_string(i) + "]"));
    if (!ids.insert(out.back().id).second) throw ParseError(what + ": duplicate plan id " + std::to_string(out.back().id));
  }
  return out;
}

inline std::vector<NamedPlan> read_plans(const std::string& path) { return parse_plans(read_json_file(path), path); }

inline const NamedPlan& find_plan(const std::vector<NamedPlan>& plans, int id) {
  for (const auto& p : plans) {
    if (p.id == id) return p;
  }
  throw InputError("no plan with id " + std::to_string(id));
}

// ---------------------------------------------------------------------------
// Trace stream: JSON Lines of {"t": seconds, "p": [x, y, z]}

struct TraceRecord {
  double t = 0.0;
  Point3 p = Point3::Zero();
};

inline std::vector<TraceRecord> parse_trace(std::string_view text, const std::string& what = "trace") {
  std::vector<TraceRecord> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = what + ":" + std::to_string(line_no);
    const json j = parse_json(line, where);
    out.push_back({number_field(j, "t", where), point_field(j, "p", where)});
  }
  return out;
}

inline std::string format_trace(const std::vector<TraceSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    json j = {{"t", s.t}, {"p", point_json(s.p)}};
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<TraceRecord> read_trace(const std::string& path) { return parse_trace(read_text_file(path), path); }

// ---------------------------------------------------------------------------
// Placements: [{"plan_id", "condition", "user", "placement": {...}, times}]

struct PlacementRecord {
  int plan_id = 0;
  Condition condition = Condition::ToolTracking;
  std::string user;
  std::optional<PlacementResult> placement;  // as recorded
  std::vector<Point3> rod_samples;           // preferred when present
  std::optional<double> marking_time;
  std::optional<double> insertion_time;
};

inline Condition parse_condition(const json& j, const std::string& what) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "tool_tracking") return Condition::ToolTracking;
    if (s == "in_situ") return Condition::InSitu;
  }
  throw ParseError(what + ": condition must be 'tool_tracking' or 'in_situ'");
}

inline json placement_result_json(const PlacementResult& r) {
  return {{"line", {{"origin", point_json(r.fitted_line.origin)}, {"direction", point_json(r.fitted_line.direction.vec())}}},
          {"tip", point_json(r.tip)},
          {"skin_intersection", point_json(r.skin_intersection)},
          {"bone_intersection", point_json(r.bone_intersection)}};
}

inline json placement_record_json(const PlacementRecord& rec) {
  json placement = rec.placement ? placement_result_json(*rec.placement) : json::object();
  if (!rec.rod_samples.empty()) {
    json rod = json::array();
    for (const auto& p : rec.rod_samples) rod.push_back(point_json(p));
    placement["rod_samples"] = rod;
  }
  json j = {{"plan_id", rec.plan_id}, {"condition", to_string(rec.condition)}, {"user", rec.user}, {"placement", placement}};
  if (rec.marking_time) j["marking_time"] = *rec.marking_time;
  if (rec.insertion_time) j["insertion_time"] = *rec.insertion_time;
  return j;
}

inline PlacementRecord parse_placement_record(const json& j, const std::string& what) {
  if (!j.is_object()) throw ParseError(what + ": expected an object");
  PlacementRecord rec;
  if (!j.contains("plan_id") || !j.at("plan_id").is_number_integer()) throw ParseError(what + ": missing integer 'plan_id'");
  rec.plan_id = j.at("plan_id").get<int>();
  rec.condition = parse_condition(j.value("condition", json()), what + ".condition");
  if (!j.contains("user") || !(j.at("user").is_string() || j.at("user").is_number_integer())) {
    throw ParseError(what + ": missing 'user'");
  }
  rec.user = j.at("user").is_string() ? j.at("user").get<std::string>() : std::to_string(j.at("user").get<long long>());
  if (!j.contains("placement") || !j.at("placement").is_object()) throw ParseError(what + ": missing 'placement'");
  const json& pl = j.at("placement");
  const std::string pw = what + ".placement";
  if (pl.contains("rod_samples")) {
    const json& rod = pl.at("rod_samples");
    if (!rod.is_array()) throw ParseError(pw + ".rod_samples: expected an array");
    for (std::size_t i = 0; i < rod.size(); ++i) rec.rod_samples.push_back(parse_point(rod[i], pw + ".rod_samples"));
  }
  if (pl.contains("tip")) {
    PlacementResult r;
    if (!pl.contains("line")) throw ParseError(pw + ": missing 'line'");
    r.fitted_line = {point_field(pl.at("line"), "origin", pw + ".line"), direction_field(pl.at("line"), "direction", pw + ".line")};
    r.tip = point_field(pl, "tip", pw);
    r.skin_intersection = point_field(pl, "skin_intersection", pw);
    r.bone_intersection = point_field(pl, "bone_intersection", pw);
    rec.placement = r;
  }
  if (!rec.placement && rec.rod_samples.empty()) throw ParseError(pw + ": needs 'rod_samples' or a fitted placement");
  for (const char* key : {"marking_time", "insertion_time"}) {
    if (j.contains(key) && !j.at(key).is_null()) {
      (std::string(key) == "marking_time" ? rec.marking_time : rec.insertion_time) = number_field(j, key, what);
    }
  }
  return rec;
}

inline std::vector<PlacementRecord> parse_placements(const json& j, const std::string& what = "placements") {
  if (!j.is_array()) throw ParseError(what + ": expected an array");
  std::vector<PlacementRecord> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_placement_record(j[i], what + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<PlacementRecord> read_placements(const std::string& path) {
  return parse_placements(read_json_file(path), path);
}

// ---------------------------------------------------------------------------
// Result serializers

inline GuidanceMode parse_mode(std::string_view s) {
  if (s == "marking") return GuidanceMode::Marking;
  if (s == "insertion") return GuidanceMode::Insertion;
  throw ParseError("mode must be 'marking' or 'insertion'");
}

inline json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json guidance_frame_json(const GuidanceFrame& f) {
  return {{"offsets_valid", f.offsets_valid},
          {"entry_offset", nullable(f.entry_offset)},
          {"target_offset", nullable(f.target_offset)},
          {"entry_correction", point_json(f.entry_correction)},
          {"entry_intersection", point_json(f.entry_intersection)},
          {"target_intersection", point_json(f.target_intersection)},
          {"depth_to_target", f.depth_to_target},
          {"angular_error", f.angular_error},
          {"on_trajectory", f.on_trajectory}};
}

inline json overlay_json(const InSituOverlay& o) {
  return {{"entry_disc", {{"center", point_json(o.entry_disc.center)}, {"normal", point_json(o.entry_disc.normal.vec())}, {"diameter_mm", o.entry_disc.diameter_mm}}},
          {"trajectory_cylinder", {{"start", point_json(o.trajectory.start)}, {"end", point_json(o.trajectory.end)}, {"diameter_mm", o.trajectory.diameter_mm}}},
          {"target_sphere", {{"center", point_json(o.target.center)}, {"diameter_mm", o.target.diameter_mm}}}};
}

inline json metrics_report_json(const MetricsReport& m) {
  json j = {{"entry_offset", m.entry_offset},
            {"skin_entry_offset", m.skin_entry_offset},
            {"angular_deviation", m.angular_deviation},
            {"target_tip_error", m.target_tip_error},
            {"target_depth_error", m.target_depth_error},
            {"signed_depth_error", m.signed_depth_error},
            {"target_radial_error", m.target_radial_error}};
  j["marking_time"] = m.marking_time ? json(*m.marking_time) : json(nullptr);
  j["insertion_time"] = m.insertion_time ? json(*m.insertion_time) : json(nullptr);
  return j;
}

inline json score_json(const AlignmentScore& s) {
  return {{"fitness", s.fitness}, {"rmse", s.rmse}, {"score", s.score}, {"rejected", s.rejected},
          {"n_close", s.n_close}, {"n_traced", s.n_traced}};
}

inline json scale_record_json(const ScaleRecord& r) {
  return {{"voxel_mm", r.voxel_mm},
          {"iterations", r.iterations},
          {"fitness", r.candidate.fitness},
          {"rmse", r.candidate.rmse},
          {"score", r.candidate.score},
          {"accepted", r.accepted},
          {"icp_fitness", r.icp_fitness},
          {"icp_rmse", r.icp_rmse},
          {"source_points", r.source_points},
          {"target_points", r.target_points}};
}

}  // namespace tracenav::io
