#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "roadguard/errors.hpp"
#include "roadguard/geo.hpp"

namespace roadguard {

// candidate_roads() expands each road's bounding box by this much per axis
// (~11 m) so GPS points sitting on a box edge are not dropped.
inline constexpr double kBoundaryMarginDeg = 0.0001;

// Maximum allowed gap between a road endpoint and its junction's location.
inline constexpr double kEndpointToleranceM = 1.0;

struct Junction {
  std::string id;
  GeoPoint loc;
};

struct SamplePoint {
  GeoPoint pt;
  double bearing_deg = 0.0;  // forward azimuth of the segment the point lies on
  Vec3 unit;                 // precomputed for nearest-point scans
};

struct Road {
  std::string id;
  std::string from_junction;  // empty string: dead-ended at this side
  std::string to_junction;
  double length_m = 0.0;       // authoritative length
  double max_speed_mps = 0.0;  // sp
  GeoPoint bbox_min, bbox_max;
  std::vector<GeoPoint> polyline;
  std::vector<double> cum_m;        // arc length from polyline start to each vertex
  std::vector<SamplePoint> samples;  // T: fixes at 1 m spacing along the polyline

  double arc_length_m() const { return cum_m.empty() ? 0.0 : cum_m.back(); }
};

/// G = {J, R} plus the preprocessed lookup structures: junction adjacency
/// (which roads meet at a junction) and the road-pair -> junction dictionary.
struct RoadGraph {
  std::map<std::string, Junction> junctions;
  std::map<std::string, Road> roads;
  std::map<std::string, std::set<std::string>> adjacency;
  std::map<std::pair<std::string, std::string>, std::string> road_pair_junction;

  const std::string* junction_of(const std::string& road_a, const std::string& road_b) const {
    auto it = road_pair_junction.find({road_a, road_b});
    return it == road_pair_junction.end() ? nullptr : &it->second;
  }
};

namespace detail {

inline std::vector<double> cumulative_arc_m(const std::vector<GeoPoint>& polyline) {
  std::vector<double> cum(polyline.size(), 0.0);
  for (std::size_t i = 1; i < polyline.size(); ++i)
    cum[i] = cum[i - 1] + haversine_m(polyline[i - 1], polyline[i]);
  return cum;
}

// Index of the segment [i, i+1] containing arc position s.
// Pre: 0 <= s < cum.back(). upper_bound lands one past the segment start and
// never selects a zero-length segment, so interpolation is well defined even
// with duplicated vertices.
inline std::size_t segment_at(const std::vector<double>& cum, double s) {
  auto it = std::upper_bound(cum.begin(), cum.end(), s);
  return static_cast<std::size_t>(it - cum.begin()) - 1;
}

}  // namespace detail

/// Position at arc length s along the polyline (clamped to its ends).
inline GeoPoint point_along(const std::vector<GeoPoint>& polyline,
                            const std::vector<double>& cum, double s) {
  if (s <= 0.0) return polyline.front();
  if (s >= cum.back()) return polyline.back();
  const std::size_t i = detail::segment_at(cum, s);
  const double seg_len = cum[i + 1] - cum[i];
  const double f = seg_len > 0.0 ? (s - cum[i]) / seg_len : 0.0;
  return lerp(polyline[i], polyline[i + 1], f);
}

inline GeoPoint point_along(const Road& road, double s) {
  return point_along(road.polyline, road.cum_m, s);
}

/// Forward azimuth of the polyline segment at arc position s (the incoming
/// segment at the very end, matching the sampling convention).
inline double bearing_along(const Road& road, double s) {
  const auto& cum = road.cum_m;
  std::size_t i;
  if (s >= cum.back()) {
    i = cum.size() - 2;
    while (i > 0 && cum[i + 1] - cum[i] <= 0.0) --i;
  } else {
    i = detail::segment_at(cum, std::max(0.0, s));
  }
  return initial_bearing_deg(road.polyline[i], road.polyline[i + 1]);
}

/// Samples fixes every metre of arc length: floor(len)+1 points, each with the
/// forward azimuth of its segment. A point landing exactly on a vertex takes
/// the outgoing segment's bearing; the final point takes the incoming one.
inline std::vector<SamplePoint> sample_road(const std::vector<GeoPoint>& polyline,
                                            double length_m) {
  if (polyline.size() < 2) throw ValidationError("polyline has fewer than 2 points");
  if (!(length_m > 0.0)) throw ValidationError("road length must be positive");
  const auto cum = detail::cumulative_arc_m(polyline);
  if (cum.back() <= 0.0) throw ValidationError("degenerate polyline: all points identical");

  const auto segment_bearing = [&](std::size_t i) {
    return initial_bearing_deg(polyline[i], polyline[i + 1]);
  };

  const std::size_t count = static_cast<std::size_t>(std::floor(length_m)) + 1;
  std::vector<SamplePoint> samples;
  samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double s = static_cast<double>(k);
    SamplePoint sp;
    sp.pt = point_along(polyline, cum, s);
    if (s >= cum.back()) {
      // Past or at the end: incoming segment.
      std::size_t i = cum.size() - 2;
      while (i > 0 && cum[i + 1] - cum[i] <= 0.0) --i;
      sp.bearing_deg = segment_bearing(i);
    } else {
      sp.bearing_deg = segment_bearing(detail::segment_at(cum, s));
    }
    sp.unit = to_unit_vector(sp.pt);
    samples.push_back(sp);
  }
  return samples;
}

/// Roads whose margin-expanded bounding box contains p. Empty is a valid
/// result; it is what routes CheckPos to its current-location-at-junction case.
inline std::vector<std::string> candidate_roads(const RoadGraph& graph, const GeoPoint& p) {
  std::vector<std::string> out;
  for (const auto& [id, road] : graph.roads) {
    if (p.lat >= road.bbox_min.lat - kBoundaryMarginDeg &&
        p.lat <= road.bbox_max.lat + kBoundaryMarginDeg &&
        p.lon >= road.bbox_min.lon - kBoundaryMarginDeg &&
        p.lon <= road.bbox_max.lon + kBoundaryMarginDeg) {
      out.push_back(id);
    }
  }
  return out;
}

/// Sampled point of the road nearest to p by great-circle distance.
/// Ties resolve to the lowest index. Returns (index, distance in meters).
/// The scan compares chord lengths via dot products; chord distance is
/// monotone in great-circle distance, so the argmin is the same.
inline std::pair<std::size_t, double> nearest_sample(const Road& road, const GeoPoint& p) {
  const Vec3 q = to_unit_vector(p);
  std::size_t best = 0;
  double best_sq = chord_sq(road.samples[0].unit, q);
  for (std::size_t i = 1; i < road.samples.size(); ++i) {
    const double d = chord_sq(road.samples[i].unit, q);
    if (d < best_sq) {
      best_sq = d;
      best = i;
    }
  }
  return {best, haversine_m(road.samples[best].pt, p)};
}

namespace detail {

inline double require_positive(const nlohmann::json& j, const char* key,
                               const std::string& road_id) {
  if (!j.contains(key) || !j[key].is_number())
    throw ValidationError("road " + road_id + ": missing numeric field '" + key + "'");
  const double v = j[key].get<double>();
  if (!(v > 0.0) || !std::isfinite(v))
    throw ValidationError("road " + road_id + ": field '" + key + "' must be > 0");
  return v;
}

inline std::string optional_junction_ref(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  if (!j[key].is_string()) throw ValidationError(std::string("field '") + key + "' must be a junction id or null");
  return j[key].get<std::string>();
}

}  // namespace detail

/// Builds a fully preprocessed graph from a parsed roadmap document:
/// validation, 1 m sampling, junction adjacency and the road-pair dictionary.
inline RoadGraph build_roadmap(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("junctions") || !doc.contains("roads"))
    throw ValidationError("roadmap document must contain 'junctions' and 'roads'");

  RoadGraph g;
  for (const auto& jj : doc["junctions"]) {
    Junction jn;
    if (!jj.contains("id")) throw ValidationError("junction missing 'id'");
    jn.id = jj["id"].is_string() ? jj["id"].get<std::string>()
                                 : jj["id"].dump();
    if (!jj.contains("lat") || !jj.contains("lon"))
      throw ValidationError("junction " + jn.id + ": missing 'lat'/'lon'");
    jn.loc = {jj["lat"].get<double>(), jj["lon"].get<double>()};
    if (!is_valid_lat_lon(jn.loc))
      throw ValidationError("junction " + jn.id + ": lat/lon out of range");
    if (!g.junctions.emplace(jn.id, jn).second)
      throw ValidationError("duplicate junction id " + jn.id);
  }

  for (const auto& jr : doc["roads"]) {
    Road r;
    if (!jr.contains("id")) throw ValidationError("road missing 'id'");
    r.id = jr["id"].is_string() ? jr["id"].get<std::string>() : jr["id"].dump();
    r.length_m = detail::require_positive(jr, "length_m", r.id);
    r.max_speed_mps = detail::require_positive(jr, "max_speed_mps", r.id);
    r.from_junction = detail::optional_junction_ref(jr, "from");
    r.to_junction = detail::optional_junction_ref(jr, "to");
    if (r.from_junction.empty() && r.to_junction.empty())
      throw ValidationError("road " + r.id + ": needs at least one junction endpoint");

    if (!jr.contains("polyline") || !jr["polyline"].is_array() || jr["polyline"].size() < 2)
      throw ValidationError("road " + r.id + ": polyline must have at least 2 points");
    for (const auto& v : jr["polyline"]) {
      if (!v.is_array() || v.size() != 2)
        throw ValidationError("road " + r.id + ": polyline entries must be [lat, lon]");
      GeoPoint p{v[0].get<double>(), v[1].get<double>()};
      if (!is_valid_lat_lon(p))
        throw ValidationError("road " + r.id + ": polyline point out of range");
      r.polyline.push_back(p);
    }

    r.cum_m = detail::cumulative_arc_m(r.polyline);
    const double arc = r.arc_length_m();
    if (arc <= 0.0) throw ValidationError("road " + r.id + ": degenerate polyline");
    if (std::abs(arc - r.length_m) / r.length_m >= 0.01)
      throw ValidationError("road " + r.id + ": length_m disagrees with polyline arc length by >= 1%");

    for (const std::string* side : {&r.from_junction, &r.to_junction}) {
      if (side->empty()) continue;
      auto it = g.junctions.find(*side);
      if (it == g.junctions.end())
        throw ValidationError("road " + r.id + ": unknown junction '" + *side + "'");
      const GeoPoint endpoint = (side == &r.from_junction) ? r.polyline.front() : r.polyline.back();
      if (haversine_m(endpoint, it->second.loc) > kEndpointToleranceM)
        throw ValidationError("road " + r.id + ": endpoint is more than 1 m from junction '" +
                              *side + "'");
    }

    r.bbox_min = r.polyline.front();
    r.bbox_max = r.polyline.front();
    for (const auto& p : r.polyline) {
      r.bbox_min.lat = std::min(r.bbox_min.lat, p.lat);
      r.bbox_min.lon = std::min(r.bbox_min.lon, p.lon);
      r.bbox_max.lat = std::max(r.bbox_max.lat, p.lat);
      r.bbox_max.lon = std::max(r.bbox_max.lon, p.lon);
    }

    r.samples = sample_road(r.polyline, r.length_m);
    if (!g.roads.emplace(r.id, std::move(r)).second)
      throw ValidationError("duplicate road id " + jr["id"].dump());
  }

  for (const auto& [id, road] : g.roads) {
    if (!road.from_junction.empty()) g.adjacency[road.from_junction].insert(id);
    if (!road.to_junction.empty()) g.adjacency[road.to_junction].insert(id);
  }
  for (const auto& [jid, road_set] : g.adjacency) {
    for (const auto& a : road_set)
      for (const auto& b : road_set)
        if (a != b) g.road_pair_junction[{a, b}] = jid;
  }
  return g;
}

inline RoadGraph parse_roadmap(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("roadmap JSON parse failed: ") + e.what());
  }
  try {
    return build_roadmap(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("roadmap field error: ") + e.what());
  }
}

/// Loads and preprocesses a roadmap interchange file.
inline RoadGraph load_roadmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open roadmap file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_roadmap(text);
}

/// Serializes the preprocessed graph (samples, adjacency, road-pair
/// dictionary) deterministically, for the preprocess CLI cache.
inline nlohmann::ordered_json graph_cache_json(const RoadGraph& g) {
  nlohmann::ordered_json out;
  out["junctions"] = nlohmann::ordered_json::array();
  for (const auto& [id, jn] : g.junctions)
    out["junctions"].push_back({{"id", id}, {"lat", jn.loc.lat}, {"lon", jn.loc.lon}});

  out["roads"] = nlohmann::ordered_json::array();
  for (const auto& [id, road] : g.roads) {
    nlohmann::ordered_json jr;
    jr["id"] = id;
    jr["from"] = road.from_junction.empty() ? nlohmann::ordered_json(nullptr)
                                            : nlohmann::ordered_json(road.from_junction);
    jr["to"] = road.to_junction.empty() ? nlohmann::ordered_json(nullptr)
                                        : nlohmann::ordered_json(road.to_junction);
    jr["length_m"] = road.length_m;
    jr["max_speed_mps"] = road.max_speed_mps;
    jr["bbox_min"] = {road.bbox_min.lat, road.bbox_min.lon};
    jr["bbox_max"] = {road.bbox_max.lat, road.bbox_max.lon};
    auto samples = nlohmann::ordered_json::array();
    for (const auto& sp : road.samples)
      samples.push_back({sp.pt.lat, sp.pt.lon, sp.bearing_deg});
    jr["samples"] = std::move(samples);
    out["roads"].push_back(std::move(jr));
  }

  out["adjacency"] = nlohmann::ordered_json::object();
  for (const auto& [jid, roads] : g.adjacency)
    out["adjacency"][jid] = std::vector<std::string>(roads.begin(), roads.end());

  out["road_pair_junction"] = nlohmann::ordered_json::array();
  for (const auto& [pair, jid] : g.road_pair_junction)
    out["road_pair_junction"].push_back({pair.first, pair.second, jid});
  return out;
}

}  // namespace roadguard
