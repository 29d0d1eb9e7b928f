#pragma once

#include <cmath>
#include <numbers>

namespace roadguard {

// WGS-84 spherical approximation, meters.
inline constexpr double kEarthRadiusM = 6371000.0;

// Meters of arc per degree of latitude on the sphere above.
inline constexpr double kMetersPerDegLat = kEarthRadiusM * std::numbers::pi / 180.0;

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool is_valid_lat_lon(const GeoPoint& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) &&
         p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Great-circle distance in meters between two lat/lon points (haversine).
inline double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = deg2rad(b.lat - a.lat);
  const double dlam = deg2rad(b.lon - a.lon);

  const double sin_dphi = std::sin(dphi / 2.0);
  const double sin_dlam = std::sin(dlam / 2.0);
  double h = sin_dphi * sin_dphi + std::cos(phi1) * std::cos(phi2) * sin_dlam * sin_dlam;
  if (h > 1.0) h = 1.0;
  if (h < 0.0) h = 0.0;
  return 2.0 * kEarthRadiusM * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

/// Forward azimuth from a to b in degrees, normalized to [0, 360).
inline double initial_bearing_deg(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dlam = deg2rad(b.lon - a.lon);

  const double y = std::sin(dlam) * std::cos(phi2);
  const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlam);
  double theta = rad2deg(std::atan2(y, x));
  theta = std::fmod(theta + 360.0, 360.0);
  if (theta >= 360.0) theta = 0.0;
  return theta;
}

// Componentwise linear interpolation; adequate for the short segments used here.
inline GeoPoint lerp(const GeoPoint& a, const GeoPoint& b, double f) {
  return {a.lat + (b.lat - a.lat) * f, a.lon + (b.lon - a.lon) * f};
}

// Unit vector on the sphere. Chord length between unit vectors orders points
// identically to great-circle distance, so dot products can replace haversine
// in nearest-point scans.
struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline Vec3 to_unit_vector(const GeoPoint& p) {
  const double phi = deg2rad(p.lat);
  const double lam = deg2rad(p.lon);
  const double c = std::cos(phi);
  return {c * std::cos(lam), c * std::sin(lam), std::sin(phi)};
}

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

// Squared chord distance between unit vectors. Differencing the coordinates
// first keeps full relative precision for nearby points, unlike 2 - 2*dot.
inline double chord_sq(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

/// Point offset from p by the given north/east displacement in meters.
inline GeoPoint offset_by_meters(const GeoPoint& p, double north_m, double east_m) {
  const double dlat = north_m / kMetersPerDegLat;
  const double dlon = east_m / (kMetersPerDegLat * std::cos(deg2rad(p.lat)));
  return {p.lat + dlat, p.lon + dlon};
}

}  // namespace roadguard
