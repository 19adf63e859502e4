#pragma once

#include <cmath>
#include <numbers>

namespace dcpr {

inline constexpr double kEarthRadiusKm = 6371.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// Great-circle distance in kilometres.
inline double haversine(LatLon a, LatLon b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * kRad;
  const double dlon = (b.lon - a.lon) * kRad;
  const double s = std::sin(dlat / 2.0);
  const double c = std::sin(dlon / 2.0);
  const double h = s * s + std::cos(a.lat * kRad) * std::cos(b.lat * kRad) * c * c;
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::fmin(1.0, h)));
}

}  // namespace dcpr
