#pragma once

// Check-in ingestion, region partitioning and the cloud / edge / device data
// splits, plus a seeded generator of planted-pattern check-in data.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcpr/denoisers.hpp"
#include "dcpr/geo.hpp"

namespace dcpr {

inline constexpr int kMinInteractions = 10;
inline constexpr std::size_t kMaxSequenceLength = 200;

// One CSV row: user_id,poi_id,category_id,lat,lon,timestamp
struct CheckInRow {
  std::int64_t user = 0;
  std::int64_t poi = 0;
  std::int64_t category = 0;
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const CheckInRow&, const CheckInRow&) = default;
};

struct Poi {
  std::int64_t id = 0;
  std::int64_t category = 0;  // original category id
  double lat = 0.0;
  double lon = 0.0;

  LatLon location() const { return {lat, lon}; }
  friend bool operator==(const Poi&, const Poi&) = default;
};

struct Event {
  std::int64_t poi = 0;
  std::int64_t timestamp = 0;
  friend bool operator==(const Event&, const Event&) = default;
};

struct UserSequence {
  std::int64_t user = 0;
  std::vector<Event> events;  // chronological
  friend bool operator==(const UserSequence&, const UserSequence&) = default;
};

class CheckInDataset {
 public:
  // Validates rows, sorts every user's events by (timestamp, poi) and applies
  // the minimum-interaction filter to users and POIs until nothing changes.
  static CheckInDataset from_rows(std::vector<CheckInRow> rows, int min_interactions = kMinInteractions);

  const std::vector<Poi>& pois() const { return pois_; }
  const std::vector<UserSequence>& users() const { return users_; }
  // Sorted original category ids; a category's dense index is its position.
  const std::vector<std::int64_t>& categories() const { return categories_; }

  const Poi& poi(std::int64_t id) const;
  std::size_t poi_index(std::int64_t id) const;
  std::size_t category_index(std::int64_t category) const;
  std::size_t num_checkins() const;
  // Definition 2: the user's events with POIs replaced by dense category indices.
  std::vector<std::size_t> category_sequence(const UserSequence& u) const;
  std::vector<CheckInRow> rows() const;

  friend bool operator==(const CheckInDataset&, const CheckInDataset&) = default;

 private:
  std::vector<Poi> pois_;  // sorted by id
  std::vector<UserSequence> users_;  // sorted by user id
  std::vector<std::int64_t> categories_;
};

std::vector<CheckInRow> parse_checkins(std::istream& in, const std::string& source = "<stream>");
CheckInDataset load_checkins(const std::filesystem::path& path);
void write_checkins(std::ostream& out, const CheckInDataset& ds);
void write_checkins(const std::filesystem::path& path, const CheckInDataset& ds);

// ---------------------------------------------------------------------------
// Regions

struct RegionMap {
  std::vector<LatLon> centroids;
  std::vector<std::int64_t> poi_ids;  // ascending
  std::vector<int> assignment;        // parallel to poi_ids
  std::vector<std::string> warnings;

  int region_of(std::int64_t poi) const;
  int num_regions() const { return static_cast<int>(centroids.size()); }
};

// Lloyd's k-means on (lat, lon) with haversine assignment and k-means++ seeding.
RegionMap partition_regions(std::span<const Poi> pois, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Tier splits

struct DeviceSequence {
  std::int64_t user = 0;
  std::vector<Visit> visits;  // chronological, length >= 3

  // Leave-one-out views.
  std::span<const Visit> train() const { return {visits.data(), visits.size() - 2}; }
  std::span<const Visit> val_history() const { return {visits.data(), visits.size() - 2}; }
  const Visit& val_target() const { return visits[visits.size() - 2]; }
  std::span<const Visit> test_history() const { return {visits.data(), visits.size() - 1}; }
  const Visit& test_target() const { return visits.back(); }
};

struct RegionSplit {
  int region = 0;
  std::vector<std::int64_t> poi_ids;         // ascending, every POI assigned to the region
  std::vector<std::size_t> poi_category;     // dense category index
  std::vector<LatLon> poi_location;
  std::vector<std::vector<Visit>> edge;      // D_r, anonymized
  std::vector<DeviceSequence> device;        // sorted by user id
};

struct TierSplits {
  std::size_t num_categories = 0;
  std::vector<std::int64_t> category_ids;
  // D_g in user-id order, anonymized; each sequence lost its held-out events.
  std::vector<std::vector<std::size_t>> global;
  std::vector<RegionSplit> regions;
  std::vector<std::string> warnings;

  const RegionSplit* region(int id) const;
};

TierSplits build_tier_splits(const CheckInDataset& ds, const RegionMap& rm, double region_fraction,
                             std::uint64_t seed, std::size_t max_length = kMaxSequenceLength);

void save_splits(const std::filesystem::path& path, const TierSplits& s);
TierSplits load_splits(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic data

enum class Pattern { kCyclic, kMarkov };

struct SynthSpec {
  int users = 200;
  int pois = 100;
  int categories = 5;
  int regions = 2;
  Pattern pattern = Pattern::kCyclic;
  double noise = 0.05;           // chance of a uniformly random category step
  int events_per_user = 24;
  int branching = 2;             // Markov successors per category
  double personal_bias = 0.0;    // chance of jumping to a personal favourite
  int favorites = 3;
  double poi_randomness = 0.0;   // chance of a uniform POI of the chosen category instead of the successor
  double cross_region = 0.0;     // chance of a step into another region
  double region_spread_km = 2.0;
  double region_separation_km = 60.0;
  double center_lat = 40.75;
  double center_lon = -73.98;
  double mean_gap_hours = 6.0;
  std::uint64_t seed = 1;
};

SynthSpec parse_synth_spec(const std::string& text);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::optional<SynthSpec> synth_preset(const std::string& name);
std::string format_synth_spec(const SynthSpec& s);

CheckInDataset synth_generate(const SynthSpec& spec);
CheckInDataset synth_generate(SynthSpec spec, std::uint64_t seed);

}  // namespace dcpr
