#include "dcpr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "dcpr/config.hpp"
#include "dcpr/error.hpp"

namespace dcpr {

namespace {

constexpr const char* kCsvHeader = "user_id,poi_id,category_id,lat,lon,timestamp";

template <typename T>
bool parse_field(std::string_view s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

void check_coordinates(double lat, double lon, const std::string& where) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
    throw DataError(where + ": coordinates out of range");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

CheckInDataset CheckInDataset::from_rows(std::vector<CheckInRow> rows, int min_interactions) {
  std::map<std::int64_t, Poi> pois;
  for (const auto& r : rows) {
    check_coordinates(r.lat, r.lon, "POI " + std::to_string(r.poi));
    auto [it, inserted] = pois.try_emplace(r.poi, Poi{r.poi, r.category, r.lat, r.lon});
    if (!inserted && !(it->second == Poi{r.poi, r.category, r.lat, r.lon})) {
      throw DataError("POI " + std::to_string(r.poi) +
                      " appears with conflicting category or coordinates");
    }
  }

  // Cascade the minimum-interaction rule until both counts are stable.
  std::vector<char> alive(rows.size(), 1);
  for (bool changed = true; changed;) {
    changed = false;
    std::unordered_map<std::int64_t, int> per_user, per_poi;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!alive[i]) continue;
      ++per_user[rows[i].user];
      ++per_poi[rows[i].poi];
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (alive[i] && (per_user[rows[i].user] < min_interactions ||
                       per_poi[rows[i].poi] < min_interactions)) {
        alive[i] = 0;
        changed = true;
      }
    }
  }

  CheckInDataset ds;
  std::map<std::int64_t, std::vector<Event>> by_user;
  std::map<std::int64_t, Poi> kept;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!alive[i]) continue;
    by_user[rows[i].user].push_back({rows[i].poi, rows[i].timestamp});
    kept.emplace(rows[i].poi, pois.at(rows[i].poi));
  }
  if (by_user.empty()) throw DataError("no check-ins left after the minimum-interaction filter");

  for (auto& [user, events] : by_user) {
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.poi < b.poi;
    });
    ds.users_.push_back({user, std::move(events)});
  }
  for (const auto& [id, p] : kept) {
    ds.pois_.push_back(p);
    ds.categories_.push_back(p.category);
  }
  std::sort(ds.categories_.begin(), ds.categories_.end());
  ds.categories_.erase(std::unique(ds.categories_.begin(), ds.categories_.end()),
                       ds.categories_.end());
  return ds;
}

const Poi& CheckInDataset::poi(std::int64_t id) const { return pois_[poi_index(id)]; }

std::size_t CheckInDataset::poi_index(std::int64_t id) const {
  auto it = std::lower_bound(pois_.begin(), pois_.end(), id,
                             [](const Poi& p, std::int64_t v) { return p.id < v; });
  if (it == pois_.end() || it->id != id) throw DataError("unknown POI " + std::to_string(id));
  return static_cast<std::size_t>(it - pois_.begin());
}

std::size_t CheckInDataset::category_index(std::int64_t category) const {
  auto it = std::lower_bound(categories_.begin(), categories_.end(), category);
  if (it == categories_.end() || *it != category) {
    throw DataError("unknown category " + std::to_string(category));
  }
  return static_cast<std::size_t>(it - categories_.begin());
}

std::size_t CheckInDataset::num_checkins() const {
  std::size_t n = 0;
  for (const auto& u : users_) n += u.events.size();
  return n;
}

std::vector<std::size_t> CheckInDataset::category_sequence(const UserSequence& u) const {
  std::vector<std::size_t> out;
  out.reserve(u.events.size());
  for (const auto& e : u.events) out.push_back(category_index(poi(e.poi).category));
  return out;
}

std::vector<CheckInRow> CheckInDataset::rows() const {
  std::vector<CheckInRow> out;
  out.reserve(num_checkins());
  for (const auto& u : users_) {
    for (const auto& e : u.events) {
      const Poi& p = poi(e.poi);
      out.push_back({u.user, e.poi, p.category, p.lat, p.lon, e.timestamp});
    }
  }
  return out;
}

std::vector<CheckInRow> parse_checkins(std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw DataError(source + ":1: expected header '" + std::string(kCsvHeader) + "'");
  }
  std::vector<CheckInRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() != 6) {
      throw DataError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
    }
    CheckInRow r;
    if (!parse_field(fields[0], r.user) || !parse_field(fields[1], r.poi) ||
        !parse_field(fields[2], r.category) || !parse_field(fields[3], r.lat) ||
        !parse_field(fields[4], r.lon) || !parse_field(fields[5], r.timestamp)) {
      throw DataError(where + ": malformed field");
    }
    check_coordinates(r.lat, r.lon, where);
    rows.push_back(r);
  }
  return rows;
}

CheckInDataset load_checkins(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return CheckInDataset::from_rows(parse_checkins(in, path.string()));
}

void write_checkins(std::ostream& out, const CheckInDataset& ds) {
  out << kCsvHeader << '\n';
  char buf[64];
  auto put = [&](auto v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, p - buf);
  };
  for (const auto& r : ds.rows()) {
    put(r.user);
    out << ',';
    put(r.poi);
    out << ',';
    put(r.category);
    out << ',';
    put(r.lat);
    out << ',';
    put(r.lon);
    out << ',';
    put(r.timestamp);
    out << '\n';
  }
}

void write_checkins(const std::filesystem::path& path, const CheckInDataset& ds) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_checkins(out, ds);
}

// ---------------------------------------------------------------------------
// Regions

int RegionMap::region_of(std::int64_t poi) const {
  auto it = std::lower_bound(poi_ids.begin(), poi_ids.end(), poi);
  if (it == poi_ids.end() || *it != poi) throw DataError("POI " + std::to_string(poi) + " has no region");
  return assignment[static_cast<std::size_t>(it - poi_ids.begin())];
}

namespace {

constexpr int kKmeansRestarts = 10;

RegionMap kmeans_once(const std::vector<Poi>& sorted, int k, std::uint64_t seed) {
  const std::size_t n = sorted.size();
  RegionMap rm;
  Rng rng(seed);
  // k-means++ seeding on squared haversine distance.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  rm.centroids.push_back(sorted[rng.below(n)].location());
  while (rm.centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = haversine(sorted[i].location(), rm.centroids.back());
      d2[i] = std::min(d2[i], d * d);
      total += d2[i];
    }
    if (total <= 0.0) {
      rm.warnings.push_back("partition_regions: only " + std::to_string(rm.centroids.size()) +
                            " distinct locations for k = " + std::to_string(k) +
                            "; remaining POIs share region 0");
      break;
    }
    double pick = rng.uniform() * total;
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      pick -= d2[i];
      if (pick <= 0.0 && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    rm.centroids.push_back(sorted[chosen].location());
  }

  rm.assignment.assign(n, 0);
  auto assign = [&] {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < rm.centroids.size(); ++c) {
        const double d = haversine(sorted[i].location(), rm.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (rm.assignment[i] != best) {
        rm.assignment[i] = best;
        changed = true;
      }
    }
    return changed;
  };

  assign();
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<double> lat(rm.centroids.size(), 0.0), lon(rm.centroids.size(), 0.0);
    std::vector<std::size_t> count(rm.centroids.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      lat[rm.assignment[i]] += sorted[i].lat;
      lon[rm.assignment[i]] += sorted[i].lon;
      ++count[rm.assignment[i]];
    }
    for (std::size_t c = 0; c < rm.centroids.size(); ++c) {
      if (count[c] > 0) rm.centroids[c] = {lat[c] / count[c], lon[c] / count[c]};
    }
    if (!assign()) break;
  }

  return rm;
}

}  // namespace

RegionMap partition_regions(std::span<const Poi> pois, int k, std::uint64_t seed) {
  if (k < 1) throw InvalidArgument("partition_regions: k must be >= 1");
  if (pois.size() < static_cast<std::size_t>(k)) {
    throw InvalidArgument("partition_regions: fewer POIs than regions");
  }
  std::vector<Poi> sorted(pois.begin(), pois.end());
  std::sort(sorted.begin(), sorted.end(), [](const Poi& a, const Poi& b) { return a.id < b.id; });
  const std::size_t n = sorted.size();

  // Best of several k-means++ restarts by total squared distance.
  RegionMap best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < kKmeansRestarts; ++restart) {
    RegionMap rm = kmeans_once(sorted, k, derive_seed(seed, "kmeans", static_cast<std::uint64_t>(restart)));
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = haversine(sorted[i].location(), rm.centroids[rm.assignment[i]]);
      inertia += d * d;
    }
    if (inertia < best_inertia || restart == 0) {
      best_inertia = inertia;
      best = std::move(rm);
    }
  }
  RegionMap& rm = best;
  rm.poi_ids.reserve(n);
  for (const auto& p : sorted) rm.poi_ids.push_back(p.id);
  return rm;
}

// ---------------------------------------------------------------------------
// Tier splits

const RegionSplit* TierSplits::region(int id) const {
  for (const auto& r : regions)
    if (r.region == id) return &r;
  return nullptr;
}

TierSplits build_tier_splits(const CheckInDataset& ds, const RegionMap& rm, double region_fraction,
                             std::uint64_t seed, std::size_t max_length) {
  if (!(region_fraction > 0.0 && region_fraction < 1.0)) {
    throw InvalidArgument("build_tier_splits: region_fraction must lie in (0, 1)");
  }
  if (max_length < 3) throw InvalidArgument("build_tier_splits: max_length must be >= 3");

  TierSplits out;
  out.num_categories = ds.categories().size();
  out.category_ids = ds.categories();

  struct Candidate {
    std::size_t user_index;
    std::vector<std::size_t> positions;  // indices into the user's event list
  };
  const int k = rm.num_regions();
  std::vector<std::vector<Candidate>> per_region(static_cast<std::size_t>(k));

  const auto& users = ds.users();
  for (std::size_t ui = 0; ui < users.size(); ++ui) {
    std::map<int, std::vector<std::size_t>> by_region;
    for (std::size_t i = 0; i < users[ui].events.size(); ++i) {
      by_region[rm.region_of(users[ui].events[i].poi)].push_back(i);
    }
    for (auto& [r, pos] : by_region) {
      if (pos.size() > max_length) pos.erase(pos.begin(), pos.end() - max_length);
      if (pos.size() < 3) continue;
      per_region[static_cast<std::size_t>(r)].push_back({ui, std::move(pos)});
    }
  }

  auto to_visits = [&](const Candidate& c) {
    std::vector<Visit> v;
    v.reserve(c.positions.size());
    for (std::size_t i : c.positions) {
      const Event& e = users[c.user_index].events[i];
      const Poi& p = ds.poi(e.poi);
      v.push_back({e.poi, p.lat, p.lon, e.timestamp});
    }
    return v;
  };

  // held_out[user] = event indices reserved as device validation/test targets.
  std::vector<std::vector<std::size_t>> held_out(users.size());

  for (int r = 0; r < k; ++r) {
    auto& cands = per_region[static_cast<std::size_t>(r)];
    if (cands.empty()) {
      out.warnings.push_back("region " + std::to_string(r) + " has no sequences; skipped");
      continue;
    }
    const auto region_pois = std::count(rm.assignment.begin(), rm.assignment.end(), r);
    if (region_pois < 2) {
      out.warnings.push_back("region " + std::to_string(r) + " has fewer than 2 POIs; skipped");
      continue;
    }
    Rng rng(derive_seed(seed, "tier-split", static_cast<std::uint64_t>(r)));
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto n_edge = static_cast<std::size_t>(
        std::lround(region_fraction * static_cast<double>(cands.size())));

    RegionSplit split;
    split.region = r;
    for (std::size_t i = 0; i < rm.poi_ids.size(); ++i) {
      if (rm.assignment[i] != r) continue;
      const Poi& p = ds.poi(rm.poi_ids[i]);
      split.poi_ids.push_back(p.id);
      split.poi_category.push_back(ds.category_index(p.category));
      split.poi_location.push_back(p.location());
    }
    std::vector<std::size_t> device_idx;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i < n_edge) {
        split.edge.push_back(to_visits(cands[order[i]]));
      } else {
        device_idx.push_back(order[i]);
      }
    }
    std::sort(device_idx.begin(), device_idx.end());  // candidates are in user order
    for (std::size_t ci : device_idx) {
      const Candidate& c = cands[ci];
      split.device.push_back({users[c.user_index].user, to_visits(c)});
      held_out[c.user_index].push_back(c.positions[c.positions.size() - 2]);
      held_out[c.user_index].push_back(c.positions.back());
    }
    out.regions.push_back(std::move(split));
  }

  for (std::size_t ui = 0; ui < users.size(); ++ui) {
    std::vector<std::size_t> cats = ds.category_sequence(users[ui]);
    std::vector<char> drop(cats.size(), 0);
    for (std::size_t j = 0; j < 2 && j < cats.size(); ++j) drop[cats.size() - 1 - j] = 1;
    for (std::size_t i : held_out[ui]) drop[i] = 1;
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < cats.size(); ++i)
      if (!drop[i]) kept.push_back(cats[i]);
    if (kept.size() > max_length) kept.erase(kept.begin(), kept.end() - max_length);
    out.global.push_back(std::move(kept));
  }
  return out;
}

namespace {

nlohmann::json visits_json(std::span<const Visit> visits) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& v : visits) a.push_back({v.poi, v.timestamp});
  return a;
}

std::vector<Visit> visits_from_json(const nlohmann::json& a, const RegionSplit& r) {
  std::vector<Visit> out;
  for (const auto& e : a) {
    const auto poi = e.at(0).get<std::int64_t>();
    auto it = std::lower_bound(r.poi_ids.begin(), r.poi_ids.end(), poi);
    if (it == r.poi_ids.end() || *it != poi) {
      throw DataError("splits: POI " + std::to_string(poi) + " not in region " +
                      std::to_string(r.region));
    }
    const LatLon& loc = r.poi_location[static_cast<std::size_t>(it - r.poi_ids.begin())];
    out.push_back({poi, loc.lat, loc.lon, e.at(1).get<std::int64_t>()});
  }
  return out;
}

}  // namespace

void save_splits(const std::filesystem::path& path, const TierSplits& s) {
  nlohmann::json j;
  j["format"] = "dcpr-splits-1";
  j["num_categories"] = s.num_categories;
  j["category_ids"] = s.category_ids;
  j["global"] = s.global;
  j["warnings"] = s.warnings;
  j["regions"] = nlohmann::json::array();
  for (const auto& r : s.regions) {
    nlohmann::json jr;
    jr["region"] = r.region;
    jr["poi_ids"] = r.poi_ids;
    jr["poi_category"] = r.poi_category;
    nlohmann::json locs = nlohmann::json::array();
    for (const auto& l : r.poi_location) locs.push_back({l.lat, l.lon});
    jr["poi_location"] = locs;
    jr["edge"] = nlohmann::json::array();
    for (const auto& seq : r.edge) jr["edge"].push_back(visits_json(seq));
    jr["device"] = nlohmann::json::array();
    for (const auto& d : r.device) {
      jr["device"].push_back({{"user", d.user}, {"visits", visits_json(d.visits)}});
    }
    j["regions"].push_back(std::move(jr));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump() << '\n';
}

TierSplits load_splits(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != "dcpr-splits-1") throw DataError(path.string() + ": unknown format");
    TierSplits s;
    s.num_categories = j.at("num_categories").get<std::size_t>();
    s.category_ids = j.at("category_ids").get<std::vector<std::int64_t>>();
    s.global = j.at("global").get<std::vector<std::vector<std::size_t>>>();
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& jr : j.at("regions")) {
      RegionSplit r;
      r.region = jr.at("region").get<int>();
      r.poi_ids = jr.at("poi_ids").get<std::vector<std::int64_t>>();
      r.poi_category = jr.at("poi_category").get<std::vector<std::size_t>>();
      for (const auto& l : jr.at("poi_location")) {
        r.poi_location.push_back({l.at(0).get<double>(), l.at(1).get<double>()});
      }
      for (const auto& seq : jr.at("edge")) r.edge.push_back(visits_from_json(seq, r));
      for (const auto& d : jr.at("device")) {
        r.device.push_back({d.at("user").get<std::int64_t>(), visits_from_json(d.at("visits"), r)});
      }
      s.regions.push_back(std::move(r));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic data

SynthSpec parse_synth_spec(const std::string& text) {
  SynthSpec s;
  for (const auto& kv : parse_key_values(text, "<synth spec>")) {
    const auto& k = kv.key;
    const auto& v = kv.value;
    auto as_int = [&] { return static_cast<int>(parse_int(k, v)); };
    if (k == "users") s.users = as_int();
    else if (k == "pois") s.pois = as_int();
    else if (k == "categories") s.categories = as_int();
    else if (k == "regions") s.regions = as_int();
    else if (k == "pattern") {
      if (v == "cyclic") s.pattern = Pattern::kCyclic;
      else if (v == "markov") s.pattern = Pattern::kMarkov;
      else throw ConfigError("pattern must be cyclic or markov, got '" + v + "'");
    } else if (k == "noise") s.noise = parse_double(k, v);
    else if (k == "events_per_user") s.events_per_user = as_int();
    else if (k == "branching") s.branching = as_int();
    else if (k == "personal_bias") s.personal_bias = parse_double(k, v);
    else if (k == "favorites") s.favorites = as_int();
    else if (k == "poi_randomness") s.poi_randomness = parse_double(k, v);
    else if (k == "cross_region") s.cross_region = parse_double(k, v);
    else if (k == "region_spread_km") s.region_spread_km = parse_double(k, v);
    else if (k == "region_separation_km") s.region_separation_km = parse_double(k, v);
    else if (k == "center_lat") s.center_lat = parse_double(k, v);
    else if (k == "center_lon") s.center_lon = parse_double(k, v);
    else if (k == "mean_gap_hours") s.mean_gap_hours = parse_double(k, v);
    else if (k == "seed") s.seed = parse_u64(k, v);
    else throw ConfigError("unknown synthetic spec key '" + k + "' (line " + std::to_string(kv.line) + ")");
  }
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  return parse_synth_spec(read_text_file(path));
}

std::optional<SynthSpec> synth_preset(const std::string& name) {
  SynthSpec s;
  if (name == "tiny") {
    s.users = 40;
    s.pois = 20;
    s.categories = 4;
    s.regions = 2;
    s.events_per_user = 16;
    return s;
  }
  if (name == "small") {
    s.users = 160;
    s.pois = 80;
    s.categories = 5;
    s.regions = 2;
    s.events_per_user = 20;
    s.personal_bias = 0.3;
    return s;
  }
  if (name == "medium") {
    s.users = 600;
    s.pois = 400;
    s.categories = 12;
    s.regions = 5;
    s.pattern = Pattern::kMarkov;
    s.events_per_user = 40;
    s.personal_bias = 0.2;
    return s;
  }
  return std::nullopt;
}

std::string format_synth_spec(const SynthSpec& s) {
  std::ostringstream o;
  o.precision(17);
  o << "users = " << s.users << '\n'
    << "pois = " << s.pois << '\n'
    << "categories = " << s.categories << '\n'
    << "regions = " << s.regions << '\n'
    << "pattern = " << (s.pattern == Pattern::kCyclic ? "cyclic" : "markov") << '\n'
    << "noise = " << s.noise << '\n'
    << "events_per_user = " << s.events_per_user << '\n'
    << "branching = " << s.branching << '\n'
    << "personal_bias = " << s.personal_bias << '\n'
    << "favorites = " << s.favorites << '\n'
    << "poi_randomness = " << s.poi_randomness << '\n'
    << "cross_region = " << s.cross_region << '\n'
    << "region_spread_km = " << s.region_spread_km << '\n'
    << "region_separation_km = " << s.region_separation_km << '\n'
    << "center_lat = " << s.center_lat << '\n'
    << "center_lon = " << s.center_lon << '\n'
    << "mean_gap_hours = " << s.mean_gap_hours << '\n'
    << "seed = " << s.seed << '\n';
  return o.str();
}

CheckInDataset synth_generate(SynthSpec spec, std::uint64_t seed) {
  spec.seed = seed;
  return synth_generate(spec);
}

CheckInDataset synth_generate(const SynthSpec& spec) {
  if (spec.users < 1 || spec.categories < 1 || spec.regions < 1 || spec.events_per_user < 2) {
    throw InvalidArgument("synthetic spec: users, categories, regions must be >= 1 and "
                          "events_per_user >= 2");
  }
  if (spec.pois < spec.categories) {
    throw InvalidArgument("synthetic spec: fewer POIs (" + std::to_string(spec.pois) +
                          ") than categories (" + std::to_string(spec.categories) + ")");
  }
  if (spec.pois < spec.regions) throw InvalidArgument("synthetic spec: fewer POIs than regions");
  if (spec.pattern == Pattern::kMarkov && spec.branching < 1) {
    throw InvalidArgument("synthetic spec: branching must be >= 1");
  }
  if (spec.poi_randomness < 0.0 || spec.poi_randomness > 1.0) {
    throw InvalidArgument("synthetic spec: poi_randomness must lie in [0, 1]");
  }
  if (spec.personal_bias > 0.0 && spec.favorites < 1) {
    throw InvalidArgument("synthetic spec: personal_bias needs favorites >= 1");
  }

  Rng rng(derive_seed(spec.seed, "synth", 0));
  constexpr double kKmPerDegree = 111.19;
  const double lat_scale = 1.0 / kKmPerDegree;
  const double lon_scale = 1.0 / (kKmPerDegree * std::cos(spec.center_lat * std::numbers::pi / 180.0));

  const auto R = static_cast<std::size_t>(spec.regions);
  const auto C = static_cast<std::size_t>(spec.categories);
  std::vector<LatLon> centers(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double radius = R == 1 ? 0.0 : spec.region_separation_km / 2.0;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(R);
    centers[r] = {spec.center_lat + radius * std::sin(angle) * lat_scale,
                  spec.center_lon + radius * std::cos(angle) * lon_scale};
  }

  struct SynthPoi {
    std::size_t region;
    std::size_t category;
    LatLon loc;
  };
  std::vector<SynthPoi> pois(static_cast<std::size_t>(spec.pois));
  std::vector<std::vector<std::size_t>> region_pois(R);
  for (std::size_t j = 0; j < pois.size(); ++j) {
    const std::size_t r = j % R;
    const std::size_t c = (j / R) % C;
    pois[j] = {r, c,
               {centers[r].lat + rng.normal() * spec.region_spread_km * lat_scale,
                centers[r].lon + rng.normal() * spec.region_spread_km * lon_scale}};
    region_pois[r].push_back(j);
  }

  // successor[p][c]: the POI a visitor of p goes to next when heading for category c.
  std::vector<std::vector<std::size_t>> successor(pois.size(), std::vector<std::size_t>(C));
  for (std::size_t p = 0; p < pois.size(); ++p) {
    const auto& local = region_pois[pois[p].region];
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<std::size_t> options;
      for (std::size_t q : local)
        if (pois[q].category == c) options.push_back(q);
      if (options.empty()) options = local;
      successor[p][c] = options[rng.below(options.size())];
    }
  }

  std::vector<std::vector<std::vector<std::size_t>>> category_pois(R, std::vector<std::vector<std::size_t>>(C));
  for (std::size_t j = 0; j < pois.size(); ++j) category_pois[pois[j].region][pois[j].category].push_back(j);

  std::vector<std::vector<std::size_t>> next_categories(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (spec.pattern == Pattern::kCyclic) {
      next_categories[c] = {(c + 1) % C};
    } else {
      for (int b = 0; b < spec.branching; ++b) next_categories[c].push_back(rng.below(C));
    }
  }

  std::vector<CheckInRow> rows;
  const std::int64_t t0 = 1'600'000'000;
  for (int u = 0; u < spec.users; ++u) {
    Rng ur = rng.fork(static_cast<std::uint64_t>(u));
    const std::size_t home = static_cast<std::size_t>(u) % R;
    const auto& local = region_pois[home];
    std::vector<std::size_t> favorites;
    for (int f = 0; f < spec.favorites; ++f) favorites.push_back(local[ur.below(local.size())]);

    std::size_t cur = local[ur.below(local.size())];
    double t = static_cast<double>(t0) + ur.uniform() * 86400.0 * 30.0;
    for (int e = 0; e < spec.events_per_user; ++e) {
      const Poi p{static_cast<std::int64_t>(cur + 1),
                  static_cast<std::int64_t>(pois[cur].category + 1), pois[cur].loc.lat,
                  pois[cur].loc.lon};
      rows.push_back({static_cast<std::int64_t>(u + 1), p.id, p.category, p.lat, p.lon,
                      static_cast<std::int64_t>(t)});
      t += 3600.0 * std::max(0.1, -spec.mean_gap_hours * std::log(ur.uniform()));

      if (spec.cross_region > 0.0 && R > 1 && ur.uniform() < spec.cross_region) {
        const std::size_t other = (pois[cur].region + 1 + ur.below(R - 1)) % R;
        cur = region_pois[other][ur.below(region_pois[other].size())];
      } else if (spec.personal_bias > 0.0 && ur.uniform() < spec.personal_bias) {
        cur = favorites[ur.below(favorites.size())];
      } else {
        std::size_t c;
        if (ur.uniform() < spec.noise) {
          c = ur.below(C);
        } else {
          const auto& nexts = next_categories[pois[cur].category];
          // First successor dominates a Markov row.
          c = nexts.size() == 1 || ur.uniform() < 0.6 ? nexts[0] : nexts[1 + ur.below(nexts.size() - 1)];
        }
        if (spec.poi_randomness > 0.0 && ur.uniform() < spec.poi_randomness) {
          const auto& options = category_pois[pois[cur].region][c];
          cur = options.empty() ? successor[cur][c] : options[ur.below(options.size())];
        } else {
          cur = successor[cur][c];
        }
      }
    }
  }
  return CheckInDataset::from_rows(std::move(rows));
}

}  // namespace dcpr
