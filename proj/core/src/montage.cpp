#include "vigil/montage.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "vigil/error.hpp"
#include "vigil/recording.hpp"

namespace vigil {

std::string_view region_code(Region r) {
  switch (r) {
    case Region::F: return "F";
    case Region::LT: return "LT";
    case Region::O: return "O";
    case Region::P: return "P";
    case Region::RT: return "RT";
  }
  return "?";
}

Region parse_region(std::string_view code) {
  if (code == "F") return Region::F;
  if (code == "LT") return Region::LT;
  if (code == "O") return Region::O;
  if (code == "P") return Region::P;
  if (code == "RT") return Region::RT;
  throw ValidationError("unknown region code '" + std::string(code) + "'");
}

RegionPair RegionPair::of(Region a, Region b) {
  return a <= b ? RegionPair{a, b} : RegionPair{b, a};
}

std::size_t RegionPair::level() const {
  const auto a = static_cast<std::size_t>(first);
  const auto b = static_cast<std::size_t>(second);
  // Rows a = 0..4 contribute 5, 4, 3, 2, 1 pairs.
  return a * kRegionCount - a * (a - 1) / 2 + (b - a);
}

RegionPair RegionPair::from_level(std::size_t level) {
  for (std::size_t a = 0; a < kRegionCount; ++a) {
    for (std::size_t b = a; b < kRegionCount; ++b) {
      const RegionPair p{static_cast<Region>(a), static_cast<Region>(b)};
      if (p.level() == level) return p;
    }
  }
  throw ValidationError("region pair level out of range");
}

std::string RegionPair::label() const {
  return std::string(region_code(first)) + "-" + std::string(region_code(second));
}

Montage::Montage(std::vector<std::pair<std::string, Region>> entries) : entries_(std::move(entries)) {
  std::unordered_set<std::string> seen;
  for (const auto& [label, region] : entries_) {
    if (!seen.insert(label).second) throw ValidationError("montage lists '" + label + "' twice");
  }
}

const Montage& Montage::standard30() {
  static const Montage m({
      {"Fp1", Region::F},  {"Fp2", Region::F},  {"Fz", Region::F},   {"F3", Region::F},
      {"F4", Region::F},   {"F7", Region::F},   {"F8", Region::F},   {"FC1", Region::F},
      {"FC2", Region::F},  {"FC5", Region::LT}, {"FC6", Region::RT}, {"Cz", Region::P},
      {"C3", Region::P},   {"C4", Region::P},   {"T7", Region::LT},  {"T8", Region::RT},
      {"CP1", Region::P},  {"CP2", Region::P},  {"CP5", Region::LT}, {"CP6", Region::RT},
      {"Pz", Region::P},   {"P3", Region::P},   {"P4", Region::P},   {"P7", Region::LT},
      {"P8", Region::RT},  {"PO3", Region::O},  {"PO4", Region::O},  {"Oz", Region::O},
      {"O1", Region::O},   {"O2", Region::O},
  });
  return m;
}

Montage Montage::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open montage " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed montage " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError("montage must be a JSON object of label -> region");
  std::vector<std::pair<std::string, Region>> entries;
  for (const auto& [label, code] : j.items()) {
    if (!code.is_string()) throw ValidationError("montage region for '" + label + "' must be a string");
    entries.emplace_back(label, parse_region(code.get<std::string>()));
  }
  return Montage(std::move(entries));
}

std::vector<std::string> Montage::labels() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

bool Montage::contains(std::string_view label) const {
  for (const auto& e : entries_) {
    if (e.first == label) return true;
  }
  return false;
}

Region Montage::region_of(std::string_view label) const {
  for (const auto& e : entries_) {
    if (e.first == label) return e.second;
  }
  throw ValidationError("channel '" + std::string(label) + "' is not in the montage");
}

void Montage::validate_for(const std::vector<std::string>& channel_labels) const {
  for (const auto& l : channel_labels) (void)region_of(l);
}

void Montage::validate_for(const Recording& rec) const { validate_for(rec.channel_labels()); }

}  // namespace vigil
