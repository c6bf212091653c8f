#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vigil {

class Recording;

/// Scalp regions, declared in lexicographic order of their codes so region
/// pairs sort the same way as their labels.
enum class Region { F = 0, LT = 1, O = 2, P = 3, RT = 4 };

inline constexpr std::size_t kRegionCount = 5;
inline constexpr std::size_t kRegionPairCount = 15;

std::string_view region_code(Region r);
Region parse_region(std::string_view code);

/// Unordered region pair, stored with first <= second.
struct RegionPair {
  Region first;
  Region second;

  static RegionPair of(Region a, Region b);
  /// Position among the 15 pairs in lexicographic order; (F,F) is 0.
  std::size_t level() const;
  static RegionPair from_level(std::size_t level);
  std::string label() const;  // e.g. "LT-O"
  friend bool operator==(const RegionPair&, const RegionPair&) = default;
};

/// Channel label to region mapping.
class Montage {
 public:
  explicit Montage(std::vector<std::pair<std::string, Region>> entries);

  /// The 30-channel layout used for the acquisition system, in acquisition
  /// order (Fp1 ... O2): F x9, LT x4, RT x4, P x8, O x5.
  static const Montage& standard30();

  /// JSON object {"label": "F", ...}.
  static Montage from_json_file(const std::filesystem::path& path);

  const std::vector<std::pair<std::string, Region>>& entries() const { return entries_; }
  std::vector<std::string> labels() const;
  std::size_t size() const { return entries_.size(); }

  /// Throws ValidationError for an unmapped label.
  Region region_of(std::string_view label) const;
  bool contains(std::string_view label) const;

  /// Every channel of `rec` must be mapped.
  void validate_for(const Recording& rec) const;
  void validate_for(const std::vector<std::string>& channel_labels) const;

 private:
  std::vector<std::pair<std::string, Region>> entries_;
};

}  // namespace vigil
