#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vigil/connectivity.hpp"
#include "vigil/preprocess.hpp"
#include "vigil/synth.hpp"
#include "vigil/tpe.hpp"

namespace vigil::cli {

struct Seeds {
  std::uint64_t master = 0;
  std::uint64_t synth = 0;
  std::uint64_t forest = 0;
  std::uint64_t cv = 0;
  std::uint64_t tune = 0;
};

enum class ExtractSource { preprocessed, sessions, inline_preprocess };

struct RunConfig {
  std::filesystem::path output{"vigil-out"};
  std::filesystem::path sessions;      // raw synthetic or imported sessions
  std::filesystem::path preprocessed;  // filtered copies
  std::optional<std::filesystem::path> montage;

  std::vector<int> lags;
  WindowSpec window;
  PreprocessConfig preprocess;
  ExtractSource extract_source = ExtractSource::preprocessed;

  // Forest section as written; resolved per command since "tuned" reads tune output.
  nlohmann::json forest = nlohmann::json::object();
  SearchSpace space;
  TpeConfig tpe;
  std::optional<int> tune_lag;

  int cv_k = 10;
  bool cv_contiguous = false;

  SynthConfig synth;

  std::vector<int> explain_lags;
  std::size_t explain_max_samples = 500;  // 0 = every sample
  std::size_t top_k = 5;

  double alpha = 0.05;
  bool merge_groups = false;
  double behavior_fraction = 0.2;

  Seeds seeds;
  nlohmann::json effective;  // normalized config without paths
  std::string hash;          // FNV-1a of effective.dump()
};

RunConfig parse_config(const nlohmann::json& j, std::optional<std::uint64_t> seed_override,
                       std::optional<std::filesystem::path> out_override);

RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override,
                      std::optional<std::filesystem::path> out_override);

std::string extract_source_name(ExtractSource s);

}  // namespace vigil::cli
