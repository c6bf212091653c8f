#include "vigil/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "vigil/error.hpp"
#include "vigil/stats.hpp"

namespace vigil {

Dataset assemble(std::span<const ParticipantFeatures> participants, int lag_s, std::vector<std::string> feature_names) {
  Dataset out;
  out.lag_s = lag_s;
  std::optional<std::size_t> width;
  if (!feature_names.empty()) width = feature_names.size();
  std::vector<double> flat;
  for (std::size_t p = 0; p < participants.size(); ++p) {
    const auto& part = participants[p];
    out.participants.push_back(part.id);
    for (const auto& row : part.rows) {
      if (row.lag_s != lag_s) continue;
      if (!width) width = row.values.size();
      if (row.values.size() != *width) {
        throw ValidationError("participant " + part.id + " has " + std::to_string(row.values.size()) +
                              " features per row, expected " + std::to_string(*width));
      }
      const auto it = part.targets.smoothed_rt_ms.find(row.trial_index);
      if (it == part.targets.smoothed_rt_ms.end()) continue;
      if (!std::isfinite(it->second)) throw ValidationError("non-finite target in participant " + part.id);
      out.keys.push_back({p, row.trial_index});
      out.y.push_back(it->second);
      flat.insert(flat.end(), row.values.begin(), row.values.end());
    }
  }
  const std::size_t d = width.value_or(0);
  out.x = FeatureMatrix(out.y.size(), d, std::move(flat));
  out.feature_names = std::move(feature_names);
  return out;
}

std::vector<std::size_t> FoldPlan::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

FoldPlan make_folds(const Dataset& data, int k, std::uint64_t seed, bool contiguous) {
  if (k < 2) throw ValidationError("cross-validation needs k >= 2");
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.contiguous = contiguous;
  plan.fold_of.assign(data.size(), -1);
  std::vector<std::vector<std::size_t>> by_participant(data.participants.size());
  for (std::size_t i = 0; i < data.size(); ++i) by_participant[data.keys[i].participant].push_back(i);
  const auto uk = static_cast<std::size_t>(k);
  for (std::size_t p = 0; p < by_participant.size(); ++p) {
    auto& rows = by_participant[p];
    const std::size_t start = p % uk;
    if (contiguous) {
      // Blocks in trial order; the first (m mod k) blocks take one extra.
      const std::size_t m = rows.size();
      std::size_t pos = 0;
      for (std::size_t b = 0; b < uk; ++b) {
        const std::size_t len = m / uk + (b < m % uk ? 1 : 0);
        for (std::size_t j = 0; j < len; ++j) plan.fold_of[rows[pos++]] = static_cast<int>((start + b) % uk);
      }
      continue;
    }
    Rng rng(derive_seed(seed, p));
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.index(i)]);
    for (std::size_t j = 0; j < rows.size(); ++j) plan.fold_of[rows[j]] = static_cast<int>((start + j) % uk);
  }
  return plan;
}

EvalReport evaluate(const Dataset& data, const FoldPlan& plan, const FitPredict& fit_predict) {
  if (plan.fold_of.size() != data.size()) throw ValidationError("fold plan does not match the dataset");
  EvalReport report;
  report.lag_s = data.lag_s;
  for (int f = 0; f < plan.k; ++f) {
    const auto test = plan.test_indices(f);
    const auto train = plan.train_indices(f);
    if (test.size() < 2) {
      throw ValidationError("fold " + std::to_string(f) + " has " + std::to_string(test.size()) +
                            " test samples; at least 2 are needed");
    }
    if (train.empty()) throw ValidationError("fold " + std::to_string(f) + " has no training samples");
    const FeatureMatrix x_train = data.x.select_rows(train);
    const FeatureMatrix x_test = data.x.select_rows(test);
    std::vector<double> y_train, y_test;
    for (auto i : train) y_train.push_back(data.y[i]);
    for (auto i : test) y_test.push_back(data.y[i]);
    const auto pred = fit_predict(x_train, y_train, x_test, f);
    if (pred.size() != test.size()) throw std::runtime_error("model returned the wrong number of predictions");
    FoldMetrics m;
    m.fold = f;
    m.n_train = train.size();
    m.n_test = test.size();
    m.rmse = stats::rmse(pred, y_test);
    m.r = stats::pearson_r(pred, y_test);
    if (!m.r) m.note = "r undefined: zero variance in predictions or targets";
    report.folds.push_back(std::move(m));
  }
  std::vector<double> rmses, rs;
  for (const auto& m : report.folds) {
    rmses.push_back(m.rmse);
    if (m.r) rs.push_back(*m.r);
  }
  report.rmse_mean = stats::mean(rmses);
  report.rmse_sd = stats::population_sd(rmses);
  if (rs.empty()) {
    report.r_mean = report.r_sd = std::numeric_limits<double>::quiet_NaN();
  } else {
    report.r_mean = stats::mean(rs);
    report.r_sd = stats::population_sd(rs);
  }
  return report;
}

FitPredict forest_fit_predict(const HyperParams& params, std::uint64_t seed) {
  return [params, seed](const FeatureMatrix& x_train, std::span<const double> y_train, const FeatureMatrix& x_test,
                        int fold) {
    const Forest forest = fit_forest(x_train, y_train, params, derive_seed(seed, static_cast<std::uint64_t>(fold)));
    return predict(forest, x_test);
  };
}

FitPredict mean_fit_predict() {
  return [](const FeatureMatrix&, std::span<const double> y_train, const FeatureMatrix& x_test, int) {
    return std::vector<double>(x_test.rows(), stats::mean(y_train));
  };
}

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, const std::string& where) {
  T value{};
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ValidationError(where + ": invalid number '" + std::string(field) + "'");
  return value;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

TrialOutcome parse_outcome(std::string_view s, const std::string& where) {
  for (auto o : {TrialOutcome::valid, TrialOutcome::false_alarm, TrialOutcome::lapse, TrialOutcome::timeout}) {
    if (outcome_name(o) == s) return o;
  }
  throw ValidationError(where + ": unknown outcome '" + std::string(s) + "'");
}

}  // namespace

void save_features_csv(const std::filesystem::path& path, const std::vector<std::string>& labels,
                       std::span<const ConnectivityVector> rows) {
  auto out = open_out(path);
  out << "trial,lag_s";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  for (const auto& row : rows) {
    if (row.values.size() != labels.size()) throw ValidationError("feature row width does not match labels");
    out << row.trial_index << ',' << row.lag_s;
    for (double v : row.values) out << ',' << fmt(v);
    out << '\n';
  }
}

FeatureTable load_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open feature table " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty feature table");
  line = strip_cr(line);
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "trial" || header[1] != "lag_s") {
    throw ValidationError(path.string() + ": header must start with trial,lag_s");
  }
  FeatureTable table;
  for (std::size_t i = 2; i < header.size(); ++i) table.labels.emplace_back(header[i]);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) throw ValidationError(where + ": wrong number of fields");
    ConnectivityVector row;
    row.trial_index = parse_number<int>(fields[0], where);
    row.lag_s = parse_number<int>(fields[1], where);
    row.values.reserve(fields.size() - 2);
    for (std::size_t i = 2; i < fields.size(); ++i) row.values.push_back(parse_number<double>(fields[i], where));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void save_targets_csv(const std::filesystem::path& path, const TargetSeries& targets) {
  auto out = open_out(path);
  out << "trial,rt_ms_raw,outcome,rt_ms_smoothed\n";
  for (const auto& r : targets.rows) {
    out << r.trial << ',' << (r.rt_ms_raw ? fmt(*r.rt_ms_raw) : "") << ',' << outcome_name(r.outcome) << ','
        << (r.rt_ms_smoothed ? fmt(*r.rt_ms_smoothed) : "") << '\n';
  }
}

TargetSeries load_targets_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open targets " + path.string());
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "trial,rt_ms_raw,outcome,rt_ms_smoothed") {
    throw ValidationError(path.string() + ": expected header trial,rt_ms_raw,outcome,rt_ms_smoothed");
  }
  TargetSeries series;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = split_csv(line);
    if (f.size() != 4) throw ValidationError(where + ": expected 4 fields");
    TargetRow row;
    row.trial = parse_number<int>(f[0], where);
    if (!f[1].empty()) row.rt_ms_raw = parse_number<double>(f[1], where);
    row.outcome = parse_outcome(f[2], where);
    if (!f[3].empty()) {
      row.rt_ms_smoothed = parse_number<double>(f[3], where);
      series.smoothed_rt_ms[row.trial] = *row.rt_ms_smoothed;
    }
    series.rows.push_back(row);
  }
  return series;
}

}  // namespace vigil
