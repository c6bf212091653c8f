#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "output.hpp"
#include "vigil/behavior.hpp"
#include "vigil/dataset.hpp"
#include "vigil/error.hpp"
#include "vigil/explain.hpp"
#include "vigil/forest.hpp"
#include "vigil/lme.hpp"
#include "vigil/log.hpp"
#include "vigil/montage.hpp"
#include "vigil/stats.hpp"

#ifndef VIGIL_VERSION
#define VIGIL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace vigil::cli {
namespace {

class Run {
 public:
  Run(std::string command, const RunConfig& cfg) : command_(std::move(command)), cfg_(cfg) {}

  const RunConfig& cfg() const { return cfg_; }
  fs::path out(const fs::path& rel) const { return cfg_.output / rel; }

  void wrote(const fs::path& path) {
    const std::string rel = fs::relative(path, cfg_.output).generic_string();
    outputs_.insert(rel.rfind("..", 0) == 0 ? path.generic_string() : rel);
  }

  void text(const fs::path& rel, std::string_view content) {
    write_text(out(rel), content);
    wrote(out(rel));
  }
  void csv(const fs::path& rel, const CsvTable& t) {
    write_csv(out(rel), t);
    wrote(out(rel));
  }

  void finish() const {
    json manifest = {
        {"command", command_},
        {"version", VIGIL_VERSION},
        {"config_hash", cfg_.hash},
        {"seeds",
         {{"master", cfg_.seeds.master},
          {"synth", cfg_.seeds.synth},
          {"forest", cfg_.seeds.forest},
          {"cv", cfg_.seeds.cv},
          {"tune", cfg_.seeds.tune}}},
        {"config", cfg_.effective},
        {"outputs", std::vector<std::string>(outputs_.begin(), outputs_.end())},
    };
    write_text(out(fs::path("manifests") / (command_ + ".json")), manifest.dump(2) + "\n");
    log::info(command_ + ": wrote " + std::to_string(outputs_.size()) + " files under " + cfg_.output.string());
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  std::set<std::string> outputs_;
};

std::string lag_dir(int lag) { return "lag_" + std::to_string(lag); }

Montage load_montage(const RunConfig& cfg) {
  return cfg.montage ? Montage::from_json_file(*cfg.montage) : Montage::standard30();
}

HyperParams resolve_forest(const RunConfig& cfg) {
  json f = cfg.forest;
  const std::string preset = f.value("preset", "");
  if (preset == "tuned") {
    const fs::path best = cfg.output / "tune" / "best_params.json";
    if (!fs::exists(best)) throw ValidationError("forest.preset 'tuned' requires a prior tune run (" + best.string() + ")");
    json merged = json::parse(read_text(best)).at("params");
    f.erase("preset");
    for (const auto& [k, v] : f.items()) merged[k] = v;
    return params_from_json(merged.dump());
  }
  if (preset == "default") f.erase("preset");
  return params_from_json(f.dump());
}

std::vector<std::string> participants_with_targets(const RunConfig& cfg) {
  std::vector<std::string> ids;
  for (const auto& p : list_files(cfg.output / "targets", ".csv")) ids.push_back(p.stem().string());
  if (ids.empty()) throw std::runtime_error("no targets found; run extract first");
  return ids;
}

std::vector<std::string> load_channels(const RunConfig& cfg) {
  const json j = json::parse(read_text(cfg.output / "features" / "channels.json"));
  return j.at("channels").get<std::vector<std::string>>();
}

Dataset load_dataset(const RunConfig& cfg, int lag) {
  std::vector<ParticipantFeatures> parts;
  std::vector<std::string> labels;
  for (const auto& id : participants_with_targets(cfg)) {
    FeatureTable ft = load_features_csv(cfg.output / "features" / lag_dir(lag) / (id + ".csv"));
    if (labels.empty()) {
      labels = ft.labels;
    } else if (ft.labels != labels) {
      throw std::runtime_error("feature columns of " + id + " differ from the first participant");
    }
    parts.push_back({id, std::move(ft.rows), load_targets_csv(cfg.output / "targets" / (id + ".csv"))});
  }
  Dataset d = assemble(parts, lag, labels);
  if (d.empty()) throw std::runtime_error("lag " + std::to_string(lag) + " has no samples");
  log::info("lag " + std::to_string(lag) + " s: " + std::to_string(d.size()) + " samples x " +
            std::to_string(d.x.cols()) + " features from " + std::to_string(d.participants.size()) + " participants");
  return d;
}

void cmd_synth(Run& run) {
  const auto& cfg = run.cfg();
  const SynthConfig& sc = cfg.synth;
  for (int p = 0; p < sc.n_participants; ++p) {
    const Session s = generate_session(sc, p);
    const std::string id = s.recording.participant_id();
    const fs::path dir = cfg.sessions;
    save_recording(s.recording, dir / (id + ".json"), id + ".f32");
    save_events(s.events, dir / (id + "_events.csv"));
    std::string truth = "t_s,arousal\n";
    for (std::size_t k = 0; k < s.truth.arousal.size(); ++k) {
      truth += num(static_cast<double>(k) * s.truth.step_s) + "," + num(s.truth.arousal[k]) + "\n";
    }
    write_text(dir / (id + "_truth.csv"), truth);
    for (const char* suffix : {".json", ".f32", "_events.csv", "_truth.csv"}) run.wrote(dir / (id + suffix));
    log::info("synth: " + id + " " + std::to_string(s.recording.n_samples()) + " samples, " +
              std::to_string(s.events.size()) + " trials");
  }
}

void cmd_preprocess(Run& run) {
  const auto& cfg = run.cfg();
  const auto headers = list_files(cfg.sessions, ".json");
  if (headers.empty()) throw std::runtime_error("no recordings in " + cfg.sessions.string());
  for (const auto& h : headers) {
    const Recording rec = load_recording(h);
    const Recording out = preprocess(rec, cfg.preprocess);
    const std::string id = out.participant_id();
    const fs::path dst = cfg.preprocessed / (id + ".json");
    save_recording(out, dst, id + ".f32");
    run.wrote(dst);
    run.wrote(cfg.preprocessed / (id + ".f32"));
    log::info("preprocess: " + id + " at " + num(out.sample_rate_hz()) + " Hz");
  }
}

void cmd_extract(Run& run) {
  const auto& cfg = run.cfg();
  const fs::path src = cfg.extract_source == ExtractSource::preprocessed ? cfg.preprocessed : cfg.sessions;
  const auto headers = list_files(src, ".json");
  if (headers.empty()) throw std::runtime_error("no recordings in " + src.string());
  const Montage montage = load_montage(cfg);
  std::vector<std::string> channels;
  for (const auto& h : headers) {
    Recording rec = load_recording(h);
    if (cfg.extract_source == ExtractSource::inline_preprocess) rec = preprocess(rec, cfg.preprocess);
    const std::string id = rec.participant_id();
    if (channels.empty()) {
      channels = rec.channel_labels();
      montage.validate_for(channels);
    } else if (rec.channel_labels() != channels) {
      throw ValidationError(id + " has a different channel layout");
    }
    const EventLog events = load_events(cfg.sessions / (id + "_events.csv"));
    const TargetSeries targets = build_targets(events);
    const fs::path tpath = run.out(fs::path("targets") / (id + ".csv"));
    save_targets_csv(tpath, targets);
    run.wrote(tpath);
    const auto labels = pair_labels(channels);
    for (int lag : cfg.lags) {
      WindowSpec spec = cfg.window;
      spec.lag_s = lag;
      const LaggedFeatures lf = extract_lagged(rec, events, spec);
      const fs::path fpath = run.out(fs::path("features") / lag_dir(lag) / (id + ".csv"));
      save_features_csv(fpath, labels, lf.rows);
      run.wrote(fpath);
      if (lf.skipped > 0) {
        log::warn(id + " lag " + std::to_string(lag) + ": skipped " + std::to_string(lf.skipped) +
                  " trials whose window left the recording");
      }
    }
    log::info("extract: " + id + " " + std::to_string(targets.size()) + " valid targets");
  }
  run.text("features/channels.json", json{{"channels", channels}}.dump(2) + "\n");
}

void cmd_train(Run& run) {
  const auto& cfg = run.cfg();
  const HyperParams params = resolve_forest(cfg);
  CsvTable oob{{"lag_s", "n_train", "oob_r2"}, {}};
  for (int lag : cfg.lags) {
    const Dataset d = load_dataset(cfg, lag);
    const Forest f = fit_forest(d.x, d.y, params, cfg.seeds.forest);
    const fs::path p = run.out(fs::path("models") / (lag_dir(lag) + ".json"));
    save_forest(f, p);
    run.wrote(p);
    oob.rows.push_back({std::to_string(lag), std::to_string(d.size()), num(f.oob_r2)});
    log::info("train: lag " + std::to_string(lag) + " OOB R2 " + fixed(f.oob_r2, 4));
  }
  run.csv("models/oob.csv", oob);
}

std::string mf_text(const MaxFeatures& mf) { return mf.to_string(); }

std::string depth_text(int depth) { return depth == kUnlimitedDepth ? "none" : std::to_string(depth); }

void cmd_tune(Run& run) {
  const auto& cfg = run.cfg();
  const int lag = cfg.tune_lag.value_or(cfg.lags.front());
  const HyperParams base = resolve_forest(cfg);
  const Dataset d = load_dataset(cfg, lag);
  const TuneResult r = tune(d.x, d.y, cfg.space, cfg.tpe, base, cfg.seeds.forest);
  CsvTable trials{{"trial", "max_features", "min_samples_leaf", "max_depth", "oob_r2"}, {}};
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    const auto& t = r.history[i];
    trials.rows.push_back({std::to_string(i), mf_text(t.params.max_features), std::to_string(t.params.min_samples_leaf),
                           depth_text(t.params.max_depth), num(t.score)});
  }
  run.csv("tune/trials.csv", trials);
  json best = {{"lag_s", lag},
               {"oob_r2", std::isfinite(r.best_score) ? json(r.best_score) : json(nullptr)},
               {"params", json::parse(params_to_json(r.best))}};
  run.text("tune/best_params.json", best.dump(2) + "\n");
  const Forest f = fit_forest(d.x, d.y, r.best, cfg.seeds.forest);
  const fs::path p = run.out(fs::path("models") / ("tuned_" + lag_dir(lag) + ".json"));
  save_forest(f, p);
  run.wrote(p);
  log::info("tune: best OOB R2 " + fixed(r.best_score, 4) + " with max_features " + mf_text(r.best.max_features) +
            ", min_samples_leaf " + std::to_string(r.best.min_samples_leaf) + ", max_depth " +
            depth_text(r.best.max_depth));
}

void cmd_eval(Run& run) {
  const auto& cfg = run.cfg();
  const HyperParams params = resolve_forest(cfg);
  CsvTable table{{"lag_s", "rmse_mean", "rmse_sd", "r_mean", "r_sd"}, {}};
  CsvTable folds{{"lag_s", "fold", "n_train", "n_test", "rmse", "r", "note"}, {}};
  CsvTable baseline{{"lag_s", "rmse_mean", "rmse_sd"}, {}};
  for (int lag : cfg.lags) {
    const Dataset d = load_dataset(cfg, lag);
    const FoldPlan plan = make_folds(d, cfg.cv_k, cfg.seeds.cv, cfg.cv_contiguous);
    const EvalReport rep = evaluate(d, plan, forest_fit_predict(params, cfg.seeds.forest));
    const EvalReport base = evaluate(d, plan, mean_fit_predict());
    table.rows.push_back({std::to_string(lag), num(rep.rmse_mean), num(rep.rmse_sd), num(rep.r_mean), num(rep.r_sd)});
    baseline.rows.push_back({std::to_string(lag), num(base.rmse_mean), num(base.rmse_sd)});
    for (const auto& f : rep.folds) {
      folds.rows.push_back({std::to_string(lag), std::to_string(f.fold), std::to_string(f.n_train),
                            std::to_string(f.n_test), num(f.rmse), f.r ? num(*f.r) : "NA", f.note});
    }
    log::info("eval: lag " + std::to_string(lag) + " RMSE " + fixed(rep.rmse_mean, 3) + " r " + fixed(rep.r_mean, 3));
  }
  run.csv("eval/eval.csv", table);
  run.csv("eval/folds.csv", folds);
  run.csv("eval/baseline.csv", baseline);
}

std::vector<std::size_t> spread_rows(std::size_t n, std::size_t m) {
  std::vector<std::size_t> rows;
  if (m == 0 || m >= n) {
    rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
  }
  rows.reserve(m);
  for (std::size_t i = 0; i < m; ++i) rows.push_back(i * n / m);
  return rows;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "NA"; }

void cmd_explain(Run& run) {
  const auto& cfg = run.cfg();
  const HyperParams params = resolve_forest(cfg);
  const auto channels = load_channels(cfg);
  const Montage montage = load_montage(cfg);
  for (int lag : cfg.explain_lags) {
    const Dataset d = load_dataset(cfg, lag);
    const Forest f = fit_forest(d.x, d.y, params, cfg.seeds.forest);
    const auto rows = spread_rows(d.size(), cfg.explain_max_samples);
    const FeatureMatrix xs = d.x.select_rows(rows);
    const ShapMatrix shap = forest_shap(f, xs);
    const std::string L = lag_dir(lag);

    CsvTable dump{{"participant", "trial", "prediction", "base_value"}, {}};
    for (const auto& name : d.feature_names) dump.header.push_back(name);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& key = d.keys[rows[i]];
      std::vector<std::string> r{d.participants[key.participant], std::to_string(key.trial),
                                 num(predict(f, xs.row(i))), num(shap.base_value)};
      for (double v : shap.row(i)) r.push_back(num(v));
      dump.rows.push_back(std::move(r));
    }
    run.csv("explain/" + L + "_shap.csv", dump);

    const auto summary = feature_summary(shap, xs, d.feature_names);
    const auto regional = regional_table(shap, channels, montage);
    CsvTable sum{{"pair", "chan_a", "chan_b", "region_pair", "mean_abs_shap", "direction_r"}, {}};
    for (std::size_t k = 0; k < summary.size(); ++k) {
      sum.rows.push_back({summary[k].label, regional[k].chan_a, regional[k].chan_b, regional[k].region_pair.label(),
                          num(summary[k].mean_abs_shap), opt_num(summary[k].direction_r)});
    }
    run.csv("explain/" + L + "_summary.csv", sum);

    CsvTable reg{{"feature", "chan_a", "chan_b", "region_pair", "level", "response"}, {}};
    for (const auto& o : regional) {
      reg.rows.push_back({std::to_string(o.feature), o.chan_a, o.chan_b, o.region_pair.label(),
                          std::to_string(o.region_pair.level()), num(o.response)});
    }
    run.csv("explain/" + L + "_regional.csv", reg);

    const auto top = top_k(shap, xs, d.feature_names, cfg.top_k);
    CsvTable tt{{"rank", "pair", "region_pair", "mean_abs_shap", "direction_r"}, {}};
    json tj = {{"lag_s", lag}, {"n_samples", rows.size()}, {"top", json::array()}};
    for (std::size_t i = 0; i < top.size(); ++i) {
      const auto& fr = top[i];
      const std::string rp = regional[fr.feature].region_pair.label();
      tt.rows.push_back({std::to_string(i + 1), fr.label, rp, num(fr.mean_abs_shap), opt_num(fr.direction_r)});
      tj["top"].push_back({{"rank", i + 1},
                           {"pair", fr.label},
                           {"region_pair", rp},
                           {"mean_abs_shap", fr.mean_abs_shap},
                           {"direction_r", fr.direction_r ? json(*fr.direction_r) : json(nullptr)}});
    }
    run.csv("explain/" + L + "_top.csv", tt);
    run.text("explain/" + L + "_top.json", tj.dump(2) + "\n");
    log::info("explain: lag " + std::to_string(lag) + " top feature " + (top.empty() ? "-" : top.front().label));
  }
}

double mean_of(const std::vector<double>& v) { return stats::mean(v); }

void behavior_stats(Run& run) {
  const auto& cfg = run.cfg();
  CsvTable per{{"participant", "n_valid", "early_mean_rt_ms", "late_mean_rt_ms"}, {}};
  std::vector<double> early, late;
  for (const auto& id : participants_with_targets(cfg)) {
    const TargetSeries t = load_targets_csv(cfg.output / "targets" / (id + ".csv"));
    std::vector<double> rts;
    for (const auto& row : t.rows) {
      if (row.outcome == TrialOutcome::valid && row.rt_ms_raw) rts.push_back(*row.rt_ms_raw);
    }
    const auto q = static_cast<std::size_t>(std::floor(cfg.behavior_fraction * static_cast<double>(rts.size())));
    if (q == 0) {
      log::warn("behavior: " + id + " has too few valid trials");
      continue;
    }
    const std::vector<double> e(rts.begin(), rts.begin() + static_cast<std::ptrdiff_t>(q));
    const std::vector<double> l(rts.end() - static_cast<std::ptrdiff_t>(q), rts.end());
    early.push_back(mean_of(e));
    late.push_back(mean_of(l));
    per.rows.push_back({id, std::to_string(rts.size()), num(early.back()), num(late.back())});
  }
  run.csv("stats/behavior_participants.csv", per);
  CsvTable test{{"test", "n", "statistic", "df", "p", "effect"}, {}};
  if (early.size() >= 2) {
    try {
      const auto t = stats::paired_t(early, late);
      test.rows.push_back({"paired_t_early_vs_late", std::to_string(early.size()), num(t.t), std::to_string(t.df),
                           num(t.p), num(t.cohen_d)});
    } catch (const ValidationError& e) {
      log::warn(std::string("behavior: paired t undefined: ") + e.what());
    }
  } else {
    log::warn("behavior: paired t needs at least two participants");
  }
  run.csv("stats/behavior_test.csv", test);
}

void cmd_stats(Run& run) {
  const auto& cfg = run.cfg();
  const auto channels = load_channels(cfg);
  std::map<std::string, std::size_t> chan_index;
  for (std::size_t i = 0; i < channels.size(); ++i) chan_index[channels[i]] = i;
  stats::LmeOptions opt;
  for (std::size_t l = 0; l < kRegionPairCount; ++l) opt.level_names.push_back(RegionPair::from_level(l).label());
  opt.merge_groups = cfg.merge_groups;

  CsvTable all{{"lag_s", "region_pair", "emm", "se", "z", "p", "p_fdr", "significant", "stars"}, {}};
  for (int lag : cfg.explain_lags) {
    const std::string L = lag_dir(lag);
    const CsvTable reg = read_csv(cfg.output / "explain" / (L + "_regional.csv"));
    const auto ca = reg.column("chan_a"), cb = reg.column("chan_b"), lv = reg.column("level"),
               rs = reg.column("response");
    std::vector<stats::LmeObservation> obs;
    for (const auto& r : reg.rows) {
      if (!chan_index.count(r[ca]) || !chan_index.count(r[cb])) throw std::runtime_error("unknown channel in " + L);
      obs.push_back({static_cast<std::size_t>(std::stoul(r[lv])), chan_index[r[ca]], chan_index[r[cb]],
                     std::stod(r[rs])});
    }
    const auto fit = stats::fit_lme(obs, opt);
    if (!fit.converged) log::warn("stats: LME at lag " + std::to_string(lag) + " did not converge");
    const auto emm = stats::emm_table(fit, cfg.alpha);
    CsvTable t{{"region_pair", "emm", "se", "z", "p", "p_fdr", "significant", "stars"}, {}};
    for (const auto& e : emm) {
      std::vector<std::string> row{e.level, num(e.emm), num(e.se), num(e.z), num(e.p), num(e.p_fdr),
                                   e.significant ? "1" : "0", stats::stars(e.p_fdr)};
      t.rows.push_back(row);
      row.insert(row.begin(), std::to_string(lag));
      all.rows.push_back(std::move(row));
    }
    run.csv("stats/" + L + "_emm.csv", t);

    json coefs = json::array();
    for (std::size_t i = 0; i < fit.beta.size(); ++i) {
      coefs.push_back({{"name", fit.coef_names[i]}, {"estimate", fit.beta[i]}, {"se", fit.converged ? json(fit.se(i)) : json(nullptr)}});
    }
    json lj = {{"lag_s", lag},
               {"n_obs", fit.n_obs},
               {"converged", fit.converged},
               {"iterations", fit.iterations},
               {"reml_deviance", fit.reml_deviance},
               {"var_chan_a", fit.var_group1},
               {"var_chan_b", fit.var_group2},
               {"var_residual", fit.sigma2_resid},
               {"merge_groups", cfg.merge_groups},
               {"coefficients", coefs}};
    run.text("stats/" + L + "_lme.json", lj.dump(2) + "\n");
    log::info("stats: lag " + std::to_string(lag) + " " +
              std::to_string(std::count_if(emm.begin(), emm.end(), [](const auto& e) { return e.significant; })) +
              " of " + std::to_string(emm.size()) + " region pairs significant after FDR");
  }
  run.csv("stats/emm_all.csv", all);
  behavior_stats(run);
}

// Report helpers: markdown tables from CSV with numbers rounded for reading.
std::string cell(const std::string& s, int digits) {
  if (s.empty() || s == "NA") return s.empty() ? "" : "NA";
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.find_first_not_of("0123456789+-.eE") != std::string::npos) return s;
  if (s.find_first_of(".eE") == std::string::npos) return s;
  return fixed(v, digits);
}

std::string md_table(const CsvTable& t, int digits, std::size_t max_rows = 0) {
  std::string out = "|";
  for (const auto& h : t.header) out += " " + h + " |";
  out += "\n|";
  for (std::size_t i = 0; i < t.header.size(); ++i) out += "---|";
  out += "\n";
  std::size_t n = 0;
  for (const auto& r : t.rows) {
    if (max_rows && n++ >= max_rows) break;
    out += "|";
    for (const auto& c : r) out += " " + cell(c, digits) + " |";
    out += "\n";
  }
  return out;
}

void cmd_report(Run& run) {
  const auto& cfg = run.cfg();
  const fs::path& o = cfg.output;
  std::string md = "# Vigilance forecasting report\n\n";
  md += "Config hash `" + cfg.hash + "`, master seed " + std::to_string(cfg.seeds.master) + ", version " +
        VIGIL_VERSION + ".\n\n";

  auto missing = [](const std::string& rel, const char* cmd) {
    return "_`" + rel + "` not found; run `vigil " + cmd + "`._\n\n";
  };

  md += "## Forecasting accuracy\n\n";
  if (fs::exists(o / "eval/eval.csv")) {
    md += std::to_string(cfg.cv_k) + "-fold cross-validation per lag (`eval/eval.csv`, folds in `eval/folds.csv`). RMSE in ms.\n\n";
    md += md_table(read_csv(o / "eval/eval.csv"), 3) + "\n";
    if (fs::exists(o / "eval/baseline.csv")) {
      md += "Mean-predictor baseline on the same folds (`eval/baseline.csv`):\n\n";
      md += md_table(read_csv(o / "eval/baseline.csv"), 3) + "\n";
    }
  } else {
    md += missing("eval/eval.csv", "eval");
  }

  md += "## Hyperparameters\n\n";
  if (fs::exists(o / "tune/best_params.json")) {
    const json best = json::parse(read_text(o / "tune/best_params.json"));
    md += "Best of " + std::to_string(read_csv(o / "tune/trials.csv").rows.size()) +
          " TPE trials (`tune/trials.csv`, `tune/best_params.json`) at lag " + std::to_string(best.at("lag_s").get<int>()) +
          " s:\n\n```json\n" + best.at("params").dump(2) + "\n```\n\n";
  } else {
    md += missing("tune/best_params.json", "tune");
  }
  md += "Forest parameters used for train, eval and explain:\n\n```json\n" + params_to_json(resolve_forest(cfg)) +
        "\n```\n\n";
  if (fs::exists(o / "models/oob.csv")) {
    md += "Full-data models (`models/`), OOB R2 per lag (`models/oob.csv`):\n\n" +
          md_table(read_csv(o / "models/oob.csv"), 4) + "\n";
  }

  md += "## Most informative connections\n\n";
  for (int lag : cfg.explain_lags) {
    const std::string rel = "explain/" + lag_dir(lag) + "_top.csv";
    md += "### Lag " + std::to_string(lag) + " s\n\n";
    if (fs::exists(o / rel)) {
      md += "Top features by mean |SHAP| (`" + rel + "`; all features in `explain/" + lag_dir(lag) +
            "_summary.csv`, per-sample values in `explain/" + lag_dir(lag) + "_shap.csv`).\n\n";
      md += md_table(read_csv(o / rel), 4) + "\n";
    } else {
      md += missing(rel, "explain");
    }
  }

  md += "## Regional statistics\n\n";
  for (int lag : cfg.explain_lags) {
    const std::string rel = "stats/" + lag_dir(lag) + "_emm.csv";
    md += "### Lag " + std::to_string(lag) + " s\n\n";
    if (fs::exists(o / rel)) {
      md += "Estimated marginal means of mean |SHAP| per region pair, BH-FDR over 15 tests (`" + rel + "`, model in `stats/" +
            lag_dir(lag) + "_lme.json`).\n\n";
      md += md_table(read_csv(o / rel), 5) + "\n";
    } else {
      md += missing(rel, "stats");
    }
  }

  md += "## Behavior\n\n";
  if (fs::exists(o / "stats/behavior_test.csv")) {
    md += "Early versus late valid reaction times (`stats/behavior_participants.csv`, `stats/behavior_test.csv`).\n\n";
    md += md_table(read_csv(o / "stats/behavior_test.csv"), 4) + "\n";
  } else {
    md += missing("stats/behavior_test.csv", "stats");
  }

  md += "## Artifacts\n\n";
  std::vector<std::string> files;
  if (fs::is_directory(o)) {
    for (const auto& e : fs::recursive_directory_iterator(o)) {
      if (!e.is_regular_file()) continue;
      const std::string rel = fs::relative(e.path(), o).generic_string();
      if (rel == "report.md" || rel == "manifests/report.json") continue;
      files.push_back(rel);
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) md += "- `" + f + "`\n";
  run.text("report.md", md);
}

using Handler = void (*)(Run&);

const std::vector<std::pair<std::string, Handler>>& table() {
  static const std::vector<std::pair<std::string, Handler>> t{
      {"synth", cmd_synth},   {"preprocess", cmd_preprocess}, {"extract", cmd_extract},
      {"train", cmd_train},   {"tune", cmd_tune},             {"eval", cmd_eval},
      {"explain", cmd_explain}, {"stats", cmd_stats},         {"report", cmd_report},
  };
  return t;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : table()) n.push_back(name);
    return n;
  }();
  return names;
}

void run_subcommand(std::string_view name, const RunConfig& config) {
  for (const auto& [n, fn] : table()) {
    if (n == name) {
      Run run(n, config);
      fn(run);
      run.finish();
      return;
    }
  }
  throw ValidationError("unknown subcommand '" + std::string(name) + "'");
}

}  // namespace vigil::cli
