#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "temp_dir.hpp"
#include "vigil/error.hpp"
#include "vigil/montage.hpp"
#include "vigil/preprocess.hpp"
#include "vigil/recording.hpp"
#include "vigil/rng.hpp"

using namespace vigil;

namespace {

Recording make_recording(std::size_t channels, std::size_t n, double rate, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < channels; ++c) labels.push_back("C" + std::to_string(c));
  std::vector<double> s(channels * n);
  for (auto& v : s) v = rng.normal();
  return Recording("X", labels, rate, std::move(s));
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("recording rejects broken invariants") {
  CHECK_THROWS_AS(Recording("p", {"A", "A"}, 500, std::vector<double>(4)), ValidationError);
  CHECK_THROWS_AS(Recording("p", {"A", "B"}, 0, std::vector<double>(4)), ValidationError);
  CHECK_THROWS_AS(Recording("p", {"A", "B"}, 500, std::vector<double>(3)), ValidationError);
  CHECK_THROWS_AS(Recording("p", {"A", "B"}, 500, std::vector<double>{}), ValidationError);
  const Recording ok("p", {"A", "B"}, 500, {1, 2, 3, 4});
  CHECK(ok.n_samples() == 2);
  CHECK(ok.channel(1)[0] == 3);
  CHECK(ok.channel_index("B") == 1);
  CHECK_FALSE(ok.channel_index("Z"));
}

TEST_CASE("load_recording derives the sample count from the file size") {
  TempDir dir("rec");
  std::ofstream(dir / "x.f32", std::ios::binary).write(std::string(4000, '\0').data(), 4000);
  write_text(dir / "x.json",
             R"({"participant_id":"P1","channel_labels":["A","B"],"sample_rate_hz":500,"n_samples":500,"data_file":"x.f32"})");
  const auto rec = load_recording(dir / "x.json");
  CHECK(rec.n_channels() == 2);
  CHECK(rec.n_samples() == 500);
  CHECK(rec.sample_rate_hz() == 500.0);
}

TEST_CASE("load_recording rejects a file sized for fewer channels") {
  TempDir dir("rec");
  std::vector<std::string> labels;
  std::string list;
  for (int c = 0; c < 30; ++c) list += (c ? ",\"C" : "\"C") + std::to_string(c) + "\"";
  const std::size_t bytes = 29 * 4 * 10;
  std::ofstream(dir / "x.f32", std::ios::binary).write(std::string(bytes, '\0').data(), static_cast<long>(bytes));
  write_text(dir / "x.json", R"({"participant_id":"P1","channel_labels":[)" + list +
                                 R"(],"sample_rate_hz":500,"n_samples":10,"data_file":"x.f32"})");
  CHECK_THROWS_AS(load_recording(dir / "x.json"), ValidationError);
}

TEST_CASE("load_recording rejects malformed headers") {
  TempDir dir("rec");
  write_text(dir / "a.json", "{not json");
  CHECK_THROWS_AS(load_recording(dir / "a.json"), ValidationError);
  write_text(dir / "b.json", R"({"participant_id":"P1","sample_rate_hz":500,"n_samples":1,"data_file":"x.f32"})");
  CHECK_THROWS_AS(load_recording(dir / "b.json"), ValidationError);
  CHECK_THROWS_AS(load_recording(dir / "missing.json"), ValidationError);
}

TEST_CASE("save then load reproduces float32 samples exactly") {
  TempDir dir("rec");
  auto rec = make_recording(3, 257, 250.0, 11);
  std::vector<double> narrowed(rec.samples().begin(), rec.samples().end());
  for (auto& v : narrowed) v = static_cast<float>(v);
  const Recording exact("X", rec.channel_labels(), 250.0, narrowed);
  save_recording(exact, dir / "x.json", "x.f32");
  const auto back = load_recording(dir / "x.json");
  CHECK(back.channel_labels() == exact.channel_labels());
  CHECK(back.participant_id() == "X");
  REQUIRE(back.samples().size() == exact.samples().size());
  for (std::size_t i = 0; i < narrowed.size(); ++i) CHECK(back.samples()[i] == exact.samples()[i]);
}

TEST_CASE("events parse rows and timeouts") {
  const auto log = parse_events("trial,onset_s,rt_ms\n1,12.5,345.2\n2,18.0,\n");
  REQUIRE(log.size() == 2);
  CHECK(log.trials()[0].index == 1);
  CHECK(log.trials()[0].onset_s == 12.5);
  CHECK(log.trials()[0].rt_ms == 345.2);
  CHECK_FALSE(log.trials()[1].rt_ms);
}

TEST_CASE("events enforce ordering and response range") {
  CHECK_THROWS_AS(parse_events("trial,onset_s,rt_ms\n1,10.0,300\n2,9.0,300\n"), ValidationError);
  CHECK_THROWS_AS(parse_events("trial,onset_s,rt_ms\n1,10.0,0\n"), ValidationError);
  CHECK_THROWS_AS(parse_events("trial,onset_s,rt_ms\n1,10.0,2000.5\n"), ValidationError);
  CHECK_THROWS_AS(parse_events("trial,onset_s,rt_ms\n2,10.0,300\n"), ValidationError);
  CHECK_THROWS_AS(parse_events("trial,onset,rt\n1,10.0,300\n"), ValidationError);
  CHECK_THROWS_AS(parse_events("trial,onset_s,rt_ms\n1,abc,300\n"), ValidationError);
  CHECK_NOTHROW(parse_events("trial,onset_s,rt_ms\n1,10.0,2000\n"));
}

TEST_CASE("events round-trip through CSV") {
  TempDir dir("ev");
  const EventLog log({{1, 3.25, 301.125}, {2, 9.5, std::nullopt}, {3, 15.0 + 1.0 / 3.0, 99.9}});
  save_events(log, dir / "e.csv");
  const auto back = load_events(dir / "e.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.trials()[i].index == log.trials()[i].index);
    CHECK(back.trials()[i].onset_s == log.trials()[i].onset_s);
    CHECK(back.trials()[i].rt_ms == log.trials()[i].rt_ms);
  }
}

TEST_CASE("standard montage matches the region table") {
  const auto& m = Montage::standard30();
  CHECK(m.size() == 30);
  std::array<int, kRegionCount> counts{};
  for (const auto& [label, region] : m.entries()) ++counts[static_cast<std::size_t>(region)];
  CHECK(counts[static_cast<std::size_t>(Region::F)] == 9);
  CHECK(counts[static_cast<std::size_t>(Region::LT)] == 4);
  CHECK(counts[static_cast<std::size_t>(Region::RT)] == 4);
  CHECK(counts[static_cast<std::size_t>(Region::P)] == 8);
  CHECK(counts[static_cast<std::size_t>(Region::O)] == 5);
  CHECK(m.region_of("P7") == Region::LT);
  CHECK(m.region_of("O1") == Region::O);
  CHECK(m.region_of("F3") == Region::F);
  CHECK_THROWS_AS(m.region_of("Xx"), ValidationError);
  CHECK_THROWS_AS(Montage({{"A", Region::F}, {"A", Region::O}}), ValidationError);
}

TEST_CASE("region pairs enumerate 15 unordered levels") {
  CHECK(RegionPair::of(Region::O, Region::LT).label() == "LT-O");
  CHECK(RegionPair::of(Region::F, Region::F).level() == 0);
  std::set<std::size_t> seen;
  for (std::size_t a = 0; a < kRegionCount; ++a) {
    for (std::size_t b = a; b < kRegionCount; ++b) {
      const auto rp = RegionPair::of(static_cast<Region>(a), static_cast<Region>(b));
      CHECK(RegionPair::from_level(rp.level()) == rp);
      seen.insert(rp.level());
    }
  }
  CHECK(seen.size() == kRegionPairCount);
  CHECK(*seen.rbegin() == kRegionPairCount - 1);
}

TEST_CASE("custom montage JSON") {
  TempDir dir("m");
  write_text(dir / "m.json", R"({"A":"F","B":"RT"})");
  const auto m = Montage::from_json_file(dir / "m.json");
  CHECK(m.region_of("B") == Region::RT);
  write_text(dir / "bad.json", R"({"A":"Q"})");
  CHECK_THROWS_AS(Montage::from_json_file(dir / "bad.json"), ValidationError);
  const Recording rec("p", {"A", "C"}, 100, {0, 0});
  CHECK_THROWS_AS(m.validate_for(rec), ValidationError);
}

TEST_CASE("common average reference") {
  SUBCASE("antisymmetric pair unchanged") {
    const Recording rec("p", {"A", "B"}, 100, {1, -2, 3, -1, 2, -3});
    const auto out = common_average_reference(rec);
    for (std::size_t i = 0; i < 6; ++i) CHECK(out.samples()[i] == doctest::Approx(rec.samples()[i]).epsilon(1e-15));
  }
  SUBCASE("offset removed, means zero, idempotent") {
    auto rec = make_recording(5, 200, 100, 3);
    std::vector<double> shifted(rec.samples().begin(), rec.samples().end());
    for (auto& v : shifted) v += 7.5;
    const auto a = common_average_reference(rec);
    const auto b = common_average_reference(Recording("X", rec.channel_labels(), 100, shifted));
    for (std::size_t i = 0; i < a.samples().size(); ++i) CHECK(std::abs(a.samples()[i] - b.samples()[i]) < 1e-12);
    for (std::size_t t = 0; t < 200; ++t) {
      double m = 0;
      for (std::size_t c = 0; c < 5; ++c) m += a.channel(c)[t];
      CHECK(std::abs(m / 5) <= 1e-10);
    }
    const auto twice = common_average_reference(a);
    for (std::size_t i = 0; i < a.samples().size(); ++i) CHECK(std::abs(twice.samples()[i] - a.samples()[i]) <= 1e-10);
  }
  SUBCASE("single channel rejected") {
    CHECK_THROWS_AS(common_average_reference(Recording("p", {"A"}, 100, {1, 2})), ValidationError);
  }
}

TEST_CASE("band-pass design") {
  const auto h = design_bandpass(0.1, 47.0, 3300, 500.0);
  REQUIRE(h.size() == 3301);
  for (std::size_t k = 0; k < h.size(); ++k) CHECK(h[k] == h[h.size() - 1 - k]);
  CHECK(std::abs(kernel_gain(h, 10.0, 500.0) - 1.0) < 0.01);
  CHECK(std::abs(kernel_gain(h, 0.0, 500.0)) < 0.01);
  CHECK(kernel_gain(h, 100.0, 500.0) < 0.01);
  CHECK_THROWS_AS(design_bandpass(0.1, 47.0, 3301, 500.0), ValidationError);
  CHECK_THROWS_AS(design_bandpass(0.1, 260.0, 3300, 500.0), ValidationError);
  CHECK_THROWS_AS(design_bandpass(0.0, 47.0, 3300, 500.0), ValidationError);
  CHECK_THROWS_AS(design_bandpass(50.0, 47.0, 3300, 500.0), ValidationError);
}

TEST_CASE("zero-phase filtering behavior") {
  const double rate = 500.0;
  const int order = 3300;
  const std::size_t n = 20000;
  const std::size_t edge = fir_transient_samples(order);

  SUBCASE("DC is rejected") {
    const Recording rec("p", {"A", "B"}, rate, std::vector<double>(2 * n, 1.0));
    const auto out = bandpass_fir(rec, 0.1, 47.0, order);
    for (std::size_t t = edge; t + edge < n; ++t) CHECK(std::abs(out.channel(0)[t]) < 0.01);
  }
  SUBCASE("10 Hz passes at unit amplitude") {
    std::vector<double> s(2 * n);
    for (std::size_t t = 0; t < n; ++t) s[t] = s[n + t] = std::sin(2 * std::numbers::pi * 10.0 * t / rate);
    const auto out = bandpass_fir(Recording("p", {"A", "B"}, rate, s), 0.1, 47.0, order);
    double peak = 0;
    for (std::size_t t = edge; t + edge < n; ++t) peak = std::max(peak, std::abs(out.channel(0)[t]));
    CHECK(std::abs(peak - 1.0) < 0.01);
    // Zero phase: output tracks the input sample by sample.
    for (std::size_t t = edge; t + edge < n; t += 97) CHECK(std::abs(out.channel(0)[t] - s[t]) < 0.02);
  }
  SUBCASE("symmetric pulse keeps its peak index") {
    const auto h = design_bandpass(1.0, 40.0, 200, rate);
    std::vector<double> x(2001, 0.0);
    for (int k = -20; k <= 20; ++k) x[static_cast<std::size_t>(1000 + k)] = std::exp(-k * k / 50.0);
    const auto y = apply_zero_phase_fir(x, h);
    CHECK(y.size() == x.size());
    CHECK(std::max_element(y.begin(), y.end()) - y.begin() == 1000);
  }
  SUBCASE("linearity") {
    const auto h = design_bandpass(1.0, 40.0, 300, rate);
    Rng rng(5);
    std::vector<double> x(3000), y(3000), z(3000);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
      z[i] = 2.5 * x[i] - 0.75 * y[i];
    }
    const auto fx = apply_zero_phase_fir(x, h);
    const auto fy = apply_zero_phase_fir(y, h);
    const auto fz = apply_zero_phase_fir(z, h);
    double scale = 0;
    for (double v : fz) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(fz[i] - (2.5 * fx[i] - 0.75 * fy[i])) <= 1e-9 * scale);
  }
}

TEST_CASE("downsampling") {
  auto rec = make_recording(2, 1001, 1000.0, 9);
  const auto same = downsample(rec, 1);
  CHECK(std::equal(same.samples().begin(), same.samples().end(), rec.samples().begin()));
  const auto half = downsample(rec, 2);
  CHECK(half.sample_rate_hz() == 500.0);
  CHECK(half.n_samples() == 501);
  CHECK(half.channel(1)[3] == rec.channel(1)[6]);
  const auto a = downsample(downsample(rec, 2), 3);
  const auto b = downsample(rec, 6);
  REQUIRE(a.n_samples() == b.n_samples());
  CHECK(std::equal(a.samples().begin(), a.samples().end(), b.samples().begin()));
  CHECK_THROWS_AS(downsample(rec, 0), ValidationError);
}

TEST_CASE("preprocess composes filter, downsample, and CAR") {
  auto rec = make_recording(3, 4000, 1000.0, 4);
  PreprocessConfig cfg;
  cfg.order = 400;
  cfg.downsample_factor = 2;
  const auto out = preprocess(rec, cfg);
  const auto expected = common_average_reference(downsample(bandpass_fir(rec, 0.1, 47.0, 400), 2));
  REQUIRE(out.n_samples() == 2000);
  for (std::size_t i = 0; i < out.samples().size(); ++i) CHECK(out.samples()[i] == expected.samples()[i]);
}
