#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rdm/errors.hpp"
#include "rdm/reporting.hpp"
#include "rdm/rng.hpp"

using namespace rdm;

TEST_CASE("single risk value: one occupied bin, KDE peak at the value") {
  reporting::HistogramSpec spec;
  spec.bins = 12;
  double v = 1.37;
  auto report = reporting::risk_histogram({{0, {v}}}, spec);
  REQUIRE(report.domains.size() == 1);
  const auto& d = report.domains[0];

  std::size_t occupied = 0, nonzero_bin = 0;
  for (std::size_t b = 0; b < d.counts.size(); ++b) {
    if (d.counts[b] > 0) {
      ++occupied;
      nonzero_bin = b;
    }
  }
  CHECK(occupied == 1);
  CHECK(report.bin_edges[nonzero_bin] <= v);
  CHECK(v <= report.bin_edges[nonzero_bin + 1]);

  auto peak = std::max_element(d.kde_density.begin(), d.kde_density.end());
  double peak_x = report.kde_grid[static_cast<std::size_t>(peak - d.kde_density.begin())];
  double grid_step = report.kde_grid[1] - report.kde_grid[0];
  CHECK(std::abs(peak_x - v) <= grid_step);
  CHECK(d.mean == v);
}

TEST_CASE("two domains with identical risks produce identical histograms") {
  std::vector<double> risks = {0.1, 0.4, 0.4, 0.9, 1.3};
  auto report = reporting::risk_histogram({{0, risks}, {1, risks}}, reporting::HistogramSpec{});
  REQUIRE(report.domains.size() == 2);
  CHECK(report.domains[0].counts == report.domains[1].counts);
  CHECK(report.domains[0].kde_density == report.domains[1].kde_density);
  CHECK(report.domains[0].mean == report.domains[1].mean);
}

TEST_CASE("KDE integrates to about 1 over the widened range") {
  Rng rng(7);
  std::vector<double> sample(400);
  for (double& v : sample) v = 1.0 + 0.3 * rng.normal();
  auto report = reporting::risk_histogram({{0, sample}}, reporting::HistogramSpec{});
  const auto& d = report.domains[0];
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < report.kde_grid.size(); ++i) {
    double dx = report.kde_grid[i + 1] - report.kde_grid[i];
    integral += 0.5 * (d.kde_density[i] + d.kde_density[i + 1]) * dx;
  }
  CHECK(integral > 0.98);
  CHECK(integral < 1.02);
}

TEST_CASE("histogram counts per domain sum to the sample count") {
  Rng rng(9);
  std::vector<reporting::RiskSample> samples;
  for (int e = 0; e < 3; ++e) {
    reporting::RiskSample s;
    s.domain_id = e;
    s.risks.resize(50 + 30 * static_cast<std::size_t>(e));
    for (double& v : s.risks) v = rng.uniform(0.0, 2.0);
    samples.push_back(std::move(s));
  }
  auto report = reporting::risk_histogram(samples, reporting::HistogramSpec{});
  for (std::size_t e = 0; e < samples.size(); ++e) {
    std::size_t total = 0;
    for (std::size_t c : report.domains[e].counts) total += c;
    CHECK(total == samples[e].risks.size());
  }
}

TEST_CASE("fixed range clamps out-of-range values into edge bins") {
  reporting::HistogramSpec spec;
  spec.bins = 4;
  spec.range_policy = reporting::HistogramSpec::RangePolicy::Fixed;
  spec.range_lo = 0.0;
  spec.range_hi = 1.0;
  auto report = reporting::risk_histogram({{0, {-0.5, 0.3, 2.0}}}, spec);
  std::size_t total = 0;
  for (std::size_t c : report.domains[0].counts) total += c;
  CHECK(total == 3);
  CHECK(report.domains[0].counts.front() == 1);
  CHECK(report.domains[0].counts.back() == 1);
}

TEST_CASE("histogram outputs are byte-identical across calls") {
  Rng rng(11);
  std::vector<double> sample(100);
  for (double& v : sample) v = rng.uniform(0.0, 3.0);
  auto a = reporting::risk_histogram({{0, sample}}, reporting::HistogramSpec{});
  auto b = reporting::risk_histogram({{0, sample}}, reporting::HistogramSpec{});
  CHECK(reporting::histogram_csv(a) == reporting::histogram_csv(b));
  CHECK(reporting::histogram_json(a) == reporting::histogram_json(b));
  CHECK(reporting::histogram_json(a).find("silverman") != std::string::npos);
}

TEST_CASE("histogram spec validation") {
  reporting::HistogramSpec spec;
  spec.bins = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = reporting::HistogramSpec{};
  spec.kde_policy = reporting::HistogramSpec::KdePolicy::Fixed;
  spec.kde_bandwidth = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  CHECK_THROWS_AS(reporting::risk_histogram({{0, {}}}, reporting::HistogramSpec{}), std::invalid_argument);
}

TEST_CASE("compare_table") {
  SUBCASE("single run renders as mean with zero spread") {
    auto rows = reporting::compare_table({{"rdm-worst", 0, 0.563, true}});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean_pct == doctest::Approx(56.3).epsilon(1e-12));
    CHECK(rows[0].std_pct == 0.0);
    CHECK(reporting::table_csv(rows).find("rdm-worst,56.3,0.0,1") != std::string::npos);
    CHECK(reporting::table_text(rows).find("56.3 +- 0.0") != std::string::npos);
  }
  SUBCASE("two-point sample standard deviation") {
    auto rows = reporting::compare_table({{"erm", 0, 0.70, true}, {"erm", 1, 0.74, true}});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean_pct == doctest::Approx(72.0).epsilon(1e-12));
    CHECK(rows[0].std_pct == doctest::Approx(100.0 * 0.04 / std::sqrt(2.0)).epsilon(1e-9));
  }
  SUBCASE("all-failed group is omitted with a warning") {
    std::vector<std::string> warnings;
    auto rows = reporting::compare_table(
        {{"erm", 0, 0.7, true}, {"vrex", 0, 0.0, false}, {"vrex", 1, 0.0, false}}, &warnings);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].label == "erm");
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("vrex") != std::string::npos);
  }
  SUBCASE("groups keep first-seen order") {
    auto rows = reporting::compare_table(
        {{"vrex", 0, 0.7, true}, {"erm", 0, 0.3, true}, {"vrex", 1, 0.72, true}});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].label == "vrex");
    CHECK(rows[1].label == "erm");
    CHECK(rows[0].runs == 2);
  }
}
