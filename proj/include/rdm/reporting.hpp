#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rdm::reporting {

struct HistogramSpec {
  enum class RangePolicy { Auto, Fixed };
  enum class KdePolicy { Silverman, Fixed };

  int bins = 30;
  RangePolicy range_policy = RangePolicy::Auto;
  double range_lo = 0.0, range_hi = 1.0;  // Fixed policy only
  KdePolicy kde_policy = KdePolicy::Silverman;
  double kde_bandwidth = 0.0;  // Fixed policy only
  int kde_points = 200;

  void validate() const;
};

struct RiskSample {
  int domain_id = 0;
  std::vector<double> risks;
};

struct DomainHistogram {
  int domain_id = 0;
  std::vector<std::size_t> counts;   // per bin; sums to n
  std::vector<double> kde_density;   // evaluated at the shared grid
  double mean = 0.0;                 // the vertical-tick marker
  double kde_bandwidth = 0.0;
  std::size_t n = 0;
};

struct HistogramReport {
  HistogramSpec spec;
  std::vector<double> bin_edges;  // bins + 1, shared across domains
  std::vector<double> kde_grid;   // kde_points over the range widened by 3 bandwidths
  std::vector<DomainHistogram> domains;
};

// Shared-bin histogram plus Gaussian KDE curves and per-domain mean
// markers. Silverman bandwidth: 1.06 * sd * n^(-1/5).
HistogramReport risk_histogram(const std::vector<RiskSample>& risks, const HistogramSpec& spec);

// Flat CSV (record,domain_id,x_lo,x_hi,value); byte-identical for
// identical inputs.
std::string histogram_csv(const HistogramReport& report);
// JSON including the full spec for provenance.
std::string histogram_json(const HistogramReport& report);

// --- objective comparison table ------------------------------------------

struct RunSummary {
  std::string label;  // objective kind, possibly annotated with lambda
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;  // fraction in [0,1]
  bool ok = true;
};

struct TableRow {
  std::string label;
  double mean_pct = 0.0;
  double std_pct = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t runs = 0;
};

// Groups runs by label (first-seen order); failed runs are skipped and a
// label whose runs all failed is omitted with a warning.
std::vector<TableRow> compare_table(const std::vector<RunSummary>& runs,
                                    std::vector<std::string>* warnings = nullptr);

std::string table_csv(const std::vector<TableRow>& rows);
std::string table_text(const std::vector<TableRow>& rows);

}  // namespace rdm::reporting
