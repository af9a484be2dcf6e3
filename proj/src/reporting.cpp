#include "rdm/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rdm/errors.hpp"
#include "rdm/io_util.hpp"

namespace rdm::reporting {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::string pct1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

void HistogramSpec::validate() const {
  if (bins < 1) throw ConfigError("histogram: bins must be >= 1");
  if (kde_points < 2) throw ConfigError("histogram: kde_points must be >= 2");
  if (range_policy == RangePolicy::Fixed && !(range_hi > range_lo)) {
    throw ConfigError("histogram: fixed range must satisfy hi > lo");
  }
  if (kde_policy == KdePolicy::Fixed && !(kde_bandwidth > 0.0)) {
    throw ConfigError("histogram: fixed KDE bandwidth must be > 0");
  }
}

HistogramReport risk_histogram(const std::vector<RiskSample>& risks, const HistogramSpec& spec) {
  spec.validate();
  if (risks.empty()) throw std::invalid_argument("risk_histogram: no domains");
  for (const RiskSample& r : risks) {
    if (r.risks.empty()) {
      throw std::invalid_argument("risk_histogram: empty risk sample for domain " + std::to_string(r.domain_id));
    }
  }

  double lo, hi;
  if (spec.range_policy == HistogramSpec::RangePolicy::Fixed) {
    lo = spec.range_lo;
    hi = spec.range_hi;
  } else {
    lo = risks[0].risks[0];
    hi = lo;
    for (const RiskSample& r : risks) {
      for (double v : r.risks) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }

  HistogramReport report;
  report.spec = spec;
  report.bin_edges.resize(static_cast<std::size_t>(spec.bins) + 1);
  for (int b = 0; b <= spec.bins; ++b) {
    report.bin_edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * static_cast<double>(b) / spec.bins;
  }

  double h_max = 0.0;
  for (const RiskSample& r : risks) {
    DomainHistogram d;
    d.domain_id = r.domain_id;
    d.n = r.risks.size();
    d.counts.assign(static_cast<std::size_t>(spec.bins), 0);
    double mean = 0.0;
    for (double v : r.risks) mean += v;
    d.mean = mean / static_cast<double>(d.n);

    for (double v : r.risks) {
      double t = (v - lo) / (hi - lo) * spec.bins;
      int idx = static_cast<int>(t);
      idx = std::clamp(idx, 0, spec.bins - 1);  // hi lands in the last bin
      ++d.counts[static_cast<std::size_t>(idx)];
    }

    if (spec.kde_policy == HistogramSpec::KdePolicy::Fixed) {
      d.kde_bandwidth = spec.kde_bandwidth;
    } else {
      double sd = sample_std(r.risks);
      d.kde_bandwidth = 1.06 * sd * std::pow(static_cast<double>(d.n), -0.2);
      if (!(d.kde_bandwidth > 0.0)) d.kde_bandwidth = (hi - lo) / 20.0;
    }
    h_max = std::max(h_max, d.kde_bandwidth);
    report.domains.push_back(std::move(d));
  }

  double grid_lo = lo - 3.0 * h_max;
  double grid_hi = hi + 3.0 * h_max;
  report.kde_grid.resize(static_cast<std::size_t>(spec.kde_points));
  for (int i = 0; i < spec.kde_points; ++i) {
    report.kde_grid[static_cast<std::size_t>(i)] =
        grid_lo + (grid_hi - grid_lo) * static_cast<double>(i) / (spec.kde_points - 1);
  }

  for (std::size_t di = 0; di < risks.size(); ++di) {
    DomainHistogram& d = report.domains[di];
    double h = d.kde_bandwidth;
    double norm = 1.0 / (static_cast<double>(d.n) * h * kSqrt2Pi);
    d.kde_density.resize(report.kde_grid.size());
    for (std::size_t gi = 0; gi < report.kde_grid.size(); ++gi) {
      double x = report.kde_grid[gi];
      double acc = 0.0;
      for (double v : risks[di].risks) {
        double z = (x - v) / h;
        acc += std::exp(-0.5 * z * z);
      }
      d.kde_density[gi] = norm * acc;
    }
  }
  return report;
}

std::string histogram_csv(const HistogramReport& report) {
  std::ostringstream os;
  os << "record,domain_id,x_lo,x_hi,value\n";
  for (const DomainHistogram& d : report.domains) {
    for (std::size_t b = 0; b < d.counts.size(); ++b) {
      os << "bin," << d.domain_id << ',' << fmt_double(report.bin_edges[b]) << ','
         << fmt_double(report.bin_edges[b + 1]) << ',' << d.counts[b] << '\n';
    }
    for (std::size_t g = 0; g < report.kde_grid.size(); ++g) {
      os << "kde," << d.domain_id << ',' << fmt_double(report.kde_grid[g]) << ",,"
         << fmt_double(d.kde_density[g]) << '\n';
    }
    os << "mean," << d.domain_id << ',' << fmt_double(d.mean) << ",,\n";
  }
  return os.str();
}

std::string histogram_json(const HistogramReport& report) {
  nlohmann::json j;
  j["spec"] = {
      {"bins", report.spec.bins},
      {"range_policy", report.spec.range_policy == HistogramSpec::RangePolicy::Auto ? "auto" : "fixed"},
      {"range_lo", report.spec.range_lo},
      {"range_hi", report.spec.range_hi},
      {"kde_policy", report.spec.kde_policy == HistogramSpec::KdePolicy::Silverman ? "silverman" : "fixed"},
      {"kde_bandwidth", report.spec.kde_bandwidth},
      {"kde_points", report.spec.kde_points},
  };
  j["bin_edges"] = report.bin_edges;
  j["kde_grid"] = report.kde_grid;
  j["domains"] = nlohmann::json::array();
  for (const DomainHistogram& d : report.domains) {
    j["domains"].push_back({
        {"domain_id", d.domain_id},
        {"n", d.n},
        {"mean", d.mean},
        {"kde_bandwidth", d.kde_bandwidth},
        {"counts", d.counts},
        {"kde_density", d.kde_density},
    });
  }
  return j.dump(2) + "\n";
}

std::vector<TableRow> compare_table(const std::vector<RunSummary>& runs, std::vector<std::string>* warnings) {
  std::vector<std::string> order;
  std::vector<std::vector<double>> groups;
  std::vector<bool> any_attempt;
  auto group_index = [&](const std::string& label) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (order[i] == label) return i;
    }
    order.push_back(label);
    groups.emplace_back();
    any_attempt.push_back(false);
    return order.size() - 1;
  };

  for (const RunSummary& r : runs) {
    std::size_t gi = group_index(r.label);
    any_attempt[gi] = true;
    if (r.ok) groups[gi].push_back(r.test_accuracy);
  }

  std::vector<TableRow> rows;
  for (std::size_t gi = 0; gi < order.size(); ++gi) {
    if (groups[gi].empty()) {
      if (warnings != nullptr) {
        warnings->push_back("objective '" + order[gi] + "': no successful runs; row omitted");
      }
      continue;
    }
    double mean = 0.0;
    for (double a : groups[gi]) mean += a;
    mean /= static_cast<double>(groups[gi].size());
    TableRow row;
    row.label = order[gi];
    row.mean_pct = mean * 100.0;
    row.std_pct = sample_std(groups[gi]) * 100.0;
    row.runs = groups[gi].size();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string table_csv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << "objective,mean_accuracy_pct,std_accuracy_pct,runs\n";
  for (const TableRow& r : rows) {
    os << r.label << ',' << pct1(r.mean_pct) << ',' << pct1(r.std_pct) << ',' << r.runs << '\n';
  }
  return os.str();
}

std::string table_text(const std::vector<TableRow>& rows) {
  std::size_t width = 9;  // "objective"
  for (const TableRow& r : rows) width = std::max(width, r.label.size());
  std::ostringstream os;
  os << std::string(width - 9, ' ') << "objective | test accuracy (%)\n";
  os << std::string(width, '-') << "-+-------------------\n";
  for (const TableRow& r : rows) {
    os << std::string(width - r.label.size(), ' ') << r.label << " | " << pct1(r.mean_pct) << " +- "
       << pct1(r.std_pct) << "  (n=" << r.runs << ")\n";
  }
  return os.str();
}

}  // namespace rdm::reporting
