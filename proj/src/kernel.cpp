#include "rdm/kernel.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rdm/errors.hpp"

namespace rdm::kernel {

namespace {
std::atomic<std::uint64_t> g_mmd_evals{0};
}

void KernelSpec::validate() const {
  if (bandwidths.empty()) throw ConfigError("kernel: bandwidth set must be nonempty");
  for (double s : bandwidths) {
    if (!(s > 0.0)) throw ConfigError("kernel: bandwidth must be positive, got " + std::to_string(s));
  }
}

double rbf(double x, double y, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("rbf: bandwidth must be positive, got " + std::to_string(sigma));
  }
  double d = x - y;
  return std::exp(-d * d / (2.0 * sigma));
}

double rbf_multi(double x, double y, const KernelSpec& spec) {
  spec.validate();
  double acc = 0.0;
  for (double s : spec.bandwidths) acc += rbf(x, y, s);
  return acc / static_cast<double>(spec.bandwidths.size());
}

double mmd2(std::span<const double> x, std::span<const double> y, const KernelSpec& spec) {
  spec.validate();
  if (x.empty() || y.empty()) throw std::invalid_argument("mmd2: empty sample");
  g_mmd_evals.fetch_add(1, std::memory_order_relaxed);
  double kxx = 0.0, kxy = 0.0, kyy = 0.0;
  for (double xi : x) {
    for (double xj : x) kxx += rbf_multi(xi, xj, spec);
  }
  for (double xi : x) {
    for (double yj : y) kxy += rbf_multi(xi, yj, spec);
  }
  for (double yi : y) {
    for (double yj : y) kyy += rbf_multi(yi, yj, spec);
  }
  double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  double v = kxx / (n * n) - 2.0 * kxy / (n * m) + kyy / (m * m);
  return v > 0.0 ? v : 0.0;
}

double distributional_variance(const std::vector<std::vector<double>>& samples, const KernelSpec& spec) {
  if (samples.size() < 2) {
    throw std::invalid_argument("distributional_variance: need at least 2 domains, got " +
                                std::to_string(samples.size()));
  }
  std::vector<double> pooled;
  for (const auto& s : samples) {
    if (s.empty()) throw std::invalid_argument("distributional_variance: empty domain sample");
    pooled.insert(pooled.end(), s.begin(), s.end());
  }
  double acc = 0.0;
  for (const auto& s : samples) acc += mmd2(s, pooled, spec);
  return acc / static_cast<double>(samples.size());
}

ad::Var mmd2(ad::Var x, ad::Var y, const KernelSpec& spec) {
  spec.validate();
  g_mmd_evals.fetch_add(1, std::memory_order_relaxed);
  return ad::mmd2(x, y, spec.bandwidths);
}

PooledRisks pool(const std::vector<RiskVector>& risks) {
  if (risks.empty()) throw std::invalid_argument("pool: no domains");
  std::vector<ad::Var> parts;
  PooledRisks out;
  parts.reserve(risks.size());
  for (const RiskVector& r : risks) {
    parts.push_back(r.risks);
    out.block_sizes.push_back(r.n());
  }
  out.risks = ad::concat(parts);
  return out;
}

ad::Var distributional_variance(const std::vector<RiskVector>& risks, const KernelSpec& spec) {
  if (risks.size() < 2) {
    throw std::invalid_argument("distributional_variance: need at least 2 domains, got " +
                                std::to_string(risks.size()));
  }
  PooledRisks pooled = pool(risks);
  ad::Var acc = mmd2(risks[0].risks, pooled.risks, spec);
  for (std::size_t e = 1; e < risks.size(); ++e) {
    acc = ad::add(acc, mmd2(risks[e].risks, pooled.risks, spec));
  }
  return ad::scale(acc, 1.0 / static_cast<double>(risks.size()));
}

std::size_t worst_case_index(std::span<const double> mean_risks) {
  if (mean_risks.empty()) throw std::invalid_argument("worst_case_index: empty list");
  std::size_t best = 0;
  for (std::size_t i = 0; i < mean_risks.size(); ++i) {
    if (std::isnan(mean_risks[i])) {
      throw std::invalid_argument("worst_case_index: NaN mean risk at domain " + std::to_string(i));
    }
    if (mean_risks[i] > mean_risks[best]) best = i;
  }
  return best;
}

std::uint64_t mmd_eval_count() { return g_mmd_evals.load(std::memory_order_relaxed); }
void reset_mmd_eval_count() { g_mmd_evals.store(0, std::memory_order_relaxed); }

}  // namespace rdm::kernel
