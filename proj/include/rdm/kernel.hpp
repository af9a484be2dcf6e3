#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rdm/tape.hpp"

// RBF kernels over scalar risks, squared-MMD estimation, and the
// distributional variance across domains' risk samples. The RKHS feature
// map and the mean embeddings are never materialized; they exist only
// through kernel evaluations.
namespace rdm::kernel {

// RBF bandwidth set used for every MMD computation. The estimator is the
// biased V-statistic; per-bandwidth kernels are combined by arithmetic mean.
struct KernelSpec {
  std::vector<double> bandwidths = default_bandwidths();

  static std::vector<double> default_bandwidths() {
    return {0.0001, 0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
  }

  // Throws ConfigError if the set is empty or any bandwidth is <= 0.
  void validate() const;
};

// Per-sample risks of one domain's batch: the empirical sample of that
// domain's risk distribution.
struct RiskVector {
  int domain_id = 0;
  ad::Var risks;

  std::size_t n() const { return risks.value().size(); }
};

// All domains' risks concatenated, domain block boundaries recorded.
// Realizes the pooled distribution as the uniform mixture when batch sizes
// are equal.
struct PooledRisks {
  ad::Var risks;
  std::vector<std::size_t> block_sizes;
};

// exp(-(x - y)^2 / (2 sigma)). Note the 2*sigma convention (not 2*sigma^2).
double rbf(double x, double y, double sigma);

// Kernel averaged over a bandwidth set.
double rbf_multi(double x, double y, const KernelSpec& spec);

// --- plain (untracked) estimators, clamped to >= 0 for reporting --------
double mmd2(std::span<const double> x, std::span<const double> y, const KernelSpec& spec);
double distributional_variance(const std::vector<std::vector<double>>& samples, const KernelSpec& spec);

// --- autodiff-tracked estimators (unclamped, for gradients) --------------
ad::Var mmd2(ad::Var x, ad::Var y, const KernelSpec& spec);
PooledRisks pool(const std::vector<RiskVector>& risks);
ad::Var distributional_variance(const std::vector<RiskVector>& risks, const KernelSpec& spec);

// Index of the domain with the largest mean risk; ties break to the lowest
// index. Throws on an empty list or NaN entries.
std::size_t worst_case_index(std::span<const double> mean_risks);

// Number of MMD^2 estimator evaluations since the last reset. Used to
// assert the O(1)-vs-O(m) penalty cost claim.
std::uint64_t mmd_eval_count();
void reset_mmd_eval_count();

}  // namespace rdm::kernel
