#pragma once

#include <string>
#include <vector>

#include "rdm/kernel.hpp"
#include "rdm/tape.hpp"

namespace rdm::objectives {

enum class Kind { Erm, RdmFull, RdmWorst, RdmMoments, Vrex, GroupDro, Irm };

Kind kind_from_string(const std::string& s);  // ConfigError naming valid kinds
std::string to_string(Kind k);

struct ObjectiveConfig {
  Kind kind = Kind::Erm;
  double lambda = 1.0;  // matching/penalty coefficient
  double beta = 0.0;    // variance regularisation coefficient (rdm-worst)
  double eta = 0.01;    // GroupDRO step size
  kernel::KernelSpec kernel;

  void validate() const;
};

// Exponentiated-gradient weights over domains, owned by the trainer.
struct GroupDroState {
  std::vector<double> q;

  static GroupDroState uniform(std::size_t m);
};

// Everything one domain's forward pass contributes to an objective.
struct DomainTerms {
  int domain_id = 0;
  ad::Var risks;   // [n]
  ad::Var logits;  // [n, C]; used by the IRM penalty
  const std::vector<int>* labels = nullptr;
};

// --- objective building blocks -------------------------------------------

// (1/m) sum_e mean(risks_e).
ad::Var erm_loss(const std::vector<kernel::RiskVector>& risks);

// erm + lambda * distributional variance over all domains.
ad::Var rdm_full_loss(const std::vector<kernel::RiskVector>& risks, const ObjectiveConfig& cfg);

// erm + lambda * MMD^2(T_w, T) + beta * (var(T_w) + var(T)), with the
// worst-case domain w recomputed from the current minibatch mean risks.
ad::Var rdm_worst_loss(const std::vector<kernel::RiskVector>& risks, const ObjectiveConfig& cfg,
                       std::size_t* worst_out = nullptr);

// erm + lambda * [(mean(T_w)-mean(T))^2 + (var(T_w)-var(T))^2], population
// variances.
ad::Var rdm_moments_loss(const std::vector<kernel::RiskVector>& risks, const ObjectiveConfig& cfg,
                         std::size_t* worst_out = nullptr);

// erm + lambda * population variance of the m domain-mean risks.
ad::Var vrex_loss(const std::vector<kernel::RiskVector>& risks, double lambda);

// Updates q in place (q_e <- q_e * exp(eta * mean_e), renormalized), then
// returns sum_e q_e * mean_e with q held constant.
ad::Var groupdro_loss(const std::vector<kernel::RiskVector>& risks, GroupDroState& state, double eta);

// sum_e (d mean-risk_e / ds at s=1)^2 for a dummy logit scale s.
ad::Var irm_penalty(const std::vector<DomainTerms>& domains);

// --- dispatcher ------------------------------------------------------------

struct LossParts {
  ad::Var total;
  ad::Var erm;
  double penalty_value = 0.0;  // unweighted penalty term (0 when none)
  int worst_domain = -1;       // -1 when the objective has no worst-case notion
};

LossParts build_objective(ad::Tape& tape, const std::vector<DomainTerms>& domains, const ObjectiveConfig& cfg,
                          GroupDroState* dro_state);

}  // namespace rdm::objectives
