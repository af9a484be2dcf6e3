#include "rdm/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "rdm/errors.hpp"

namespace rdm::objectives {

namespace {

std::vector<kernel::RiskVector> risk_view(const std::vector<DomainTerms>& domains) {
  std::vector<kernel::RiskVector> out;
  out.reserve(domains.size());
  for (const DomainTerms& d : domains) out.push_back({d.domain_id, d.risks});
  return out;
}

std::vector<ad::Var> domain_means(const std::vector<kernel::RiskVector>& risks) {
  std::vector<ad::Var> means;
  means.reserve(risks.size());
  for (const kernel::RiskVector& r : risks) {
    if (r.n() == 0) throw std::invalid_argument("objective: empty domain batch " + std::to_string(r.domain_id));
    means.push_back(ad::mean(r.risks));
  }
  return means;
}

std::vector<double> mean_values(const std::vector<ad::Var>& means) {
  std::vector<double> v;
  v.reserve(means.size());
  for (const ad::Var& m : means) v.push_back(m.value().value());
  return v;
}

void require_multi_domain(const std::vector<kernel::RiskVector>& risks, const char* what) {
  if (risks.size() < 2) {
    throw std::invalid_argument(std::string(what) + ": at least 2 domains required, got " +
                                std::to_string(risks.size()));
  }
}

struct WorstMmd {
  ad::Var penalty;  // MMD^2(T_w, T)
  ad::Var var_reg;  // var(T_w) + var(T)
  std::size_t worst;
};

WorstMmd worst_mmd_penalty(const std::vector<kernel::RiskVector>& risks, const ObjectiveConfig& cfg) {
  std::vector<ad::Var> means = domain_means(risks);
  std::size_t w = kernel::worst_case_index(mean_values(means));
  kernel::PooledRisks pooled = kernel::pool(risks);
  WorstMmd out;
  out.worst = w;
  out.penalty = kernel::mmd2(risks[w].risks, pooled.risks, cfg.kernel);
  out.var_reg = ad::add(ad::variance(risks[w].risks), ad::variance(pooled.risks));
  return out;
}

struct WorstMoments {
  ad::Var penalty;  // (mean gap)^2 + (variance gap)^2
  std::size_t worst;
};

WorstMoments worst_moments_penalty(const std::vector<kernel::RiskVector>& risks) {
  for (const kernel::RiskVector& r : risks) {
    if (r.n() < 2) {
      throw std::invalid_argument("rdm_moments_loss: each domain needs >= 2 risk samples, domain " +
                                  std::to_string(r.domain_id) + " has " + std::to_string(r.n()));
    }
  }
  std::vector<ad::Var> means = domain_means(risks);
  std::size_t w = kernel::worst_case_index(mean_values(means));
  kernel::PooledRisks pooled = kernel::pool(risks);
  ad::Var mean_gap = ad::square(ad::sub(means[w], ad::mean(pooled.risks)));
  ad::Var var_gap = ad::square(ad::sub(ad::variance(risks[w].risks), ad::variance(pooled.risks)));
  return {ad::add(mean_gap, var_gap), w};
}

}  // namespace

Kind kind_from_string(const std::string& s) {
  if (s == "erm") return Kind::Erm;
  if (s == "rdm-full") return Kind::RdmFull;
  if (s == "rdm-worst") return Kind::RdmWorst;
  if (s == "rdm-moments") return Kind::RdmMoments;
  if (s == "vrex") return Kind::Vrex;
  if (s == "groupdro") return Kind::GroupDro;
  if (s == "irm") return Kind::Irm;
  throw ConfigError("unknown objective kind '" + s +
                    "' (valid: erm, rdm-full, rdm-worst, rdm-moments, vrex, groupdro, irm)");
}

std::string to_string(Kind k) {
  switch (k) {
    case Kind::Erm: return "erm";
    case Kind::RdmFull: return "rdm-full";
    case Kind::RdmWorst: return "rdm-worst";
    case Kind::RdmMoments: return "rdm-moments";
    case Kind::Vrex: return "vrex";
    case Kind::GroupDro: return "groupdro";
    case Kind::Irm: return "irm";
  }
  return "?";
}

void ObjectiveConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("objective: lambda must be >= 0");
  if (beta < 0.0) throw ConfigError("objective: beta must be >= 0");
  if (kind == Kind::GroupDro && !(eta > 0.0)) throw ConfigError("objective: groupdro eta must be > 0");
  kernel.validate();
}

GroupDroState GroupDroState::uniform(std::size_t m) {
  GroupDroState s;
  s.q.assign(m, 1.0 / static_cast<double>(m));
  return s;
}

ad::Var erm_loss(const std::vector<kernel::RiskVector>& risks) {
  if (risks.empty()) throw std::invalid_argument("erm_loss: no domains");
  std::vector<ad::Var> means = domain_means(risks);
  return ad::mean(ad::concat(means));
}

ad::Var rdm_full_loss(const std::vector<kernel::RiskVector>& risks, const ObjectiveConfig& cfg) {
  require_multi_domain(risks, "rdm_full_loss");
  ad::Var penalty = kernel::distributional_variance(risks, cfg.kernel);
  return ad::add(erm_loss(risks), ad::scale(penalty, cfg.lambda));
}

ad::Var rdm_worst_loss(const std::vector<kernel::RiskVector>& risks, const ObjectiveConfig& cfg,
                       std::size_t* worst_out) {
  require_multi_domain(risks, "rdm_worst_loss");
  WorstMmd wp = worst_mmd_penalty(risks, cfg);
  if (worst_out != nullptr) *worst_out = wp.worst;
  ad::Var loss = ad::add(erm_loss(risks), ad::scale(wp.penalty, cfg.lambda));
  if (cfg.beta > 0.0) loss = ad::add(loss, ad::scale(wp.var_reg, cfg.beta));
  return loss;
}

ad::Var rdm_moments_loss(const std::vector<kernel::RiskVector>& risks, const ObjectiveConfig& cfg,
                         std::size_t* worst_out) {
  require_multi_domain(risks, "rdm_moments_loss");
  WorstMoments wp = worst_moments_penalty(risks);
  if (worst_out != nullptr) *worst_out = wp.worst;
  return ad::add(erm_loss(risks), ad::scale(wp.penalty, cfg.lambda));
}

ad::Var vrex_loss(const std::vector<kernel::RiskVector>& risks, double lambda) {
  require_multi_domain(risks, "vrex_loss");
  std::vector<ad::Var> means = domain_means(risks);
  ad::Var penalty = ad::variance(ad::concat(means));
  return ad::add(erm_loss(risks), ad::scale(penalty, lambda));
}

ad::Var groupdro_loss(const std::vector<kernel::RiskVector>& risks, GroupDroState& state, double eta) {
  if (risks.empty()) throw std::invalid_argument("groupdro_loss: no domains");
  if (state.q.size() != risks.size()) {
    throw std::invalid_argument("groupdro_loss: weight vector size mismatch");
  }
  std::vector<ad::Var> means = domain_means(risks);
  std::vector<double> mv = mean_values(means);
  double z = 0.0;
  for (std::size_t e = 0; e < mv.size(); ++e) {
    state.q[e] *= std::exp(eta * mv[e]);
    z += state.q[e];
  }
  for (double& q : state.q) q /= z;

  ad::Tape* tape = means[0].tape;
  ad::Var qv = tape->leaf(Tensor::vector(state.q), false);
  return ad::sum(ad::mul(ad::concat(means), qv));
}

ad::Var irm_penalty(const std::vector<DomainTerms>& domains) {
  if (domains.empty()) throw std::invalid_argument("irm_penalty: no domains");
  ad::Var acc;
  for (const DomainTerms& d : domains) {
    if (d.labels == nullptr) throw std::invalid_argument("irm_penalty: labels required");
    ad::Var g = ad::square(ad::irm_scale_grad(d.logits, *d.labels));
    acc = acc.valid() ? ad::add(acc, g) : g;
  }
  return acc;
}

LossParts build_objective(ad::Tape& /*tape*/, const std::vector<DomainTerms>& domains, const ObjectiveConfig& cfg,
                          GroupDroState* dro_state) {
  cfg.validate();
  std::vector<kernel::RiskVector> risks = risk_view(domains);
  LossParts parts;
  parts.erm = erm_loss(risks);

  auto clamp0 = [](double v) { return v > 0.0 ? v : 0.0; };

  switch (cfg.kind) {
    case Kind::Erm: {
      parts.total = parts.erm;
      break;
    }
    case Kind::RdmFull: {
      require_multi_domain(risks, "rdm_full_loss");
      ad::Var penalty = kernel::distributional_variance(risks, cfg.kernel);
      parts.penalty_value = clamp0(penalty.value().value());
      parts.total = ad::add(parts.erm, ad::scale(penalty, cfg.lambda));
      break;
    }
    case Kind::RdmWorst: {
      require_multi_domain(risks, "rdm_worst_loss");
      WorstMmd wp = worst_mmd_penalty(risks, cfg);
      parts.worst_domain = static_cast<int>(wp.worst);
      parts.penalty_value = clamp0(wp.penalty.value().value());
      parts.total = ad::add(parts.erm, ad::scale(wp.penalty, cfg.lambda));
      if (cfg.beta > 0.0) parts.total = ad::add(parts.total, ad::scale(wp.var_reg, cfg.beta));
      break;
    }
    case Kind::RdmMoments: {
      require_multi_domain(risks, "rdm_moments_loss");
      WorstMoments wp = worst_moments_penalty(risks);
      parts.worst_domain = static_cast<int>(wp.worst);
      parts.penalty_value = wp.penalty.value().value();
      parts.total = ad::add(parts.erm, ad::scale(wp.penalty, cfg.lambda));
      break;
    }
    case Kind::Vrex: {
      require_multi_domain(risks, "vrex_loss");
      std::vector<ad::Var> means = domain_means(risks);
      ad::Var penalty = ad::variance(ad::concat(means));
      parts.penalty_value = penalty.value().value();
      parts.total = ad::add(parts.erm, ad::scale(penalty, cfg.lambda));
      break;
    }
    case Kind::GroupDro: {
      if (dro_state == nullptr) throw std::invalid_argument("build_objective: groupdro state required");
      parts.total = groupdro_loss(risks, *dro_state, cfg.eta);
      break;
    }
    case Kind::Irm: {
      ad::Var penalty = irm_penalty(domains);
      parts.penalty_value = penalty.value().value();
      parts.total = ad::add(parts.erm, ad::scale(penalty, cfg.lambda));
      break;
    }
  }

  if (parts.worst_domain < 0) {
    std::vector<ad::Var> means = domain_means(risks);
    parts.worst_domain = static_cast<int>(kernel::worst_case_index(mean_values(means)));
  }
  return parts;
}

}  // namespace rdm::objectives
