#include "promptloop/prefopt.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "promptloop/error.hpp"

namespace promptloop::prefopt {
namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out = log_softmax(logits);
  for (double& v : out) v = std::exp(v);
  return out;
}

void check_structure(const PolicyParams& policy, const PolicyParams& reference) {
  if (!policy.same_structure(reference)) throw DataError("policy and reference differ in structure");
}

void check_choice(const PolicyParams& policy, std::size_t ctx, const PromptChoice& y) {
  const auto& slots = policy.contexts()[ctx].slots;
  if (y.selections.size() != slots.size()) {
    throw DataError("choice for context '" + y.context + "' has " + std::to_string(y.selections.size()) +
                    " selections, policy has " + std::to_string(slots.size()) + " slots");
  }
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (y.selections[s] < 0 || static_cast<std::size_t>(y.selections[s]) >= slots[s].vocab.size()) {
      throw DataError("selection out of range in slot '" + slots[s].name + "'");
    }
  }
}

/// grad += scale * d log pi(y|x) / d logits, i.e. scale * (onehot - softmax).
void add_log_prob_gradient(const PolicyParams& policy, const PromptChoice& y, double scale, Gradient& grad) {
  const std::size_t ctx = policy.context_index(y.context);
  check_choice(policy, ctx, y);
  for (std::size_t s = 0; s < y.selections.size(); ++s) {
    const auto probs = softmax(policy.slot_logits(ctx, s));
    const std::size_t base = policy.offset(ctx, s);
    for (std::size_t k = 0; k < probs.size(); ++k) {
      const double onehot = static_cast<int>(k) == y.selections[s] ? 1.0 : 0.0;
      grad[base + k] += scale * (onehot - probs[k]);
    }
  }
}

double log_ratio(const PolicyParams& policy, const PolicyParams& reference, const PromptChoice& y) {
  return log_prob(policy, y) - log_prob(reference, y);
}

}  // namespace

PolicyParams::PolicyParams(std::vector<ContextSpec> contexts) : contexts_(std::move(contexts)) {
  layout();
  logits_.assign(logits_.size(), 0.0);
}

PolicyParams::PolicyParams(std::vector<ContextSpec> contexts, std::vector<double> logits)
    : contexts_(std::move(contexts)) {
  layout();
  if (logits.size() != logits_.size()) {
    throw DataError("policy expects " + std::to_string(logits_.size()) + " logits, got " +
                    std::to_string(logits.size()));
  }
  for (double v : logits) {
    if (!std::isfinite(v)) throw DataError("policy logits must be finite");
  }
  logits_ = std::move(logits);
}

void PolicyParams::layout() {
  std::size_t n = 0;
  offsets_.clear();
  for (const auto& ctx : contexts_) {
    auto& offs = offsets_.emplace_back();
    for (const auto& slot : ctx.slots) {
      if (slot.vocab.empty()) throw DataError("slot '" + slot.name + "' has an empty vocabulary");
      offs.push_back(n);
      n += slot.vocab.size();
    }
  }
  for (std::size_t i = 0; i < contexts_.size(); ++i) {
    for (std::size_t j = i + 1; j < contexts_.size(); ++j) {
      if (contexts_[i].id == contexts_[j].id) throw DataError("duplicate context id '" + contexts_[i].id + "'");
    }
  }
  logits_.resize(n);
}

std::size_t PolicyParams::context_index(std::string_view id) const {
  for (std::size_t i = 0; i < contexts_.size(); ++i) {
    if (contexts_[i].id == id) return i;
  }
  throw DataError("unknown context '" + std::string(id) + "'");
}

std::span<const double> PolicyParams::slot_logits(std::size_t context, std::size_t slot) const {
  return {logits_.data() + offsets_[context][slot], contexts_[context].slots[slot].vocab.size()};
}

std::span<double> PolicyParams::slot_logits(std::size_t context, std::size_t slot) {
  return {logits_.data() + offsets_[context][slot], contexts_[context].slots[slot].vocab.size()};
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - m);
  const double log_z = m + std::log(total);
  std::vector<double> out(logits.begin(), logits.end());
  for (double& v : out) v -= log_z;
  return out;
}

double log_prob(const PolicyParams& policy, const PromptChoice& y) {
  const std::size_t ctx = policy.context_index(y.context);
  check_choice(policy, ctx, y);
  double total = 0.0;
  for (std::size_t s = 0; s < y.selections.size(); ++s) {
    total += log_softmax(policy.slot_logits(ctx, s))[static_cast<std::size_t>(y.selections[s])];
  }
  return total;
}

double choice_probability(const PolicyParams& policy, const PromptChoice& y) { return std::exp(log_prob(policy, y)); }

double bradley_terry(double r_w, double r_l) { return sigmoid(r_w - r_l); }

double reward_model_nll(std::span<const std::pair<double, double>> score_pairs) {
  if (score_pairs.empty()) throw DataError("reward_model_nll needs at least one pair");
  double total = 0.0;
  for (const auto& [r_w, r_l] : score_pairs) total += softplus(-(r_w - r_l));
  return total / static_cast<double>(score_pairs.size());
}

double kl_objective_value(double mean_reward, double mean_kl, double beta) {
  if (mean_kl < 0) throw DataError("KL divergence cannot be negative");
  if (!(beta > 0)) throw DataError("beta must be positive");
  return mean_reward - beta * mean_kl;
}

double context_kl(const PolicyParams& policy, const PolicyParams& reference, std::size_t context) {
  check_structure(policy, reference);
  double total = 0.0;
  for (std::size_t s = 0; s < policy.contexts()[context].slots.size(); ++s) {
    const auto lp = log_softmax(policy.slot_logits(context, s));
    const auto lq = log_softmax(reference.slot_logits(context, s));
    for (std::size_t k = 0; k < lp.size(); ++k) total += std::exp(lp[k]) * (lp[k] - lq[k]);
  }
  return std::max(total, 0.0);
}

double exact_reference_kl(const PolicyParams& policy, const PolicyParams& reference,
                          std::span<const std::string> contexts) {
  check_structure(policy, reference);
  if (contexts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& id : contexts) total += context_kl(policy, reference, policy.context_index(id));
  return total / static_cast<double>(contexts.size());
}

LossAndGradient dpo_loss(const PolicyParams& policy, const PolicyParams& reference,
                         std::span<const PreferencePair> pairs, double beta) {
  check_structure(policy, reference);
  if (pairs.empty()) throw DataError("dpo_loss needs at least one pair");
  LossAndGradient out{0.0, Gradient(policy.size(), 0.0)};
  const double n = static_cast<double>(pairs.size());
  for (const auto& pair : pairs) {
    if (pair.winner.context != pair.loser.context) throw DataError("preference pair mixes contexts");
    const double margin =
        beta * (log_ratio(policy, reference, pair.winner) - log_ratio(policy, reference, pair.loser));
    out.loss += softplus(-margin) / n;
    // d/dmargin of -log sigma(margin) = -(1 - sigma(margin)).
    const double coef = -sigmoid(-margin) * beta / n;
    add_log_prob_gradient(policy, pair.winner, coef, out.gradient);
    add_log_prob_gradient(policy, pair.loser, -coef, out.gradient);
  }
  return out;
}

LossAndGradient kto_loss_with_baseline(const PolicyParams& policy, const PolicyParams& reference,
                                       std::span<const PreferenceExample> dataset, const KTOConfig& cfg, double z0) {
  check_structure(policy, reference);
  if (dataset.empty()) throw DataError("kto_loss needs a non-empty dataset");
  if (!(cfg.beta > 0 && cfg.lambda_D > 0 && cfg.lambda_U > 0)) throw DataError("KTO constants must be positive");
  LossAndGradient out{0.0, Gradient(policy.size(), 0.0)};
  const double n = static_cast<double>(dataset.size());
  for (const auto& ex : dataset) {
    const double r = log_ratio(policy, reference, ex.choice);
    double dloss_dr = 0.0;
    if (ex.desirable) {
      const double s = sigmoid(cfg.beta * (r - z0));
      out.loss += (cfg.lambda_D - cfg.lambda_D * s) / n;
      dloss_dr = -cfg.lambda_D * cfg.beta * s * (1.0 - s);
    } else {
      const double s = sigmoid(cfg.beta * (z0 - r));
      out.loss += (cfg.lambda_U - cfg.lambda_U * s) / n;
      dloss_dr = cfg.lambda_U * cfg.beta * s * (1.0 - s);
    }
    add_log_prob_gradient(policy, ex.choice, dloss_dr / n, out.gradient);
  }
  return out;
}

LossAndGradient kto_loss(const PolicyParams& policy, const PolicyParams& reference,
                         std::span<const PreferenceExample> dataset, const KTOConfig& cfg) {
  check_structure(policy, reference);
  if (dataset.empty()) throw DataError("kto_loss needs a non-empty dataset");
  std::vector<std::string> contexts;
  contexts.reserve(dataset.size());
  for (const auto& ex : dataset) contexts.push_back(ex.choice.context);
  const double z0 = exact_reference_kl(policy, reference, contexts);
  return kto_loss_with_baseline(policy, reference, dataset, cfg, z0);
}

PreferenceDataset build_preference_dataset(std::span<const ScoredSample> scored) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ScoredSample*>> by_context;
  for (const auto& s : scored) {
    auto [it, inserted] = by_context.try_emplace(s.choice.context);
    if (inserted) order.push_back(s.choice.context);
    it->second.push_back(&s);
  }
  PreferenceDataset out;
  for (const auto& ctx : order) {
    auto& group = by_context[ctx];
    if (group.size() < 2) throw DataError("context '" + ctx + "' has fewer than 2 scored samples");
    std::stable_sort(group.begin(), group.end(), [](const ScoredSample* a, const ScoredSample* b) {
      if (a->reward != b->reward) return a->reward > b->reward;
      return a->prompt_text < b->prompt_text;
    });
    const std::size_t half = group.size() / 2;
    for (std::size_t i = 0; i < half; ++i) out.examples.push_back({group[i]->choice, true});
    for (std::size_t i = group.size() - half; i < group.size(); ++i) out.examples.push_back({group[i]->choice, false});
    for (std::size_t i = 0; i < half; ++i) {
      out.pairs.push_back({group[i]->choice, group[group.size() - half + i]->choice});
    }
  }
  return out;
}

PolicyParams gradient_step(const PolicyParams& policy, const Gradient& gradient, double learning_rate) {
  if (gradient.size() != policy.size()) throw DataError("gradient shape does not match the policy");
  if (learning_rate < 0) throw DataError("learning rate must be non-negative");
  PolicyParams out = policy;
  for (std::size_t i = 0; i < gradient.size(); ++i) out.logits()[i] -= learning_rate * gradient[i];
  return out;
}

PromptChoice sample_choice(const PolicyParams& policy, std::size_t context, Rng& rng) {
  PromptChoice y{policy.contexts().at(context).id, {}};
  for (std::size_t s = 0; s < policy.contexts()[context].slots.size(); ++s) {
    const auto probs = softmax(policy.slot_logits(context, s));
    const double u = rng.uniform();
    double acc = 0.0;
    int pick = static_cast<int>(probs.size()) - 1;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) {
        pick = static_cast<int>(k);
        break;
      }
    }
    y.selections.push_back(pick);
  }
  return y;
}

}  // namespace promptloop::prefopt
