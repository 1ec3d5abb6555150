#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "promptloop/rng.hpp"

namespace promptloop::prefopt {

struct SlotSpec {
  std::string name;
  std::vector<std::string> vocab;

  friend bool operator==(const SlotSpec&, const SlotSpec&) = default;
};

struct ContextSpec {
  std::string id;
  std::vector<SlotSpec> slots;

  friend bool operator==(const ContextSpec&, const ContextSpec&) = default;
};

/// Factored categorical policy: for every context, independent softmax slots.
/// Logits live in one flat vector (context-major, then slot, then token) so
/// gradients share the same layout.
class PolicyParams {
 public:
  /// All logits zero (uniform policy).
  explicit PolicyParams(std::vector<ContextSpec> contexts);
  PolicyParams(std::vector<ContextSpec> contexts, std::vector<double> logits);

  const std::vector<ContextSpec>& contexts() const { return contexts_; }
  std::size_t context_index(std::string_view id) const;

  std::size_t offset(std::size_t context, std::size_t slot) const { return offsets_[context][slot]; }
  std::span<const double> slot_logits(std::size_t context, std::size_t slot) const;
  std::span<double> slot_logits(std::size_t context, std::size_t slot);

  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& logits() { return logits_; }
  std::size_t size() const { return logits_.size(); }

  bool same_structure(const PolicyParams& other) const { return contexts_ == other.contexts_; }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.contexts_ == b.contexts_ && a.logits_ == b.logits_;
  }

 private:
  void layout();

  std::vector<ContextSpec> contexts_;
  std::vector<std::vector<std::size_t>> offsets_;
  std::vector<double> logits_;
};

using Gradient = std::vector<double>;

struct PromptChoice {
  std::string context;
  std::vector<int> selections;  // one vocabulary index per slot

  friend bool operator==(const PromptChoice&, const PromptChoice&) = default;
};

struct PreferenceExample {
  PromptChoice choice;
  bool desirable = false;

  friend bool operator==(const PreferenceExample&, const PreferenceExample&) = default;
};

/// (x, y_w, y_l) for pairwise losses; both choices share the context.
struct PreferencePair {
  PromptChoice winner;
  PromptChoice loser;
};

struct KTOConfig {
  double beta = 0.1;
  double lambda_D = 1.0;
  double lambda_U = 1.0;
};

struct LossAndGradient {
  double loss = 0.0;
  Gradient gradient;
};

double sigmoid(double z);

/// Numerically stable log-softmax of one slot.
std::vector<double> log_softmax(std::span<const double> logits);

/// log pi(y | x), summed over slots. Throws DataError for unknown contexts or
/// out-of-range selections.
double log_prob(const PolicyParams& policy, const PromptChoice& y);

double bradley_terry(double r_w, double r_l);

/// Mean of -log sigma(r_w - r_l). Throws DataError when empty.
double reward_model_nll(std::span<const std::pair<double, double>> score_pairs);

/// mean_reward - beta * mean_kl.
double kl_objective_value(double mean_reward, double mean_kl, double beta);

/// Sum over slots of KL(pi(.|x) || pi_ref(.|x)) for one context.
double context_kl(const PolicyParams& policy, const PolicyParams& reference, std::size_t context);

/// Mean of context_kl over `contexts` (repeats count).
double exact_reference_kl(const PolicyParams& policy, const PolicyParams& reference,
                          std::span<const std::string> contexts);

LossAndGradient dpo_loss(const PolicyParams& policy, const PolicyParams& reference,
                         std::span<const PreferencePair> pairs, double beta);

/// KTO loss with z0 = exact_reference_kl over the dataset contexts. z0 is a
/// constant of the step: the gradient flows through the log-ratio only.
LossAndGradient kto_loss(const PolicyParams& policy, const PolicyParams& reference,
                         std::span<const PreferenceExample> dataset, const KTOConfig& cfg);

/// Same loss with the baseline z0 supplied by the caller.
LossAndGradient kto_loss_with_baseline(const PolicyParams& policy, const PolicyParams& reference,
                                       std::span<const PreferenceExample> dataset, const KTOConfig& cfg, double z0);

struct ScoredSample {
  PromptChoice choice;
  std::string prompt_text;  // serialized prompt, the tie-breaker
  double reward = 0.0;
};

struct PreferenceDataset {
  std::vector<PreferenceExample> examples;
  std::vector<PreferencePair> pairs;
};

/// Per context (first-appearance order): sort by reward descending, ties by
/// prompt text ascending; the top half is desirable, the bottom half
/// undesirable, the median of an odd count is dropped. Pair i joins the i-th
/// desirable with the i-th undesirable.
PreferenceDataset build_preference_dataset(std::span<const ScoredSample> scored);

/// logits - learning_rate * gradient.
PolicyParams gradient_step(const PolicyParams& policy, const Gradient& gradient, double learning_rate);

PromptChoice sample_choice(const PolicyParams& policy, std::size_t context, Rng& rng);

/// Probability of `y` under the policy (exp of log_prob).
double choice_probability(const PolicyParams& policy, const PromptChoice& y);

// Checkpoints: a line-oriented text format, logits printed with 17
// significant digits so reloading reproduces them exactly.
std::string serialize_policy(const PolicyParams& policy);
PolicyParams parse_policy(std::string_view text);
void save_policy(const std::filesystem::path& path, const PolicyParams& policy);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace promptloop::prefopt
