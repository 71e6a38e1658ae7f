#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dposim/rng.hpp"
#include "dposim/world.hpp"

namespace dposim {

struct SamplingConfig {
  int num_responses = 8;  // N
  double temperature = 1.0;
  int top_k = 50;

  void validate() const;  // ConfigError naming the field
};

/// Exact softmax policy over each instruction's candidate pool. The effective
/// logit is table[x][y] plus, when the policy carries a feature head, the dot
/// product of the shared weights with the response's features. The head is
/// what lets training transfer to instructions it never saw; a policy without
/// one is purely tabular. Frozen policies reject every update.
class TabularPolicy {
 public:
  TabularPolicy() = default;

  /// Uniform policy over the world's pools; with_feature_head attaches a
  /// zero-initialized shared head of the world's feature dimension.
  static TabularPolicy uniform(const World& world, bool with_feature_head = false);

  /// Purely tabular policy from explicit logits; no world binding.
  static TabularPolicy from_logits(std::vector<std::vector<double>> logits);

  int num_instructions() const { return static_cast<int>(table_.size()); }
  int pool_size(int x) const;
  bool frozen() const { return frozen_; }
  bool has_feature_head() const { return !feature_weights_.empty(); }

  double table_logit(int x, int y) const;
  double effective_logit(int x, int y) const;
  /// Effective logits of the whole pool of x.
  std::vector<double> effective_logits(int x) const;

  /// log pi(y|x) = logit - logsumexp over the pool; exp over the pool sums
  /// to 1 within 1e-12.
  double log_prob(int x, int y) const;
  std::vector<double> log_probs(int x) const;
  std::vector<double> probs(int x) const;

  /// Argmax of the effective logits; ties break toward the lower id.
  int greedy_response(int x) const;

  /// N i.i.d. draws from softmax(logit / temperature) restricted to the
  /// top_k highest logits (cutoff ties keep lower ids). Duplicates allowed;
  /// deterministic given the stream state.
  std::vector<int> sample_responses(int x, const SamplingConfig& config, RngStream& rng) const;

  /// Deep frozen copy; training the source leaves it untouched.
  TabularPolicy snapshot() const;

  // Parameter updates; throw TrainError on a frozen policy.
  void add_to_table(int x, int y, double delta);
  void add_to_feature_weights(std::span<const double> delta);

  const std::vector<double>& feature_weights() const { return feature_weights_; }
  const std::vector<std::vector<double>>& table() const { return table_; }
  /// World the policy is bound to; null for purely tabular policies.
  const World* world() const { return world_; }
  void set_table(int x, std::vector<double> logits);

 private:
  void check_ids(int x, int y) const;
  void check_mutable() const;

  std::vector<std::vector<double>> table_;
  std::vector<double> feature_weights_;
  const World* world_ = nullptr;  // required when the feature head is present
  bool frozen_ = false;
};

/// Effective-logit serialization: `#policy v1`, then
/// instruction_id<TAB>response_id<TAB>logit lines, reals to 17 significant
/// digits. Loaded policies are purely tabular.
void save_policy(const TabularPolicy& policy, std::ostream& out);
void save_policy(const TabularPolicy& policy, const std::string& path);
TabularPolicy load_policy(std::istream& in);
TabularPolicy load_policy(const std::string& path);

}  // namespace dposim
