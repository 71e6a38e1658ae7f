#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dposim/policy.hpp"

namespace dposim {

/// Oracle-oriented training unit: instruction plus (chosen, rejected).
struct AnnotatedTrio {
  int instruction_id = 0;
  int chosen = 0;   // y_w
  int rejected = 0; // y_l
};

enum class LossKind { dpo, ipo, slic };

LossKind parse_loss_kind(const std::string& word);  // ConfigError
std::string to_string(LossKind kind);

struct TrainConfig {
  double beta = 0.1;
  LossKind loss = LossKind::dpo;
  // Desk-scale defaults; the reference 8B-model regime (lr 5e-7, batch 128,
  // 1 epoch) is far too slow for an exactly computable world.
  double step_size = 0.05;
  int epochs = 3;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Oriented reward margin: beta * [(log pi(y_w) - log ref(y_w)) -
/// (log pi(y_l) - log ref(y_l))]. Negative when the policy prefers the
/// rejected response.
double signed_margin(const TabularPolicy& policy, const TabularPolicy& ref, double beta,
                     const AnnotatedTrio& trio);

/// dpo: -log sigmoid(rho); ipo: (rho-1)^2; slic: max(0, 1-rho).
double preference_loss(double rho, LossKind kind);
/// d loss / d rho (slic takes 0 at the hinge).
double preference_loss_grad(double rho, LossKind kind);

/// Gradient of preference_loss(signed_margin) with respect to the trio's
/// instruction logits. The softmax terms of the two log-probs cancel inside
/// the margin, so the table gradient is nonzero only at chosen and rejected;
/// when the policy carries a feature head the margin also depends on the
/// shared weights through beta * (phi_chosen - phi_rejected).
struct TrioGradient {
  int instruction_id = 0;
  int chosen = 0;
  int rejected = 0;
  double d_chosen = 0.0;
  double d_rejected = 0.0;
  std::vector<double> d_feature_weights;  // empty without a head
  double loss = 0.0;
  double rho = 0.0;
};

TrioGradient grad_logits(const TabularPolicy& policy, const TabularPolicy& ref, double beta,
                         const AnnotatedTrio& trio, LossKind kind);

struct TrainReport {
  std::vector<double> mean_loss;           // per epoch
  std::vector<double> mean_signed_margin;  // per epoch
};

/// Mini-batch gradient descent with seeded shuffling each epoch; gradients
/// averaged within a batch and applied in fixed trio order. ref must be
/// frozen; trios nonempty. Deterministic given config.seed.
TrainReport train(TabularPolicy& policy, const TabularPolicy& ref,
                  std::span<const AnnotatedTrio> trios, const TrainConfig& config);

}  // namespace dposim
