#include "dposim/dpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dposim/error.hpp"
#include "dposim/rng.hpp"

namespace dposim {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow
double softplus(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

}  // namespace

LossKind parse_loss_kind(const std::string& word) {
  if (word == "dpo") return LossKind::dpo;
  if (word == "ipo") return LossKind::ipo;
  if (word == "slic") return LossKind::slic;
  throw ConfigError("unknown loss '" + word + "' (expected dpo|ipo|slic)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::dpo: return "dpo";
    case LossKind::ipo: return "ipo";
    case LossKind::slic: return "slic";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("train config: beta must be positive");
  if (!(step_size >= 0.0)) throw ConfigError("train config: step_size must be nonnegative");
  if (epochs < 1) throw ConfigError("train config: epochs must be positive");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be positive");
}

double signed_margin(const TabularPolicy& policy, const TabularPolicy& ref, double beta,
                     const AnnotatedTrio& trio) {
  if (trio.chosen == trio.rejected)
    throw PairError("signed_margin: chosen equals rejected (" + std::to_string(trio.chosen) + ")");
  double chosen_implicit = policy.log_prob(trio.instruction_id, trio.chosen) -
                           ref.log_prob(trio.instruction_id, trio.chosen);
  double rejected_implicit = policy.log_prob(trio.instruction_id, trio.rejected) -
                             ref.log_prob(trio.instruction_id, trio.rejected);
  return beta * (chosen_implicit - rejected_implicit);
}

double preference_loss(double rho, LossKind kind) {
  switch (kind) {
    case LossKind::dpo: return softplus(-rho);  // -log sigmoid(rho)
    case LossKind::ipo: return (rho - 1.0) * (rho - 1.0);
    case LossKind::slic: return std::max(0.0, 1.0 - rho);
  }
  return 0.0;
}

double preference_loss_grad(double rho, LossKind kind) {
  switch (kind) {
    case LossKind::dpo: return -sigmoid(-rho);
    case LossKind::ipo: return 2.0 * (rho - 1.0);
    case LossKind::slic: return rho < 1.0 ? -1.0 : 0.0;
  }
  return 0.0;
}

TrioGradient grad_logits(const TabularPolicy& policy, const TabularPolicy& ref, double beta,
                         const AnnotatedTrio& trio, LossKind kind) {
  TrioGradient g;
  g.instruction_id = trio.instruction_id;
  g.chosen = trio.chosen;
  g.rejected = trio.rejected;
  g.rho = signed_margin(policy, ref, beta, trio);
  g.loss = preference_loss(g.rho, kind);
  double dl = preference_loss_grad(g.rho, kind);
  // d rho / d table[chosen] = beta, d rho / d table[rejected] = -beta; the
  // softmax terms cancel between the two log-probs, so every other table
  // entry has zero gradient.
  g.d_chosen = dl * beta;
  g.d_rejected = -dl * beta;
  if (policy.has_feature_head()) {
    // d rho / d w = beta * (phi_chosen - phi_rejected), same cancellation.
    const World* world = policy.world();
    if (world == nullptr)
      throw StructureError("grad_logits: feature-head policy has no world binding");
    const Response& rw = world->response(trio.instruction_id, trio.chosen);
    const Response& rl = world->response(trio.instruction_id, trio.rejected);
    g.d_feature_weights.resize(policy.feature_weights().size());
    for (std::size_t i = 0; i < g.d_feature_weights.size(); ++i) {
      g.d_feature_weights[i] = dl * beta * (rw.features[i] - rl.features[i]);
    }
  }
  return g;
}

TrainReport train(TabularPolicy& policy, const TabularPolicy& ref,
                  std::span<const AnnotatedTrio> trios, const TrainConfig& config) {
  config.validate();
  if (trios.empty()) throw TrainError("train: empty trio set");
  if (!ref.frozen()) throw TrainError("train: reference policy must be frozen");
  if (policy.frozen()) throw TrainError("train: target policy is frozen");

  TrainReport report;
  std::vector<std::size_t> order(trios.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream shuffle_rng = RngStream::substream(config.seed, "train-shuffle",
                                                 static_cast<std::uint64_t>(epoch));
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      std::size_t j = i + shuffle_rng.uniform_index(order.size() - i);
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    double margin_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      double inv_batch = 1.0 / static_cast<double>(stop - start);

      // Gradients evaluated at the current parameters, then applied in fixed
      // trio order.
      std::vector<TrioGradient> grads;
      grads.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const AnnotatedTrio& trio = trios[order[i]];
        TrioGradient g = grad_logits(policy, ref, config.beta, trio, config.loss);
        if (!std::isfinite(g.loss) || !std::isfinite(g.rho)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", trio instruction " + std::to_string(trio.instruction_id) +
                             " (rho=" + std::to_string(g.rho) + ")");
        }
        loss_sum += g.loss;
        margin_sum += g.rho;
        grads.push_back(std::move(g));
      }

      std::vector<double> w_delta;
      for (const TrioGradient& g : grads) {
        policy.add_to_table(g.instruction_id, g.chosen, -config.step_size * inv_batch * g.d_chosen);
        policy.add_to_table(g.instruction_id, g.rejected, -config.step_size * inv_batch * g.d_rejected);
        if (!g.d_feature_weights.empty()) {
          if (w_delta.empty()) w_delta.assign(g.d_feature_weights.size(), 0.0);
          for (std::size_t i = 0; i < w_delta.size(); ++i)
            w_delta[i] += -config.step_size * inv_batch * g.d_feature_weights[i];
        }
      }
      if (!w_delta.empty()) policy.add_to_feature_weights(w_delta);
    }
    report.mean_loss.push_back(loss_sum / static_cast<double>(trios.size()));
    report.mean_signed_margin.push_back(margin_sum / static_cast<double>(trios.size()));
  }
  return report;
}

}  // namespace dposim
