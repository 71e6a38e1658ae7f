#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dposim/margin.hpp"
#include "dposim/policy.hpp"
#include "dposim/world.hpp"

namespace dposim {

/// Fraction of instructions whose greedy response beats the quantile
/// reference response under the gold reward; ties count 0.5. Exact, not
/// sampled.
double win_rate(const TabularPolicy& policy, const World& world,
                std::span<const int> eval_instructions, double eval_quantile);

/// Fraction of records whose provisional winner matches the oracle's label.
double ranking_accuracy(std::span<const MarginRecord> records, GoldOracle& oracle,
                        const World& world);
/// Same, against labels already collected (no oracle calls).
double ranking_accuracy(std::span<const MarginRecord> records,
                        std::span<const PreferenceLabel> labels);

/// Mean over instructions of the exact KL(pi_policy || pi_ref) in nats.
double kl_divergence(const TabularPolicy& policy, const TabularPolicy& ref,
                     std::span<const int> instructions);

struct CalibrationBin {
  double margin_lo = 0.0;
  double margin_hi = 0.0;
  long count = 0;
  double empirical_accuracy = 0.0;
  double logistic_prediction = 0.0;  // mean over bin of sigmoid(rho)
};

struct CalibrationTable {
  std::vector<CalibrationBin> bins;
};

/// Equal-count bins over |rho|; per-bin empirical accuracy against the oracle
/// and mean logistic prediction 1/(1+exp(-rho)). Requires at least as many
/// records as bins.
CalibrationTable calibration_table(std::span<const MarginRecord> records, GoldOracle& oracle,
                                   const World& world, int num_bins);

struct SubsetStats {
  long count = 0;
  std::optional<double> mean_rho;
  std::optional<double> mean_rho_hat;
};

SubsetStats subset_stats(std::span<const MarginRecord> records);

}  // namespace dposim
