#include "dposim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dposim/error.hpp"

namespace dposim {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double win_rate(const TabularPolicy& policy, const World& world,
                std::span<const int> eval_instructions, double eval_quantile) {
  if (eval_instructions.empty()) throw MetricError("win_rate: empty evaluation set");
  double wins = 0.0;
  for (int xid : eval_instructions) {
    const Instruction& x = world.instruction(xid);
    int greedy = policy.greedy_response(xid);
    int reference = reference_response(x, eval_quantile);
    double g = x.pool[static_cast<std::size_t>(greedy)].gold_reward;
    double r = x.pool[static_cast<std::size_t>(reference)].gold_reward;
    if (g > r) wins += 1.0;
    else if (g == r) wins += 0.5;
  }
  return wins / static_cast<double>(eval_instructions.size());
}

double ranking_accuracy(std::span<const MarginRecord> records, GoldOracle& oracle,
                        const World& world) {
  if (records.empty()) throw MetricError("ranking_accuracy: empty record set");
  long matches = 0;
  for (const MarginRecord& rec : records) {
    PreferenceLabel label = oracle.annotate(world.instruction(rec.instruction_id), rec.a, rec.b);
    if (label.winner == rec.provisional_winner) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(records.size());
}

double ranking_accuracy(std::span<const MarginRecord> records,
                        std::span<const PreferenceLabel> labels) {
  if (records.empty()) throw MetricError("ranking_accuracy: empty record set");
  if (records.size() != labels.size())
    throw StructureError("ranking_accuracy: records and labels differ in size");
  long matches = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (labels[i].winner == records[i].provisional_winner) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(records.size());
}

double kl_divergence(const TabularPolicy& policy, const TabularPolicy& ref,
                     std::span<const int> instructions) {
  if (instructions.empty()) return 0.0;
  if (policy.num_instructions() != ref.num_instructions())
    throw StructureError("kl_divergence: policies defined on different instruction sets");
  double total = 0.0;
  for (int xid : instructions) {
    std::vector<double> lp = policy.log_probs(xid);
    std::vector<double> lq = ref.log_probs(xid);
    if (lp.size() != lq.size())
      throw StructureError("kl_divergence: pool mismatch at instruction " + std::to_string(xid));
    double kl = 0.0;
    for (std::size_t y = 0; y < lp.size(); ++y) {
      kl += std::exp(lp[y]) * (lp[y] - lq[y]);
    }
    total += kl;
  }
  return total / static_cast<double>(instructions.size());
}

CalibrationTable calibration_table(std::span<const MarginRecord> records, GoldOracle& oracle,
                                   const World& world, int num_bins) {
  if (num_bins < 2) throw ConfigError("calibration_table: num_bins must be at least 2");
  if (static_cast<long>(records.size()) < num_bins)
    throw MetricError("calibration_table: fewer records (" + std::to_string(records.size()) +
                      ") than bins (" + std::to_string(num_bins) + ")");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    const MarginRecord& lhs = records[l];
    const MarginRecord& rhs = records[r];
    if (lhs.rho != rhs.rho) return lhs.rho < rhs.rho;
    if (lhs.instruction_id != rhs.instruction_id) return lhs.instruction_id < rhs.instruction_id;
    if (lhs.a != rhs.a) return lhs.a < rhs.a;
    return lhs.b < rhs.b;
  });

  CalibrationTable table;
  const std::size_t n = records.size();
  for (int b = 0; b < num_bins; ++b) {
    std::size_t lo = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(num_bins);
    std::size_t hi = n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(num_bins);
    if (lo == hi) continue;  // possible only when records are few
    CalibrationBin bin;
    bin.count = static_cast<long>(hi - lo);
    bin.margin_lo = records[order[lo]].rho;
    bin.margin_hi = records[order[hi - 1]].rho;
    long matches = 0;
    double logistic_sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const MarginRecord& rec = records[order[i]];
      PreferenceLabel label = oracle.annotate(world.instruction(rec.instruction_id), rec.a, rec.b);
      if (label.winner == rec.provisional_winner) ++matches;
      logistic_sum += sigmoid(rec.rho);
    }
    bin.empirical_accuracy = static_cast<double>(matches) / static_cast<double>(bin.count);
    bin.logistic_prediction = logistic_sum / static_cast<double>(bin.count);
    table.bins.push_back(bin);
  }
  return table;
}

SubsetStats subset_stats(std::span<const MarginRecord> records) {
  SubsetStats stats;
  stats.count = static_cast<long>(records.size());
  if (records.empty()) return stats;
  double rho_sum = 0.0;
  double rho_hat_sum = 0.0;
  for (const MarginRecord& rec : records) {
    rho_sum += rec.rho;
    rho_hat_sum += rec.rho_hat;
  }
  stats.mean_rho = rho_sum / static_cast<double>(records.size());
  stats.mean_rho_hat = rho_hat_sum / static_cast<double>(records.size());
  return stats;
}

}  // namespace dposim
