#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dposim/dpo.hpp"
#include "dposim/metrics.hpp"
#include "dposim/policy.hpp"
#include "dposim/select.hpp"
#include "dposim/world.hpp"

namespace dposim {

/// Offline stage run before the scheduled iterations: a random/random
/// selection round on its own disjoint instruction slice, trained with the
/// same pipeline. It plays the role of the offline-preference head start that
/// precedes online iterations; without it the very first selection sees a
/// policy identical to the reference and every margin is zero.
struct WarmupConfig {
  long instructions = 0;  // 0 disables the stage
  CorpusBudget budget = CorpusBudget::from_fraction(0.5);
};

struct ExperimentPlan {
  WorldConfig world;
  SamplingConfig sampling;
  TrainConfig train;
  Strategy instance_strategy;
  Strategy corpus_strategy;
  BudgetSchedule schedule;
  std::vector<CorpusBudget> budgets;  // per iteration; one entry is replicated
  double eval_quantile = 0.9;
  std::vector<std::uint64_t> seeds;
  double init_signal_coefficient = 1.0;
  double init_noise_sd = 0.5;
  WarmupConfig warmup;
  GoldOracle::Mode oracle_mode = GoldOracle::Mode::deterministic;
  double oracle_bt_scale = 1.0;

  void validate() const;  // ConfigError naming the field
  /// Budget for iteration i (0-based), after replication.
  const CorpusBudget& budget_for(int iteration) const;
};

/// The per-iteration quantities of Fig. 4/5 style reporting: win rate over
/// the full world, plus statistics of the selected subset.
struct IterationRecord {
  int iteration_index = 0;  // 1-based
  long trained_instances = 0;
  double win_rate = 0.0;
  double ranking_accuracy = 0.0;
  double mean_kl = 0.0;              // post-training, over selected instructions
  double mean_selected_margin = 0.0; // mean |rho| of the selected records
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<IterationRecord> iterations;
  std::uint64_t annotations_used = 0;    // includes the warmup stage
  long warmup_annotations = 0;
  std::vector<long> pooled_per_iteration;  // corpus pool sizes after drops
};

/// Reference = signal_coefficient * standardized(gold reward within each
/// pool) + N(0, noise_sd) noise, emulating a checkpoint that is better than
/// random but imperfect; the trainable policy starts equal to it (KL = 0).
/// Both carry a zero feature head when the world has features.
std::pair<TabularPolicy, TabularPolicy> init_policies(const World& world,
                                                      double signal_coefficient, double noise_sd,
                                                      std::uint64_t seed);

struct IterationState {
  TabularPolicy* policy = nullptr;
  const TabularPolicy* ref = nullptr;
  const World* world = nullptr;
  GoldOracle* oracle = nullptr;
};

struct IterationOutcome {
  IterationRecord record;
  long pooled_instances = 0;
};

/// One Step-i round: sample N responses per fresh instruction from the
/// current policy, rank pair margins, select (instance then corpus), annotate
/// only the selected pairs, orient them by the oracle label, train against
/// the fixed reference, and measure. The instruction set must be disjoint
/// from every earlier iteration's set.
IterationOutcome run_iteration(IterationState state, std::span<const int> instruction_set,
                               const ExperimentPlan& plan, const Strategy& instance_strategy,
                               const Strategy& corpus_strategy, const CorpusBudget& budget,
                               int iteration_index, std::uint64_t seed);

/// Initial policies plus the completed warmup stage for one seed. The world
/// is caller-owned (policies keep a pointer to it); cursor is the first
/// instruction id not consumed by the warmup slice.
struct SeedSetup {
  TabularPolicy ref;     // frozen
  TabularPolicy policy;  // post-warmup
  GoldOracle oracle;
  long warmup_annotations = 0;
  long cursor = 0;
};

SeedSetup prepare_seed(const ExperimentPlan& plan, const World& world, std::uint64_t seed);

/// Full protocol for one seed: regenerate world and initial policies, run the
/// warmup stage, then the scheduled iterations on disjoint instruction
/// slices. Asserts that oracle annotations equal the summed selected counts.
SeedResult run_seed(const ExperimentPlan& plan, std::uint64_t seed);

/// run_seed over every seed of the plan.
std::vector<SeedResult> run_experiment(const ExperimentPlan& plan);

}  // namespace dposim
