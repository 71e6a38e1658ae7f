#include "dposim/loop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dposim/error.hpp"
#include "dposim/margin.hpp"
#include "dposim/rng.hpp"

namespace dposim {

void ExperimentPlan::validate() const {
  world.validate();
  sampling.validate();
  train.validate();
  if (instance_strategy.level != SelectionLevel::instance)
    throw ConfigError("plan: instance_strategy.level must be instance");
  if (corpus_strategy.level != SelectionLevel::corpus)
    throw ConfigError("plan: corpus_strategy.level must be corpus");
  if (schedule.per_iteration.empty()) throw ConfigError("plan: schedule must have at least one iteration");
  if (budgets.empty()) throw ConfigError("plan: corpus budgets must be nonempty");
  if (budgets.size() != 1 && budgets.size() != schedule.per_iteration.size())
    throw ConfigError("plan: budgets must have one entry or one per iteration");
  if (!(eval_quantile > 0.0) || eval_quantile > 1.0)
    throw ConfigError("plan: eval_quantile must lie in (0, 1]");
  if (seeds.empty()) throw ConfigError("plan: seeds must be nonempty");
  if (warmup.instructions < 0) throw ConfigError("plan: warmup_instructions must be nonnegative");
  if (init_noise_sd < 0.0) throw ConfigError("plan: init_noise_sd must be nonnegative");
  long required = warmup.instructions + schedule.total();
  if (required > world.num_instructions)
    throw ConfigError("plan: instruction supply (" + std::to_string(world.num_instructions) +
                      ") is below warmup + schedule total (" + std::to_string(required) + ")");
}

const CorpusBudget& ExperimentPlan::budget_for(int iteration) const {
  if (budgets.size() == 1) return budgets.front();
  return budgets.at(static_cast<std::size_t>(iteration));
}

std::pair<TabularPolicy, TabularPolicy> init_policies(const World& world,
                                                      double signal_coefficient, double noise_sd,
                                                      std::uint64_t seed) {
  if (noise_sd < 0.0) throw ConfigError("init_policies: noise_sd must be nonnegative");
  RngStream rng = RngStream::substream(seed, "init");
  TabularPolicy ref = TabularPolicy::uniform(world, /*with_feature_head=*/true);
  for (int xid = 0; xid < world.num_instructions(); ++xid) {
    const Instruction& x = world.instruction(xid);
    const std::size_t k = x.pool.size();
    double mean = 0.0;
    for (const Response& r : x.pool) mean += r.gold_reward;
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (const Response& r : x.pool) {
      double d = r.gold_reward - mean;
      var += d * d;
    }
    var /= static_cast<double>(k);
    double sd = std::sqrt(var);
    std::vector<double> logits(k);
    for (std::size_t y = 0; y < k; ++y) {
      double standardized = sd > 1e-12 ? (x.pool[y].gold_reward - mean) / sd : 0.0;
      logits[y] = signal_coefficient * standardized + rng.next_normal(0.0, noise_sd);
    }
    ref.set_table(xid, std::move(logits));
  }
  TabularPolicy frozen_ref = ref.snapshot();
  // The trainable policy starts equal to the reference; its divergence
  // emerges through training.
  TabularPolicy theta = ref;
  return {std::move(frozen_ref), std::move(theta)};
}

IterationOutcome run_iteration(IterationState state, std::span<const int> instruction_set,
                               const ExperimentPlan& plan, const Strategy& instance_strategy,
                               const Strategy& corpus_strategy, const CorpusBudget& budget,
                               int iteration_index, std::uint64_t seed) {
  const World& world = *state.world;
  TabularPolicy& policy = *state.policy;
  const TabularPolicy& ref = *state.ref;

  // Step 1: sample N responses per instruction from the current policy.
  RngStream sampling_rng =
      RngStream::substream(seed, "sampling", static_cast<std::uint64_t>(iteration_index));
  std::vector<InstructionSample> samples;
  samples.reserve(instruction_set.size());
  for (int xid : instruction_set) {
    InstructionSample s;
    s.instruction_id = xid;
    s.sampled = policy.sample_responses(xid, plan.sampling, sampling_rng);
    samples.push_back(std::move(s));
  }

  // Step 2: instance-level then corpus-level selection, oracle annotation of
  // only the selected records.
  RngStream selection_rng =
      RngStream::substream(seed, "selection", static_cast<std::uint64_t>(iteration_index));
  std::vector<MarginRecord> pooled;
  pooled.reserve(samples.size());
  for (const InstructionSample& sample : samples) {
    const Instruction& x = world.instruction(sample.instruction_id);
    std::vector<MarginRecord> records =
        margins_for_sample(policy, ref, plan.train.beta, x, sample.sampled);
    if (records.empty()) continue;
    pooled.push_back(instance_select(records, instance_strategy, sample.sampled));
  }
  long resolved_budget = budget.resolve(pooled.size());
  long pooled_count = static_cast<long>(pooled.size());
  std::vector<MarginRecord> selected =
      corpus_select(std::move(pooled), corpus_strategy, resolved_budget, selection_rng);
  if (selected.empty())
    throw Error("iteration " + std::to_string(iteration_index) + ": empty selection");

  std::vector<PreferenceLabel> labels;
  labels.reserve(selected.size());
  std::vector<AnnotatedTrio> trios;
  trios.reserve(selected.size());
  for (const MarginRecord& rec : selected) {
    PreferenceLabel label =
        state.oracle->annotate(world.instruction(rec.instruction_id), rec.a, rec.b);
    labels.push_back(label);
    trios.push_back(AnnotatedTrio{rec.instruction_id, label.winner, label.loser});
  }

  // Step 3: train against the fixed reference.
  TrainConfig train_config = plan.train;
  train_config.seed =
      RngStream::substream(seed, "training", static_cast<std::uint64_t>(iteration_index)).next_u64();
  train(policy, ref, trios, train_config);

  IterationOutcome outcome;
  outcome.pooled_instances = pooled_count;
  IterationRecord& rec = outcome.record;
  rec.iteration_index = iteration_index;
  rec.trained_instances = static_cast<long>(trios.size());

  std::vector<int> all_instructions(static_cast<std::size_t>(world.num_instructions()));
  std::iota(all_instructions.begin(), all_instructions.end(), 0);
  rec.win_rate = win_rate(policy, world, all_instructions, plan.eval_quantile);
  rec.ranking_accuracy = ranking_accuracy(selected, labels);

  std::vector<int> selected_instructions;
  selected_instructions.reserve(selected.size());
  for (const MarginRecord& r : selected) selected_instructions.push_back(r.instruction_id);
  std::sort(selected_instructions.begin(), selected_instructions.end());
  selected_instructions.erase(
      std::unique(selected_instructions.begin(), selected_instructions.end()),
      selected_instructions.end());
  rec.mean_kl = kl_divergence(policy, ref, selected_instructions);
  SubsetStats stats = subset_stats(selected);
  rec.mean_selected_margin = stats.mean_rho.value_or(0.0);
  return outcome;
}

SeedSetup prepare_seed(const ExperimentPlan& plan, const World& world, std::uint64_t seed) {
  auto [ref, policy] = init_policies(world, plan.init_signal_coefficient, plan.init_noise_sd, seed);
  SeedSetup setup{std::move(ref), std::move(policy),
                  GoldOracle(plan.oracle_mode, plan.oracle_bt_scale, seed, 0), 0, 0};

  if (plan.warmup.instructions > 0) {
    std::vector<int> warmup_set(static_cast<std::size_t>(plan.warmup.instructions));
    std::iota(warmup_set.begin(), warmup_set.end(), 0);
    setup.cursor = plan.warmup.instructions;
    Strategy random_instance{SelectionLevel::instance, SelectionKind::random, Normalization::raw};
    Strategy random_corpus{SelectionLevel::corpus, SelectionKind::random, Normalization::raw};
    IterationState state{&setup.policy, &setup.ref, &world, &setup.oracle};
    IterationOutcome warmup = run_iteration(state, warmup_set, plan, random_instance,
                                            random_corpus, plan.warmup.budget, 0, seed);
    setup.warmup_annotations = warmup.record.trained_instances;
  }
  return setup;
}

SeedResult run_seed(const ExperimentPlan& plan, std::uint64_t seed) {
  plan.validate();

  WorldConfig world_config = plan.world;
  world_config.seed = seed;
  World world = generate_world(world_config);

  SeedSetup setup = prepare_seed(plan, world, seed);

  SeedResult result;
  result.seed = seed;
  result.warmup_annotations = setup.warmup_annotations;

  // Disjoint instruction slices, one per iteration, after the warmup slice.
  long cursor = setup.cursor;
  auto take_slice = [&](long count) {
    std::vector<int> ids(static_cast<std::size_t>(count));
    std::iota(ids.begin(), ids.end(), static_cast<int>(cursor));
    cursor += count;
    return ids;
  };

  IterationState state{&setup.policy, &setup.ref, &world, &setup.oracle};
  long expected_annotations = setup.warmup_annotations;

  for (int i = 0; i < plan.schedule.iterations(); ++i) {
    std::vector<int> iteration_set =
        take_slice(plan.schedule.per_iteration[static_cast<std::size_t>(i)]);
    IterationOutcome outcome =
        run_iteration(state, iteration_set, plan, plan.instance_strategy, plan.corpus_strategy,
                      plan.budget_for(i), i + 1, seed);
    expected_annotations += outcome.record.trained_instances;
    result.pooled_per_iteration.push_back(outcome.pooled_instances);
    result.iterations.push_back(outcome.record);
  }

  result.annotations_used = setup.oracle.annotation_count();
  // The oracle never sees unselected pairs; annotation calls must equal the
  // summed selected counts exactly.
  if (result.annotations_used != static_cast<std::uint64_t>(expected_annotations))
    throw Error("annotation accounting violated: " + std::to_string(result.annotations_used) +
                " oracle calls for " + std::to_string(expected_annotations) + " selected records");
  return result;
}

std::vector<SeedResult> run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  std::vector<SeedResult> results;
  results.reserve(plan.seeds.size());
  for (std::uint64_t seed : plan.seeds) results.push_back(run_seed(plan, seed));
  return results;
}

}  // namespace dposim
