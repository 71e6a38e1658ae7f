#include "dposim/presets.hpp"

namespace dposim {

ExperimentPlan standard_preset() {
  ExperimentPlan plan;
  plan.world.num_instructions = 2000;
  plan.world.pool_size = 8;
  plan.world.reward_dist = WorldConfig::RewardDist::normal;
  plan.world.reward_mean = 0.0;
  plan.world.reward_sd = 1.0;
  plan.world.length_min = 16;
  plan.world.length_max = 256;
  plan.world.length_reward_corr = 0.0;
  plan.world.feature_dim = 32;
  plan.world.feature_noise_sd = 0.5;

  plan.sampling.num_responses = 8;
  plan.sampling.temperature = 1.0;
  plan.sampling.top_k = 50;

  plan.train.beta = 0.1;
  plan.train.loss = LossKind::dpo;
  plan.train.step_size = 0.4;
  plan.train.epochs = 4;
  plan.train.batch_size = 16;

  plan.instance_strategy = {SelectionLevel::instance, SelectionKind::smallest, Normalization::raw};
  plan.corpus_strategy = {SelectionLevel::corpus, SelectionKind::smallest, Normalization::raw};

  plan.schedule = make_schedule(BudgetSchedule::Kind::constant, {500, 500, 500});
  plan.budgets = {CorpusBudget::from_fraction(0.5)};

  plan.eval_quantile = 0.9;
  plan.seeds.clear();
  for (std::uint64_t s = 1; s <= 20; ++s) plan.seeds.push_back(s);

  plan.init_signal_coefficient = 1.0;
  plan.init_noise_sd = 0.5;
  plan.warmup.instructions = 400;
  plan.warmup.budget = CorpusBudget::from_fraction(0.5);
  return plan;
}

ExperimentPlan single_iteration_preset() {
  ExperimentPlan plan = standard_preset();
  plan.schedule = make_schedule(BudgetSchedule::Kind::constant, {1200});
  return plan;
}

ExperimentPlan multi_iteration_preset() { return standard_preset(); }

ExperimentPlan allocation_preset() {
  ExperimentPlan plan = standard_preset();
  plan.schedule = make_schedule(BudgetSchedule::Kind::decrease, {750, 500, 250});
  return plan;
}

}  // namespace dposim
