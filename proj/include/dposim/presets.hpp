#pragma once

#include "dposim/loop.hpp"
#include "dposim/plan.hpp"

namespace dposim {

/// The standard simulation preset: a 2,000-instruction world with K=8 pools,
/// partially feature-explained rewards, an imperfect reference checkpoint,
/// and a 400-instruction warmup stage. Everything else derives from it.
ExperimentPlan standard_preset();

/// One post-warmup iteration on 1,200 fresh instructions at a 50% corpus
/// budget; arms vary the strategy.
ExperimentPlan single_iteration_preset();

/// Three 500-instruction iterations at a 50% corpus budget.
ExperimentPlan multi_iteration_preset();

/// Allocation base: 750 -> 500 -> 250 (decrease); the increase/constant arms
/// reshape it at equal totals.
ExperimentPlan allocation_preset();

}  // namespace dposim
