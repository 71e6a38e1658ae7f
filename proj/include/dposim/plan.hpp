#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dposim/loop.hpp"

namespace dposim {

/// One experiment arm: a named variation of the base plan (strategies,
/// schedule). results.csv rows carry the arm name.
struct ExperimentArm {
  std::string name;
  ExperimentPlan plan;
};

struct ParsedPlan {
  ExperimentPlan plan;
  std::vector<std::string> arm_names;  // empty means the single arm "main"
  std::vector<std::string> notices;    // defaulted keys, logged by the caller
};

/// Parses the sectioned key=value plan format ([world] [sampling] [train]
/// [strategy] [schedule] [eval] [run], '#' comments). Unknown sections or
/// keys are rejected with a line diagnostic; missing keys fall back to
/// defaults and are reported in notices.
ParsedPlan parse_plan(std::istream& in);
ParsedPlan parse_plan_file(const std::string& path);

/// Expands arm names into concrete plans:
///   main                              the plan as written
///   always_smallest|always_random|always_largest
///                                     both strategy levels set to the kind
///   single_iter                       always-smallest collapsed to one
///                                     iteration of the schedule total
///   increase|constant|decrease        always-smallest with the schedule
///                                     sizes reshaped (sorted ascending,
///                                     equal split, sorted descending)
///   grid9                             all nine instance x corpus kind
///                                     combinations, named <inst>_<corp>
std::vector<ExperimentArm> expand_arms(const ExperimentPlan& base,
                                       const std::vector<std::string>& arm_names);

}  // namespace dposim
