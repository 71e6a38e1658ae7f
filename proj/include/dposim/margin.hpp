#pragma once

#include <span>
#include <utility>
#include <vector>

#include "dposim/policy.hpp"
#include "dposim/world.hpp"

namespace dposim {

/// One unordered response pair with its margin statistics. The pair is stored
/// with a < b; rho is the beta-scaled margin magnitude, rho_hat the
/// length-normalized magnitude (no beta; the ranking is beta-invariant
/// anyway). provisional_winner is the side with the larger implicit reward,
/// ties toward the lower id — before annotation the pair has no chosen or
/// rejected orientation, so magnitude is the only orientation-free reading.
struct MarginRecord {
  int instruction_id = 0;
  int a = 0;
  int b = 0;
  double implicit_a = 0.0;  // log pi_theta/pi_ref, no beta
  double implicit_b = 0.0;
  double rho = 0.0;
  double rho_hat = 0.0;
  int provisional_winner = 0;
};

/// log pi_policy(y|x) - log pi_ref(y|x). Throws StructureError when the two
/// policies are not defined on the same pools.
double implicit_reward(const TabularPolicy& policy, const TabularPolicy& ref, int x, int y);

/// Pure arithmetic core of pair_margin, exposed for direct testing and for
/// the dump-file ingestion path that supplies externally computed implicit
/// rewards.
MarginRecord make_margin_record(int instruction_id, int a, int b, double implicit_a,
                                double implicit_b, int length_a, int length_b, double beta);

MarginRecord pair_margin(const TabularPolicy& policy, const TabularPolicy& ref, double beta,
                         const Instruction& x, int a, int b);

/// Deduplicates the sampled ids, then returns all C(d,2) unordered pairs of
/// the d distinct ids, sorted by (a, b). Fewer than 2 distinct ids yield an
/// empty list; the caller drops the instruction.
std::vector<std::pair<int, int>> enumerate_pairs(std::span<const int> sampled);

/// Margin records for every pair of distinct sampled responses of x.
std::vector<MarginRecord> margins_for_sample(const TabularPolicy& policy, const TabularPolicy& ref,
                                             double beta, const Instruction& x,
                                             std::span<const int> sampled);

}  // namespace dposim
