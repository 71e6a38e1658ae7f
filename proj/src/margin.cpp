#include "dposim/margin.hpp"

#include <algorithm>
#include <cmath>

#include "dposim/error.hpp"

namespace dposim {

double implicit_reward(const TabularPolicy& policy, const TabularPolicy& ref, int x, int y) {
  if (policy.num_instructions() != ref.num_instructions())
    throw StructureError("policy and reference are defined on different instruction sets");
  if (policy.pool_size(x) != ref.pool_size(x))
    throw StructureError("policy and reference disagree on the pool of instruction " + std::to_string(x));
  return policy.log_prob(x, y) - ref.log_prob(x, y);
}

MarginRecord make_margin_record(int instruction_id, int a, int b, double implicit_a,
                                double implicit_b, int length_a, int length_b, double beta) {
  if (a == b) throw PairError("pair_margin: identical pair (" + std::to_string(a) + ", " + std::to_string(b) + ")");
  if (!(beta > 0.0)) throw ConfigError("pair_margin: beta must be positive");
  if (a > b) {
    std::swap(a, b);
    std::swap(implicit_a, implicit_b);
    std::swap(length_a, length_b);
  }
  MarginRecord rec;
  rec.instruction_id = instruction_id;
  rec.a = a;
  rec.b = b;
  rec.implicit_a = implicit_a;
  rec.implicit_b = implicit_b;
  rec.rho = beta * std::fabs(implicit_a - implicit_b);
  rec.rho_hat = std::fabs(implicit_a / length_a - implicit_b / length_b);
  rec.provisional_winner = implicit_b > implicit_a ? b : a;
  return rec;
}

MarginRecord pair_margin(const TabularPolicy& policy, const TabularPolicy& ref, double beta,
                         const Instruction& x, int a, int b) {
  double ia = implicit_reward(policy, ref, x.id, a);
  double ib = implicit_reward(policy, ref, x.id, b);
  int la = x.pool.at(static_cast<std::size_t>(a)).length;
  int lb = x.pool.at(static_cast<std::size_t>(b)).length;
  return make_margin_record(x.id, a, b, ia, ib, la, lb, beta);
}

std::vector<std::pair<int, int>> enumerate_pairs(std::span<const int> sampled) {
  std::vector<int> distinct(sampled.begin(), sampled.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<std::pair<int, int>> pairs;
  if (distinct.size() < 2) return pairs;
  pairs.reserve(distinct.size() * (distinct.size() - 1) / 2);
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    for (std::size_t j = i + 1; j < distinct.size(); ++j) {
      pairs.emplace_back(distinct[i], distinct[j]);
    }
  }
  return pairs;
}

std::vector<MarginRecord> margins_for_sample(const TabularPolicy& policy, const TabularPolicy& ref,
                                             double beta, const Instruction& x,
                                             std::span<const int> sampled) {
  std::vector<std::pair<int, int>> pairs = enumerate_pairs(sampled);
  std::vector<MarginRecord> records;
  if (pairs.empty()) return records;
  // One log-prob pass per instruction; identical values to per-pair calls.
  std::vector<double> lp = policy.log_probs(x.id);
  std::vector<double> lq = ref.log_probs(x.id);
  if (lp.size() != lq.size())
    throw StructureError("policy and reference disagree on the pool of instruction " +
                         std::to_string(x.id));
  records.reserve(pairs.size());
  for (auto [a, b] : pairs) {
    double ia = lp.at(static_cast<std::size_t>(a)) - lq.at(static_cast<std::size_t>(a));
    double ib = lp.at(static_cast<std::size_t>(b)) - lq.at(static_cast<std::size_t>(b));
    int la = x.pool.at(static_cast<std::size_t>(a)).length;
    int lb = x.pool.at(static_cast<std::size_t>(b)).length;
    records.push_back(make_margin_record(x.id, a, b, ia, ib, la, lb, beta));
  }
  return records;
}

}  // namespace dposim
