// Acceptance gates: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances and thresholds are pinned here, not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dposim/cli.hpp"
#include "dposim/dpo.hpp"
#include "dposim/dump.hpp"
#include "dposim/error.hpp"
#include "dposim/io.hpp"
#include "dposim/loop.hpp"
#include "dposim/margin.hpp"
#include "dposim/metrics.hpp"
#include "dposim/plan.hpp"
#include "dposim/presets.hpp"
#include "dposim/rng.hpp"
#include "dposim/select.hpp"

using namespace dposim;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
  bool pass = false;
  std::string detail;
};

class Gate {
 public:
  void run(const std::string& name, double time_limit_s,
           const std::function<CriterionResult()>& body) {
    auto start = std::chrono::steady_clock::now();
    CriterionResult result;
    try {
      result = body();
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (time_limit_s > 0 && elapsed > time_limit_s) {
      result.pass = false;
      result.detail += " [over time limit " + std::to_string(time_limit_s) + "s]";
    }
    std::printf("[%s] %s (%.1fs) %s\n", result.pass ? "PASS" : "FAIL", name.c_str(), elapsed,
                result.detail.c_str());
    std::fflush(stdout);
    if (!result.pass) ++failures_;
  }

  int failures() const { return failures_; }

 private:
  int failures_ = 0;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& values) {
  MeanSe out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(values.size() - 1)) /
             std::sqrt(static_cast<double>(values.size()));
  }
  return out;
}

std::vector<double> ranks_with_ties(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t l, std::size_t r) { return values[l] < values[r]; });
  std::vector<double> ranks(values.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson(ranks_with_ties(xs), ranks_with_ties(ys));
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// shared simulation results

struct ArmOutcome {
  std::map<std::uint64_t, std::vector<IterationRecord>> by_seed;

  std::vector<double> final_win_rates(const std::vector<std::uint64_t>& seeds) const {
    std::vector<double> out;
    for (std::uint64_t s : seeds) out.push_back(by_seed.at(s).back().win_rate);
    return out;
  }
};

std::map<std::string, ArmOutcome> run_arm_set(const ExperimentPlan& base,
                                              const std::vector<std::string>& arm_names) {
  std::map<std::string, ArmOutcome> outcomes;
  for (const ExperimentArm& arm : expand_arms(base, arm_names)) {
    ArmOutcome outcome;
    for (std::uint64_t seed : arm.plan.seeds) {
      SeedResult r = run_seed(arm.plan, seed);
      outcome.by_seed[seed] = r.iterations;
    }
    outcomes[arm.name] = std::move(outcome);
  }
  return outcomes;
}

const std::map<std::string, ArmOutcome>& grid9_results() {
  static std::map<std::string, ArmOutcome> cached =
      run_arm_set(single_iteration_preset(), {"grid9"});
  return cached;
}

std::vector<double> paired_diffs(const ArmOutcome& a, const ArmOutcome& b,
                                 const std::vector<std::uint64_t>& seeds) {
  std::vector<double> out;
  for (std::uint64_t s : seeds) {
    out.push_back(a.by_seed.at(s).back().win_rate - b.by_seed.at(s).back().win_rate);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

CriterionResult criterion_gradients() {
  RngStream rng(10001);
  WorldConfig config;
  config.num_instructions = 8;
  config.pool_size = 6;
  config.feature_dim = 4;
  config.seed = 42;
  World world = generate_world(config);

  const double h = 1e-5;
  const double rtol = 1e-6;
  long checked = 0;
  double worst = 0.0;

  for (LossKind kind : {LossKind::dpo, LossKind::ipo, LossKind::slic}) {
    int done = 0;
    while (done < 100) {
      bool with_head = rng.next_double() < 0.5;
      TabularPolicy policy =
          with_head ? TabularPolicy::uniform(world, true) : TabularPolicy::uniform(world, false);
      TabularPolicy ref_src =
          with_head ? TabularPolicy::uniform(world, true) : TabularPolicy::uniform(world, false);
      for (int x = 0; x < world.num_instructions(); ++x) {
        std::vector<double> a(6), b(6);
        for (double& v : a) v = rng.next_normal(0.0, 1.5);
        for (double& v : b) v = rng.next_normal(0.0, 1.5);
        policy.set_table(x, std::move(a));
        ref_src.set_table(x, std::move(b));
      }
      if (with_head) {
        std::vector<double> w(4);
        for (double& v : w) v = rng.next_normal(0.0, 0.5);
        policy.add_to_feature_weights(w);
      }
      TabularPolicy ref = ref_src.snapshot();

      AnnotatedTrio trio;
      trio.instruction_id = static_cast<int>(rng.uniform_index(8));
      trio.chosen = static_cast<int>(rng.uniform_index(6));
      trio.rejected = (trio.chosen + 1 + static_cast<int>(rng.uniform_index(5))) % 6;
      double beta = 0.05 + rng.next_double();
      double rho = signed_margin(policy, ref, beta, trio);
      if (kind == LossKind::slic && std::fabs(rho - 1.0) < 1e-2) continue;  // hinge kink

      TrioGradient g = grad_logits(policy, ref, beta, trio, kind);

      auto loss_now = [&] { return preference_loss(signed_margin(policy, ref, beta, trio), kind); };
      auto check = [&](double analytic, double fd) {
        double scale = std::max({1.0, std::fabs(analytic), std::fabs(fd)});
        worst = std::max(worst, std::fabs(analytic - fd) / scale);
        ++checked;
      };
      for (int y = 0; y < 6; ++y) {
        policy.add_to_table(trio.instruction_id, y, h);
        double up = loss_now();
        policy.add_to_table(trio.instruction_id, y, -2 * h);
        double down = loss_now();
        policy.add_to_table(trio.instruction_id, y, h);
        double analytic =
            y == trio.chosen ? g.d_chosen : (y == trio.rejected ? g.d_rejected : 0.0);
        check(analytic, (up - down) / (2 * h));
      }
      if (with_head) {
        for (std::size_t d = 0; d < 4; ++d) {
          std::vector<double> delta(4, 0.0);
          delta[d] = h;
          policy.add_to_feature_weights(delta);
          double up = loss_now();
          delta[d] = -2 * h;
          policy.add_to_feature_weights(delta);
          double down = loss_now();
          delta[d] = h;
          policy.add_to_feature_weights(delta);
          check(g.d_feature_weights[d], (up - down) / (2 * h));
        }
      }
      ++done;
    }
  }
  CriterionResult result;
  result.pass = worst <= rtol;
  result.detail = "worst relative error " + fmt(worst) + " over " + std::to_string(checked) +
                  " components (tolerance " + fmt(rtol) + ")";
  return result;
}

CriterionResult criterion_margin_identities() {
  RngStream rng(10002);
  double worst_decomp = 0.0;
  double worst_cancel = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    int k = 3 + static_cast<int>(rng.uniform_index(6));
    std::vector<double> theta(static_cast<std::size_t>(k)), refl(static_cast<std::size_t>(k));
    for (double& v : theta) v = rng.next_normal(0.0, 2.0);
    for (double& v : refl) v = rng.next_normal(0.0, 2.0);
    TabularPolicy policy = TabularPolicy::from_logits({theta});
    TabularPolicy ref = TabularPolicy::from_logits({refl});
    double beta = 0.02 + 2.0 * rng.next_double();
    int a = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(k)));
    int b = (a + 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(k - 1)))) % k;

    double margin_form =
        beta * (implicit_reward(policy, ref, 0, a) - implicit_reward(policy, ref, 0, b));
    double ratio_form = beta * (policy.log_prob(0, a) - policy.log_prob(0, b)) -
                        beta * (ref.log_prob(0, a) - ref.log_prob(0, b));
    double cancel_form =
        beta * ((theta[static_cast<std::size_t>(a)] - theta[static_cast<std::size_t>(b)]) -
                (refl[static_cast<std::size_t>(a)] - refl[static_cast<std::size_t>(b)]));
    worst_decomp = std::max(worst_decomp, std::fabs(margin_form - ratio_form));
    worst_cancel = std::max(worst_cancel, std::fabs(margin_form - cancel_form));
  }

  // beta rescaling: exact argsort invariance over a 500-record set
  Instruction x;
  x.id = 0;
  for (int i = 0; i < 8; ++i) x.pool.push_back({i, 5 + 3 * i, 0.0, {}});
  bool argsort_ok = true;
  {
    std::vector<double> theta(8), refl(8);
    for (double& v : theta) v = rng.next_normal(0.0, 2.0);
    for (double& v : refl) v = rng.next_normal(0.0, 2.0);
    TabularPolicy policy = TabularPolicy::from_logits({theta});
    TabularPolicy ref = TabularPolicy::from_logits({refl});
    std::vector<int> ids = {0, 1, 2, 3, 4, 5, 6, 7};

    auto argsort = [&](double beta) {
      std::vector<MarginRecord> records = margins_for_sample(policy, ref, beta, x, ids);
      // replicate across synthetic instruction ids for a larger ranking
      std::vector<MarginRecord> ranking;
      for (int rep = 0; rep < 18; ++rep) {
        for (MarginRecord rec : records) {
          rec.instruction_id = rep;
          rec.rho *= (1.0 + 0.001 * rep);  // distinct margins across reps
          ranking.push_back(rec);
        }
      }
      std::vector<std::size_t> order(ranking.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
        if (ranking[l].rho != ranking[r].rho) return ranking[l].rho < ranking[r].rho;
        if (ranking[l].instruction_id != ranking[r].instruction_id)
          return ranking[l].instruction_id < ranking[r].instruction_id;
        if (ranking[l].a != ranking[r].a) return ranking[l].a < ranking[r].a;
        return ranking[l].b < ranking[r].b;
      });
      return order;
    };
    auto base = argsort(0.1);
    for (double beta : {0.004, 0.05, 0.3, 1.0, 6.5}) {
      if (argsort(beta) != base) argsort_ok = false;
    }
  }

  CriterionResult result;
  result.pass = worst_decomp < 1e-12 && worst_cancel < 1e-12 && argsort_ok;
  result.detail = "decomposition " + fmt(worst_decomp) + ", cancellation " + fmt(worst_cancel) +
                  " (tolerance 1e-12), argsort invariance " + (argsort_ok ? "exact" : "BROKEN");
  return result;
}

CriterionResult criterion_selection_oracle() {
  RngStream rng(10003);
  long mismatches = 0;
  long pools = 0;

  auto key_of = [](const MarginRecord& r, Normalization n) {
    return n == Normalization::raw ? r.rho : r.rho_hat;
  };

  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 10 + rng.uniform_index(191);  // <= 200 records
    std::vector<MarginRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
      MarginRecord rec;
      rec.instruction_id = static_cast<int>(rng.uniform_index(30));
      rec.a = static_cast<int>(rng.uniform_index(4));
      rec.b = rec.a + 1 + static_cast<int>(rng.uniform_index(4));
      rec.rho = rng.next_double();
      rec.rho_hat = rng.next_double();
      rec.provisional_winner = rec.a;
      records.push_back(rec);
    }
    long budget = static_cast<long>(rng.uniform_index(n + 1));
    Normalization norm =
        rng.next_double() < 0.5 ? Normalization::raw : Normalization::length_normalized;

    for (SelectionKind kind : {SelectionKind::smallest, SelectionKind::largest}) {
      // independent exhaustive-scan oracle
      bool smallest = kind == SelectionKind::smallest;
      std::vector<MarginRecord> remaining = records;
      std::vector<MarginRecord> expected;
      while (expected.size() < static_cast<std::size_t>(budget) && !remaining.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < remaining.size(); ++i) {
          double ki = key_of(remaining[i], norm);
          double kb = key_of(remaining[best], norm);
          bool better;
          if (ki != kb) {
            better = smallest ? ki < kb : ki > kb;
          } else {
            const MarginRecord& l = remaining[i];
            const MarginRecord& r = remaining[best];
            better = std::tie(l.instruction_id, l.a, l.b) < std::tie(r.instruction_id, r.a, r.b);
          }
          if (better) best = i;
        }
        expected.push_back(remaining[best]);
        remaining.erase(remaining.begin() + static_cast<long>(best));
      }

      RngStream unused(0);
      Strategy strategy{SelectionLevel::corpus, kind, norm};
      std::vector<MarginRecord> got = corpus_select(records, strategy, budget, unused);
      if (got.size() != expected.size()) {
        ++mismatches;
        continue;
      }
      for (std::size_t i = 0; i < got.size(); ++i) {
        if (got[i].instruction_id != expected[i].instruction_id || got[i].a != expected[i].a ||
            got[i].b != expected[i].b) {
          ++mismatches;
          break;
        }
      }

      // instance level: the budget-1 oracle on a shared-instruction subset
      std::vector<MarginRecord> one_instruction;
      for (const MarginRecord& rec : records) {
        if (rec.instruction_id == records.front().instruction_id) {
          one_instruction.push_back(rec);
        }
      }
      std::vector<MarginRecord> scan = one_instruction;
      std::size_t best = 0;
      for (std::size_t i = 1; i < scan.size(); ++i) {
        double ki = key_of(scan[i], norm);
        double kb = key_of(scan[best], norm);
        bool better;
        if (ki != kb) {
          better = smallest ? ki < kb : ki > kb;
        } else {
          better = std::tie(scan[i].a, scan[i].b) < std::tie(scan[best].a, scan[best].b);
        }
        if (better) best = i;
      }
      Strategy instance_strategy{SelectionLevel::instance, kind, norm};
      std::vector<int> order = {0, 1};
      MarginRecord picked = instance_select(one_instruction, instance_strategy, order);
      if (picked.a != scan[best].a || picked.b != scan[best].b ||
          key_of(picked, norm) != key_of(scan[best], norm)) {
        ++mismatches;
      }
    }
    ++pools;
  }

  CriterionResult result;
  result.pass = mismatches == 0;
  result.detail = std::to_string(pools) + " pools, " + std::to_string(mismatches) + " mismatches";
  return result;
}

CriterionResult criterion_calibration() {
  ExperimentPlan plan = single_iteration_preset();
  int positive = 0;
  std::vector<double> correlations;
  for (std::uint64_t seed : plan.seeds) {
    WorldConfig config = plan.world;
    config.seed = seed;
    World world = generate_world(config);
    SeedSetup setup = prepare_seed(plan, world, seed);

    // margins of the fresh post-warmup slice, all pairs pooled
    RngStream sampling_rng = RngStream::substream(seed, "sampling", 1);
    std::vector<MarginRecord> pooled;
    long slice = plan.schedule.per_iteration.front();
    for (long i = 0; i < slice; ++i) {
      int xid = static_cast<int>(setup.cursor + i);
      std::vector<int> sampled = setup.policy.sample_responses(xid, plan.sampling, sampling_rng);
      std::vector<MarginRecord> records =
          margins_for_sample(setup.policy, setup.ref, plan.train.beta,
                             world.instruction(xid), sampled);
      pooled.insert(pooled.end(), records.begin(), records.end());
    }
    GoldOracle oracle = setup.oracle.fork(1);
    CalibrationTable table = calibration_table(pooled, oracle, world, 10);
    std::vector<double> margins, accuracies;
    for (const CalibrationBin& bin : table.bins) {
      margins.push_back(0.5 * (bin.margin_lo + bin.margin_hi));
      accuracies.push_back(bin.empirical_accuracy);
    }
    double rho = spearman(margins, accuracies);
    correlations.push_back(rho);
    if (rho > 0.0) ++positive;
  }
  CriterionResult result;
  result.pass = positive >= 18;
  result.detail = std::to_string(positive) + "/20 seeds with positive Spearman (need >= 18); mean "
                  "correlation " + fmt(mean_se(correlations).mean);
  return result;
}

CriterionResult criterion_single_iteration_ordering() {
  const auto& grid = grid9_results();
  const std::vector<std::uint64_t>& seeds = single_iteration_preset().seeds;
  const ArmOutcome& smallest = grid.at("smallest_smallest");
  const ArmOutcome& random_arm = grid.at("random_random");
  const ArmOutcome& largest = grid.at("largest_largest");

  MeanSe sr = mean_se(paired_diffs(smallest, random_arm, seeds));
  MeanSe rl = mean_se(paired_diffs(random_arm, largest, seeds));
  bool pass = sr.mean > 1.5 * sr.se && rl.mean > 1.5 * rl.se;

  CriterionResult result;
  result.pass = pass;
  result.detail = "smallest-random " + fmt(sr.mean) + " (1.5se " + fmt(1.5 * sr.se) +
                  "), random-largest " + fmt(rl.mean) + " (1.5se " + fmt(1.5 * rl.se) + ")";
  return result;
}

CriterionResult criterion_multi_iteration() {
  ExperimentPlan plan = multi_iteration_preset();
  auto outcomes = run_arm_set(plan, {"always_smallest", "always_random", "single_iter"});
  const std::vector<std::uint64_t>& seeds = plan.seeds;

  int nondecreasing = 0;
  for (std::uint64_t s : seeds) {
    const std::vector<IterationRecord>& iters = outcomes.at("always_smallest").by_seed.at(s);
    bool ok = true;
    for (std::size_t i = 1; i < iters.size(); ++i) {
      if (iters[i].win_rate < iters[i - 1].win_rate) ok = false;
    }
    if (ok) ++nondecreasing;
  }

  MeanSe diff = mean_se(paired_diffs(outcomes.at("always_smallest"),
                                     outcomes.at("always_random"), seeds));
  MeanSe single_diff = mean_se(paired_diffs(outcomes.at("always_smallest"),
                                            outcomes.at("single_iter"), seeds));

  CriterionResult result;
  result.pass = nondecreasing >= 16 && diff.mean > 1.5 * diff.se && single_diff.mean > 0.0;
  result.detail = std::to_string(nondecreasing) +
                  "/20 nondecreasing (need >= 16); smallest-random " + fmt(diff.mean) +
                  " (1.5se " + fmt(1.5 * diff.se) + "); smallest-singleiter " +
                  fmt(single_diff.mean);
  return result;
}

CriterionResult criterion_allocation() {
  ExperimentPlan plan = allocation_preset();
  auto outcomes = run_arm_set(plan, {"increase", "constant", "decrease"});
  const std::vector<std::uint64_t>& seeds = plan.seeds;

  MeanSe di = mean_se(paired_diffs(outcomes.at("decrease"), outcomes.at("increase"), seeds));
  MeanSe dc = mean_se(paired_diffs(outcomes.at("decrease"), outcomes.at("constant"), seeds));
  double mean_c = mean_se(outcomes.at("constant").final_win_rates(seeds)).mean;
  double mean_d = mean_se(outcomes.at("decrease").final_win_rates(seeds)).mean;
  double mean_i = mean_se(outcomes.at("increase").final_win_rates(seeds)).mean;

  bool decrease_beats_increase = di.mean > 1.0 * di.se;
  bool constant_between = (mean_c <= mean_d && mean_c >= mean_i) || std::fabs(dc.mean) <= dc.se;

  CriterionResult result;
  result.pass = decrease_beats_increase && constant_between;
  result.detail = "decrease-increase " + fmt(di.mean) + " (1se " + fmt(di.se) + "); means d/c/i " +
                  fmt(mean_d) + "/" + fmt(mean_c) + "/" + fmt(mean_i);
  return result;
}

CriterionResult criterion_margin_kl_association() {
  const auto& grid = grid9_results();
  const std::vector<std::uint64_t>& seeds = single_iteration_preset().seeds;
  std::vector<double> margins, kls;
  for (const auto& [name, outcome] : grid) {
    double m = 0.0, k = 0.0;
    for (std::uint64_t s : seeds) {
      m += outcome.by_seed.at(s).back().mean_selected_margin;
      k += outcome.by_seed.at(s).back().mean_kl;
    }
    margins.push_back(m / static_cast<double>(seeds.size()));
    kls.push_back(k / static_cast<double>(seeds.size()));
  }
  double r = pearson(margins, kls);
  CriterionResult result;
  result.pass = margins.size() == 9 && r > 0.0;
  result.detail = "Pearson(mean |rho|, mean KL) = " + fmt(r) + " over 9 strategy combinations";
  return result;
}

CriterionResult criterion_budget_accounting() {
  long runs = 0;
  // fraction budgets across three strategy mixes
  ExperimentPlan plan = multi_iteration_preset();
  plan.seeds = {1, 2, 3};
  for (const char* arm_name : {"always_smallest", "always_random", "always_largest"}) {
    for (const ExperimentArm& arm : expand_arms(plan, {arm_name})) {
      for (std::uint64_t seed : arm.plan.seeds) {
        SeedResult r = run_seed(arm.plan, seed);
        long expected = r.warmup_annotations;
        for (std::size_t i = 0; i < r.iterations.size(); ++i) {
          long budget = arm.plan.budget_for(static_cast<int>(i)).resolve(
              static_cast<std::size_t>(r.pooled_per_iteration[i]));
          if (r.iterations[i].trained_instances != budget) {
            return {false, "iteration budget mismatch"};
          }
          expected += budget;
        }
        if (r.annotations_used != static_cast<std::uint64_t>(expected)) {
          return {false, "oracle calls " + std::to_string(r.annotations_used) + " != " +
                             std::to_string(expected)};
        }
        ++runs;
      }
    }
  }
  // absolute-count budgets
  ExperimentPlan counted = multi_iteration_preset();
  counted.seeds = {5};
  counted.budgets = {CorpusBudget::from_count(120), CorpusBudget::from_count(80),
                     CorpusBudget::from_count(40)};
  SeedResult r = run_seed(counted, 5);
  long expected = r.warmup_annotations + 120 + 80 + 40;
  if (r.annotations_used != static_cast<std::uint64_t>(expected)) {
    return {false, "count-budget oracle calls " + std::to_string(r.annotations_used) + " != " +
                       std::to_string(expected)};
  }
  ++runs;
  return {true, std::to_string(runs) + " runs, annotation calls equal summed budgets exactly"};
}

CriterionResult criterion_ingestion_equivalence() {
  ExperimentPlan plan = single_iteration_preset();
  plan.world.num_instructions = 700;
  plan.warmup.instructions = 200;
  plan.schedule = make_schedule(BudgetSchedule::Kind::constant, {400});
  std::uint64_t seed = 13;
  WorldConfig config = plan.world;
  config.seed = seed;
  World world = generate_world(config);
  SeedSetup setup = prepare_seed(plan, world, seed);

  RngStream sampling_rng = RngStream::substream(seed, "sampling", 1);
  std::vector<InstructionSample> samples;
  for (long i = 0; i < 400; ++i) {
    InstructionSample s;
    s.instruction_id = static_cast<int>(setup.cursor + i);
    s.sampled = setup.policy.sample_responses(s.instruction_id, plan.sampling, sampling_rng);
    samples.push_back(std::move(s));
  }

  fs::path dir = fs::temp_directory_path() / "dposim_acceptance_ingest";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::path dump_path = dir / "world.dump";
  write_dump(export_dump(world, setup.policy, setup.ref, samples), dump_path.string());

  struct Combo {
    SelectionKind inst;
    SelectionKind corp;
    bool normalized;
  };
  const Combo combos[] = {{SelectionKind::smallest, SelectionKind::smallest, false},
                          {SelectionKind::random, SelectionKind::random, false},
                          {SelectionKind::largest, SelectionKind::smallest, true}};
  int compared = 0;
  for (const Combo& combo : combos) {
    Normalization norm = combo.normalized ? Normalization::length_normalized : Normalization::raw;
    DumpSelectionResult in_process =
        select_in_process(world, setup.policy, setup.ref, samples, combo.inst, combo.corp, norm,
                          CorpusBudget::from_fraction(0.5), plan.train.beta, 7);
    fs::path in_process_path = dir / ("inproc_" + std::to_string(compared) + ".csv");
    write_worklist(in_process.rows, in_process_path.string());

    fs::path ingested_path = dir / ("ingested_" + std::to_string(compared) + ".csv");
    std::vector<std::string> args = {"select",      "--dump",   dump_path.string(),
                                     "--instance",  to_string(combo.inst),
                                     "--corpus",    to_string(combo.corp),
                                     "--budget",    "50%",
                                     "--beta",      "0.1",
                                     "--seed",      "7",
                                     "--out",       ingested_path.string()};
    if (combo.normalized) args.push_back("--normalized");
    if (cli_main(args) != 0) return {false, "cmd_select failed"};

    std::string a = read_file(in_process_path);
    std::string b = read_file(ingested_path);
    if (a.empty() || a != b) {
      return {false, "byte mismatch on combo " + std::to_string(compared)};
    }
    ++compared;
  }
  return {true, std::to_string(compared) + " strategy combos byte-identical (" +
                    std::to_string(samples.size()) + " instructions)"};
}

CriterionResult criterion_determinism() {
  fs::path dir = fs::temp_directory_path() / "dposim_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::path plan_path = dir / "plan.plan";
  {
    std::ofstream out(plan_path);
    out << "[world]\ninstructions = 300\npool_size = 8\nfeature_dim = 8\n"
        << "[train]\nstep_size = 0.4\nepochs = 3\nbatch_size = 16\n"
        << "[strategy]\ninstance = smallest\ncorpus = smallest\n"
        << "[schedule]\nkind = constant\nsizes = 80, 80\nbudgets = 50%\n"
        << "[run]\nseeds = 1,2,3\narms = always_smallest, always_random\n"
        << "warmup_instructions = 60\n";
  }
  fs::path out_a = dir / "a";
  fs::path out_b = dir / "b";
  if (cli_main({"run", "--plan", plan_path.string(), "--out", out_a.string()}) != 0)
    return {false, "first run failed"};
  if (cli_main({"run", "--plan", plan_path.string(), "--out", out_b.string()}) != 0)
    return {false, "second run failed"};
  std::string a = read_file(out_a / "results.csv");
  std::string b = read_file(out_b / "results.csv");
  if (a.empty()) return {false, "empty results.csv"};
  if (a != b) return {false, "results.csv differs between identical runs"};
  if (read_file(out_a / "summary.txt") != read_file(out_b / "summary.txt"))
    return {false, "summary.txt differs between identical runs"};
  return {true, "results.csv byte-identical across reruns (" + std::to_string(a.size()) +
                    " bytes)"};
}

int main() {
  Gate gate;
  gate.run("C1 gradient correctness (FD 1e-5, rel 1e-6, 100 trios/loss)", 5.0,
           criterion_gradients);
  gate.run("C2 margin identities (1e-12; beta argsort exact)", 0.0, criterion_margin_identities);
  gate.run("C3 selection equals brute-force oracle (50 pools)", 0.0, criterion_selection_oracle);
  gate.run("C4 calibration trend (>=18/20 seeds positive Spearman)", 120.0, criterion_calibration);
  gate.run("C5 single-iteration ordering smallest > random > largest", 300.0,
           criterion_single_iteration_ordering);
  gate.run("C6 multi-iteration always-smallest dominance", 0.0, criterion_multi_iteration);
  gate.run("C7 allocation ordering decrease >= increase", 0.0, criterion_allocation);
  gate.run("C8 margin-KL association positive across 9 combos", 0.0,
           criterion_margin_kl_association);
  gate.run("C9 budget accounting exact", 0.0, criterion_budget_accounting);
  gate.run("C10 ingestion-path equivalence byte-for-byte", 0.0, criterion_ingestion_equivalence);
  gate.run("C11 determinism of run invocations", 0.0, criterion_determinism);

  if (gate.failures() == 0) {
    std::printf("acceptance: all criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criteria failed\n", gate.failures());
  return 1;
}
