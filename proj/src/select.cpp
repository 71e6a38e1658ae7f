#include "dposim/select.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

#include "dposim/error.hpp"

namespace dposim {

SelectionKind parse_selection_kind(const std::string& word) {
  if (word == "smallest") return SelectionKind::smallest;
  if (word == "largest") return SelectionKind::largest;
  if (word == "random") return SelectionKind::random;
  throw ConfigError("unknown selection kind '" + word + "' (expected smallest|largest|random)");
}

Normalization parse_normalization(const std::string& word) {
  if (word == "raw") return Normalization::raw;
  if (word == "length_normalized") return Normalization::length_normalized;
  throw ConfigError("unknown normalization '" + word + "' (expected raw|length_normalized)");
}

std::string to_string(SelectionKind kind) {
  switch (kind) {
    case SelectionKind::smallest: return "smallest";
    case SelectionKind::largest: return "largest";
    case SelectionKind::random: return "random";
  }
  return "?";
}

long BudgetSchedule::total() const {
  long t = 0;
  for (long m : per_iteration) t += m;
  return t;
}

BudgetSchedule::Kind parse_schedule_kind(const std::string& word) {
  if (word == "increase") return BudgetSchedule::Kind::increase;
  if (word == "constant") return BudgetSchedule::Kind::constant;
  if (word == "decrease") return BudgetSchedule::Kind::decrease;
  throw ConfigError("unknown schedule kind '" + word + "' (expected increase|constant|decrease)");
}

BudgetSchedule make_schedule(BudgetSchedule::Kind kind, std::vector<long> sizes) {
  if (sizes.empty()) throw ConfigError("schedule: per_iteration sizes must be nonempty");
  for (long m : sizes) {
    if (m <= 0) throw ConfigError("schedule: iteration sizes must be positive");
  }
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    switch (kind) {
      case BudgetSchedule::Kind::increase:
        if (sizes[i] < sizes[i - 1]) throw ConfigError("schedule: increase sizes must be nondecreasing");
        break;
      case BudgetSchedule::Kind::decrease:
        if (sizes[i] > sizes[i - 1]) throw ConfigError("schedule: decrease sizes must be nonincreasing");
        break;
      case BudgetSchedule::Kind::constant:
        if (sizes[i] != sizes[i - 1]) throw ConfigError("schedule: constant sizes must be all equal");
        break;
    }
  }
  return BudgetSchedule{kind, std::move(sizes)};
}

CorpusBudget CorpusBudget::from_count(long n) {
  if (n < 0) throw ConfigError("corpus budget: count must be nonnegative");
  CorpusBudget b;
  b.count = n;
  return b;
}

CorpusBudget CorpusBudget::from_fraction(double f) {
  if (!(f >= 0.0) || f > 1.0) throw ConfigError("corpus budget: fraction must lie in [0, 1]");
  CorpusBudget b;
  b.is_fraction = true;
  b.fraction = f;
  return b;
}

CorpusBudget CorpusBudget::parse(const std::string& text) {
  if (text.empty()) throw ConfigError("corpus budget: empty value");
  if (text.back() == '%') {
    char* end = nullptr;
    double pct = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() - 1)
      throw ConfigError("corpus budget: bad percentage '" + text + "'");
    return from_fraction(pct / 100.0);
  }
  char* end = nullptr;
  long n = std::strtol(text.c_str(), &end, 10);
  if (*end != '\0') throw ConfigError("corpus budget: bad count '" + text + "'");
  return from_count(n);
}

long CorpusBudget::resolve(std::size_t pool_size) const {
  if (is_fraction) return static_cast<long>(fraction * static_cast<double>(pool_size));
  return count;
}

std::string CorpusBudget::describe() const {
  if (is_fraction) return std::to_string(fraction * 100.0) + "%";
  return std::to_string(count);
}

namespace {

// (margin, instruction_id, a, b) ascending — the deterministic tie rule.
bool margin_less(double key_l, const MarginRecord& l, double key_r, const MarginRecord& r) {
  if (key_l != key_r) return key_l < key_r;
  if (l.instruction_id != r.instruction_id) return l.instruction_id < r.instruction_id;
  if (l.a != r.a) return l.a < r.a;
  return l.b < r.b;
}

}  // namespace

MarginRecord instance_select(std::span<const MarginRecord> records, const Strategy& strategy,
                             std::span<const int> sampled_order) {
  if (records.empty()) throw Error("instance_select: empty record set");
  for (const MarginRecord& rec : records) {
    if (rec.instruction_id != records.front().instruction_id)
      throw StructureError("instance_select: records span multiple instructions");
  }

  if (strategy.kind == SelectionKind::random) {
    // "simply the first two responses": the first two distinct ids in
    // sampled order form the pair.
    int first = -1, second = -1;
    for (int id : sampled_order) {
      if (first < 0) {
        first = id;
      } else if (id != first) {
        second = id;
        break;
      }
    }
    if (second < 0) throw Error("instance_select: fewer than two distinct sampled responses");
    int lo = std::min(first, second);
    int hi = std::max(first, second);
    for (const MarginRecord& rec : records) {
      if (rec.a == lo && rec.b == hi) return rec;
    }
    throw StructureError("instance_select: no record for the first sampled pair (" +
                         std::to_string(lo) + ", " + std::to_string(hi) + ")");
  }

  const bool want_smallest = strategy.kind == SelectionKind::smallest;
  const MarginRecord* best = &records.front();
  double best_key = strategy.margin_key(*best);
  for (const MarginRecord& rec : records.subspan(1)) {
    double key = strategy.margin_key(rec);
    bool better;
    if (key != best_key) {
      better = want_smallest ? key < best_key : key > best_key;
    } else {
      // equal margins: (a, b) ascending wins for either direction
      better = margin_less(key, rec, best_key, *best);
    }
    if (better) {
      best = &rec;
      best_key = key;
    }
  }
  return *best;
}

std::vector<MarginRecord> corpus_select(std::vector<MarginRecord> records, const Strategy& strategy,
                                        long budget, RngStream& rng) {
  if (budget < 0) throw ConfigError("corpus_select: budget must be nonnegative");
  const std::size_t take =
      std::min<std::size_t>(static_cast<std::size_t>(budget), records.size());

  if (strategy.kind == SelectionKind::random) {
    // Seeded sample without replacement, output in draw order.
    std::vector<MarginRecord> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t j = i + rng.uniform_index(records.size() - i);
      std::swap(records[i], records[j]);
      out.push_back(records[i]);
    }
    return out;
  }

  const bool want_smallest = strategy.kind == SelectionKind::smallest;
  std::sort(records.begin(), records.end(), [&](const MarginRecord& l, const MarginRecord& r) {
    double kl = strategy.margin_key(l);
    double kr = strategy.margin_key(r);
    if (kl != kr) return want_smallest ? kl < kr : kl > kr;
    if (l.instruction_id != r.instruction_id) return l.instruction_id < r.instruction_id;
    if (l.a != r.a) return l.a < r.a;
    return l.b < r.b;
  });
  records.resize(take);
  return records;
}

std::vector<MarginRecord> select_for_iteration(const World& world,
                                               std::span<const InstructionSample> samples,
                                               const Strategy& instance_strategy,
                                               const Strategy& corpus_strategy,
                                               const CorpusBudget& corpus_budget, double beta,
                                               const TabularPolicy& policy,
                                               const TabularPolicy& ref, RngStream& rng) {
  std::vector<MarginRecord> pooled;
  pooled.reserve(samples.size());
  for (const InstructionSample& sample : samples) {
    const Instruction& x = world.instruction(sample.instruction_id);
    std::vector<MarginRecord> records = margins_for_sample(policy, ref, beta, x, sample.sampled);
    if (records.empty()) continue;  // fewer than 2 distinct responses: dropped
    pooled.push_back(instance_select(records, instance_strategy, sample.sampled));
  }
  long budget = corpus_budget.resolve(pooled.size());
  return corpus_select(std::move(pooled), corpus_strategy, budget, rng);
}

}  // namespace dposim
