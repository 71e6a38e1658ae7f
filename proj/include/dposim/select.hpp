#pragma once

#include <span>
#include <string>
#include <vector>

#include "dposim/margin.hpp"
#include "dposim/policy.hpp"
#include "dposim/rng.hpp"
#include "dposim/world.hpp"

namespace dposim {

enum class SelectionLevel { instance, corpus };
enum class SelectionKind { smallest, largest, random };
enum class Normalization { raw, length_normalized };

struct Strategy {
  SelectionLevel level = SelectionLevel::instance;
  SelectionKind kind = SelectionKind::random;
  Normalization normalization = Normalization::raw;

  double margin_key(const MarginRecord& rec) const {
    return normalization == Normalization::raw ? rec.rho : rec.rho_hat;
  }
};

SelectionKind parse_selection_kind(const std::string& word);   // ConfigError
Normalization parse_normalization(const std::string& word);    // ConfigError
std::string to_string(SelectionKind kind);

struct BudgetSchedule {
  enum class Kind { increase, constant, decrease };
  Kind kind = Kind::constant;
  std::vector<long> per_iteration;  // M_i

  int iterations() const { return static_cast<int>(per_iteration.size()); }
  long total() const;
};

BudgetSchedule::Kind parse_schedule_kind(const std::string& word);
/// Validates the monotonicity the kind demands (increase nondecreasing,
/// decrease nonincreasing, constant all equal) and positivity.
BudgetSchedule make_schedule(BudgetSchedule::Kind kind, std::vector<long> sizes);

/// Corpus budget given either as an absolute count or as a fraction of the
/// pooled record set (fraction rounds down).
struct CorpusBudget {
  bool is_fraction = false;
  double fraction = 0.0;
  long count = 0;

  static CorpusBudget from_count(long n);
  static CorpusBudget from_fraction(double f);
  /// Parses "5000" or "50%".
  static CorpusBudget parse(const std::string& text);
  long resolve(std::size_t pool_size) const;
  std::string describe() const;
};

/// The worth-annotating pair of one instruction: smallest/largest pick the
/// extremal record under the strategy's margin field (ties by (a, b)
/// ascending); random picks the pair formed by the first two distinct
/// responses in sampled order. records must be nonempty and share one
/// instruction.
MarginRecord instance_select(std::span<const MarginRecord> records, const Strategy& strategy,
                             std::span<const int> sampled_order);

/// Budgeted corpus-level ranking. smallest/largest return the budget records
/// with extremal margins in ranking order (full sort; ties by
/// (instruction_id, a, b) ascending); random samples without replacement in
/// draw order. budget >= |records| returns all of them.
std::vector<MarginRecord> corpus_select(std::vector<MarginRecord> records, const Strategy& strategy,
                                        long budget, RngStream& rng);

/// The sampled response ids of one instruction, in generation order.
struct InstructionSample {
  int instruction_id = 0;
  std::vector<int> sampled;
};

/// Instance-level selection per instruction, then corpus-level selection over
/// the pooled records. Instructions with fewer than two distinct sampled
/// responses are dropped before pooling.
std::vector<MarginRecord> select_for_iteration(const World& world,
                                               std::span<const InstructionSample> samples,
                                               const Strategy& instance_strategy,
                                               const Strategy& corpus_strategy,
                                               const CorpusBudget& corpus_budget, double beta,
                                               const TabularPolicy& policy,
                                               const TabularPolicy& ref, RngStream& rng);

}  // namespace dposim
