#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dposim/margin.hpp"
#include "dposim/policy.hpp"
#include "dposim/select.hpp"
#include "dposim/world.hpp"

namespace dposim {

/// One externally computed response: log-probabilities under the policy and
/// the reference, plus the token length. (instruction_key, response_key) is
/// unique within a file.
struct DumpRecord {
  std::string instruction_key;
  std::string response_key;
  double logp_policy = 0.0;
  double logp_ref = 0.0;
  long length = 1;
};

/// Tab-separated with a '#dump v1' header; reals in decimal scientific
/// notation with 17 significant digits.
void write_dump(std::span<const DumpRecord> records, std::ostream& out);
void write_dump(std::span<const DumpRecord> records, const std::string& path);
std::vector<DumpRecord> load_dump(std::istream& in);   // ParseError with line numbers
std::vector<DumpRecord> load_dump(const std::string& path);

/// Dump of a simulated world: instructions ascending, each instruction's
/// distinct sampled responses in sampled order (so the instance-random
/// "first two responses" convention survives ingestion).
std::vector<DumpRecord> export_dump(const World& world, const TabularPolicy& policy,
                                    const TabularPolicy& ref,
                                    std::span<const InstructionSample> samples);

/// One row of the annotation worklist CSV:
/// instruction_key,response_a,response_b,rho,rho_hat,provisional_winner.
struct WorklistRow {
  std::string instruction_key;
  std::string response_a;
  std::string response_b;
  double rho = 0.0;
  double rho_hat = 0.0;
  std::string provisional_winner;
};

void write_worklist(std::span<const WorklistRow> rows, std::ostream& out);
void write_worklist(std::span<const WorklistRow> rows, const std::string& path);

struct DumpSelectionResult {
  std::vector<WorklistRow> rows;
  std::vector<std::string> warnings;  // skipped single-response instructions
  long instructions_used = 0;
};

/// The selection pipeline over ingested records: implicit rewards
/// logp_policy - logp_ref, margin records for all within-instruction pairs,
/// instance-level then corpus-level selection. Pair orientation and
/// tie-breaks order response keys numerically when every key in the file
/// parses as an integer, lexicographically otherwise; the instance-random
/// pair is the first two responses in file order.
DumpSelectionResult select_from_dump(std::span<const DumpRecord> records,
                                     SelectionKind instance_kind, SelectionKind corpus_kind,
                                     Normalization normalization, const CorpusBudget& budget,
                                     double beta, std::uint64_t seed);

/// In-process counterpart used for the ingestion-equivalence contract: the
/// same pipeline run directly on a world, producing identical worklist rows.
DumpSelectionResult select_in_process(const World& world, const TabularPolicy& policy,
                                      const TabularPolicy& ref,
                                      std::span<const InstructionSample> samples,
                                      SelectionKind instance_kind, SelectionKind corpus_kind,
                                      Normalization normalization, const CorpusBudget& budget,
                                      double beta, std::uint64_t seed);

}  // namespace dposim
