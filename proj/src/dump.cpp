#include "dposim/dump.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dposim/error.hpp"
#include "dposim/io.hpp"
#include "dposim/rng.hpp"

namespace dposim {

void write_dump(std::span<const DumpRecord> records, std::ostream& out) {
  out << "#dump v1\n";
  for (const DumpRecord& r : records) {
    out << r.instruction_key << '\t' << r.response_key << '\t' << format_sci(r.logp_policy)
        << '\t' << format_sci(r.logp_ref) << '\t' << r.length << "\n";
  }
}

void write_dump(std::span<const DumpRecord> records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_dump(records, out);
}

std::vector<DumpRecord> load_dump(std::istream& in) {
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty dump file", 1);
  ++line_no;
  if (trim(line) != "#dump v1") throw ParseError("expected '#dump v1' header", line_no);

  std::vector<DumpRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 5)
      throw ParseError("expected 5 tab-separated fields, got " + std::to_string(fields.size()),
                       line_no);
    DumpRecord r;
    r.instruction_key = fields[0];
    r.response_key = fields[1];
    char* end = nullptr;
    r.logp_policy = std::strtod(fields[2].c_str(), &end);
    if (*end != '\0' || !std::isfinite(r.logp_policy))
      throw ParseError("bad logp_policy '" + fields[2] + "'", line_no);
    r.logp_ref = std::strtod(fields[3].c_str(), &end);
    if (*end != '\0' || !std::isfinite(r.logp_ref))
      throw ParseError("bad logp_ref '" + fields[3] + "'", line_no);
    r.length = std::strtol(fields[4].c_str(), &end, 10);
    if (*end != '\0' || r.length < 1) throw ParseError("bad length '" + fields[4] + "'", line_no);
    if (!seen.insert({r.instruction_key, r.response_key}).second)
      throw ParseError("duplicate (instruction_key, response_key) pair ('" + r.instruction_key +
                           "', '" + r.response_key + "')",
                       line_no);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<DumpRecord> load_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return load_dump(in);
}

std::vector<DumpRecord> export_dump(const World& world, const TabularPolicy& policy,
                                    const TabularPolicy& ref,
                                    std::span<const InstructionSample> samples) {
  std::vector<DumpRecord> out;
  for (const InstructionSample& sample : samples) {
    const Instruction& x = world.instruction(sample.instruction_id);
    std::vector<int> distinct;
    for (int id : sample.sampled) {
      if (std::find(distinct.begin(), distinct.end(), id) == distinct.end()) distinct.push_back(id);
    }
    for (int id : distinct) {
      DumpRecord r;
      r.instruction_key = std::to_string(sample.instruction_id);
      r.response_key = std::to_string(id);
      r.logp_policy = policy.log_prob(sample.instruction_id, id);
      r.logp_ref = ref.log_prob(sample.instruction_id, id);
      r.length = x.pool.at(static_cast<std::size_t>(id)).length;
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_worklist(std::span<const WorklistRow> rows, std::ostream& out) {
  out << "instruction_key,response_a,response_b,rho,rho_hat,provisional_winner\n";
  for (const WorklistRow& row : rows) {
    out << csv_field(row.instruction_key) << ',' << csv_field(row.response_a) << ','
        << csv_field(row.response_b) << ',' << format_real(row.rho) << ','
        << format_real(row.rho_hat) << ',' << csv_field(row.provisional_winner) << "\n";
  }
}

void write_worklist(std::span<const WorklistRow> rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_worklist(rows, out);
}

namespace {

bool parses_as_integer(const std::string& s, long& value) {
  if (s.empty()) return false;
  char* end = nullptr;
  value = std::strtol(s.c_str(), &end, 10);
  return *end == '\0';
}

struct IngestedInstruction {
  std::string key;
  int canonical_id = 0;  // numeric key when the file is numeric, file rank otherwise
  // responses in file order
  std::vector<std::string> response_keys;
  std::vector<int> response_ids;  // canonical per-response ids, parallel to keys
  std::vector<double> implicit;
  std::vector<long> lengths;
};

}  // namespace

DumpSelectionResult select_from_dump(std::span<const DumpRecord> records,
                                     SelectionKind instance_kind, SelectionKind corpus_kind,
                                     Normalization normalization, const CorpusBudget& budget,
                                     double beta, std::uint64_t seed) {
  // Group by instruction in first-appearance order.
  std::vector<IngestedInstruction> instructions;
  std::map<std::string, std::size_t> index_of;
  bool all_numeric = true;
  long numeric_probe = 0;
  for (const DumpRecord& r : records) {
    if (!parses_as_integer(r.instruction_key, numeric_probe) ||
        !parses_as_integer(r.response_key, numeric_probe))
      all_numeric = false;
    auto [it, inserted] = index_of.try_emplace(r.instruction_key, instructions.size());
    if (inserted) {
      IngestedInstruction instr;
      instr.key = r.instruction_key;
      instructions.push_back(std::move(instr));
    }
    IngestedInstruction& instr = instructions[it->second];
    instr.response_keys.push_back(r.response_key);
    instr.implicit.push_back(r.logp_policy - r.logp_ref);
    instr.lengths.push_back(r.length);
  }

  // Canonical ids reproduce the in-process numeric ordering when keys are
  // numeric; otherwise lexicographic rank within the instruction.
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    IngestedInstruction& instr = instructions[i];
    if (all_numeric) {
      long v = 0;
      parses_as_integer(instr.key, v);
      instr.canonical_id = static_cast<int>(v);
      instr.response_ids.resize(instr.response_keys.size());
      for (std::size_t j = 0; j < instr.response_keys.size(); ++j) {
        parses_as_integer(instr.response_keys[j], v);
        instr.response_ids[j] = static_cast<int>(v);
      }
    } else {
      instr.canonical_id = static_cast<int>(i);
      std::vector<std::size_t> order(instr.response_keys.size());
      for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
      std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
        return instr.response_keys[l] < instr.response_keys[r];
      });
      instr.response_ids.resize(order.size());
      for (std::size_t rank = 0; rank < order.size(); ++rank)
        instr.response_ids[order[rank]] = static_cast<int>(rank);
    }
  }

  DumpSelectionResult result;

  // Instance-level stage.
  std::vector<MarginRecord> pooled;
  std::map<std::pair<int, int>, std::pair<std::string, std::string>> key_of;  // (instr, resp) -> keys
  for (const IngestedInstruction& instr : instructions) {
    if (instr.response_keys.size() < 2) {
      result.warnings.push_back("instruction '" + instr.key + "' has a single response; skipped");
      continue;
    }
    std::vector<MarginRecord> recs;
    for (std::size_t i = 0; i < instr.response_ids.size(); ++i) {
      key_of[{instr.canonical_id, instr.response_ids[i]}] = {instr.key, instr.response_keys[i]};
      for (std::size_t j = i + 1; j < instr.response_ids.size(); ++j) {
        recs.push_back(make_margin_record(instr.canonical_id, instr.response_ids[i],
                                          instr.response_ids[j], instr.implicit[i],
                                          instr.implicit[j], static_cast<int>(instr.lengths[i]),
                                          static_cast<int>(instr.lengths[j]), beta));
      }
    }
    std::sort(recs.begin(), recs.end(), [](const MarginRecord& l, const MarginRecord& r) {
      if (l.a != r.a) return l.a < r.a;
      return l.b < r.b;
    });
    Strategy instance_strategy{SelectionLevel::instance, instance_kind, normalization};
    pooled.push_back(instance_select(recs, instance_strategy, instr.response_ids));
    ++result.instructions_used;
  }

  // Corpus-level stage.
  Strategy corpus_strategy{SelectionLevel::corpus, corpus_kind, normalization};
  RngStream rng = RngStream::substream(seed, "selection", 0);
  long resolved = budget.resolve(pooled.size());
  std::vector<MarginRecord> selected = corpus_select(std::move(pooled), corpus_strategy, resolved, rng);

  for (const MarginRecord& rec : selected) {
    WorklistRow row;
    row.instruction_key = key_of.at({rec.instruction_id, rec.a}).first;
    row.response_a = key_of.at({rec.instruction_id, rec.a}).second;
    row.response_b = key_of.at({rec.instruction_id, rec.b}).second;
    row.rho = rec.rho;
    row.rho_hat = rec.rho_hat;
    row.provisional_winner = key_of.at({rec.instruction_id, rec.provisional_winner}).second;
    result.rows.push_back(std::move(row));
  }
  return result;
}

DumpSelectionResult select_in_process(const World& world, const TabularPolicy& policy,
                                      const TabularPolicy& ref,
                                      std::span<const InstructionSample> samples,
                                      SelectionKind instance_kind, SelectionKind corpus_kind,
                                      Normalization normalization, const CorpusBudget& budget,
                                      double beta, std::uint64_t seed) {
  Strategy instance_strategy{SelectionLevel::instance, instance_kind, normalization};
  Strategy corpus_strategy{SelectionLevel::corpus, corpus_kind, normalization};
  RngStream rng = RngStream::substream(seed, "selection", 0);
  std::vector<MarginRecord> selected = select_for_iteration(
      world, samples, instance_strategy, corpus_strategy, budget, beta, policy, ref, rng);

  DumpSelectionResult result;
  std::set<int> usable;
  for (const InstructionSample& s : samples) {
    std::set<int> distinct(s.sampled.begin(), s.sampled.end());
    if (distinct.size() >= 2) usable.insert(s.instruction_id);
  }
  result.instructions_used = static_cast<long>(usable.size());
  for (const MarginRecord& rec : selected) {
    WorklistRow row;
    row.instruction_key = std::to_string(rec.instruction_id);
    row.response_a = std::to_string(rec.a);
    row.response_b = std::to_string(rec.b);
    row.rho = rec.rho;
    row.rho_hat = rec.rho_hat;
    row.provisional_winner = std::to_string(rec.provisional_winner);
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace dposim
