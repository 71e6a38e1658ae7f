#pragma once

#include <string>
#include <vector>

#include "dposim/loop.hpp"
#include "dposim/plan.hpp"

namespace dposim {

/// One results.csv row.
struct ResultRow {
  std::uint64_t seed = 0;
  std::string arm;
  int iteration = 0;
  long trained_instances = 0;
  double win_rate = 0.0;
  double ranking_accuracy = 0.0;
  double mean_kl = 0.0;
  double mean_margin = 0.0;
};

/// Runs every arm for every seed and collects rows in (arm, seed, iteration)
/// order.
std::vector<ResultRow> run_arms(const std::vector<ExperimentArm>& arms);

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> read_results_csv(const std::string& path);  // ParseError on schema mismatch
void write_summary(const std::vector<ResultRow>& rows, const std::string& path);

/// `run --plan <path> --out <dir> [--seeds a,b,c]`: results.csv + summary.txt.
void cmd_run(const std::string& plan_path, const std::string& out_dir,
             const std::string& seeds_override);

/// `select --dump <path> ... --out <path>`: annotation worklist CSV.
void cmd_select(const std::string& dump_path, const std::string& instance_kind,
                const std::string& corpus_kind, const std::string& budget, double beta,
                bool normalized, std::uint64_t seed, const std::string& out_path);

/// `report --results <path> --out <dir>`: per-arm curve CSVs + calibration.csv.
void cmd_report(const std::string& results_path, const std::string& out_dir);

/// `dump --out <path> ...`: simulates a world, warms the policy up, samples,
/// and writes the log-probability dump for the select pipeline.
void cmd_dump(const std::string& out_path, int instructions, int pool_size, std::uint64_t seed,
              long warmup_instructions);

/// Full argv entry point; maps ParseError/ConfigError to exit 2, other
/// failures to exit 1. Shared between the binary and the integration tests.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace dposim
