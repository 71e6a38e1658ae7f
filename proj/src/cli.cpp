#include "dposim/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "dposim/dump.hpp"
#include "dposim/error.hpp"
#include "dposim/io.hpp"
#include "dposim/rng.hpp"

namespace dposim {

namespace {

constexpr const char* kResultsHeader =
    "seed,arm,iteration,trained_instances,win_rate,ranking_accuracy,mean_kl,mean_margin";

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  long n = 0;
};

MeanStderr mean_stderr(const std::vector<double>& values) {
  MeanStderr out;
  out.n = static_cast<long>(values.size());
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) {
      double d = v - out.mean;
      ss += d * d;
    }
    double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    out.stderr_ = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return out;
}

// Quote-aware CSV line splitter (fields we emit via csv_field round-trip).
std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current += c;
    }
  }
  fields.push_back(current);
  return fields;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<ResultRow> run_arms(const std::vector<ExperimentArm>& arms) {
  std::vector<ResultRow> rows;
  for (const ExperimentArm& arm : arms) {
    std::vector<SeedResult> results = run_experiment(arm.plan);
    for (const SeedResult& seed_result : results) {
      for (const IterationRecord& it : seed_result.iterations) {
        ResultRow row;
        row.seed = seed_result.seed;
        row.arm = arm.name;
        row.iteration = it.iteration_index;
        row.trained_instances = it.trained_instances;
        row.win_rate = it.win_rate;
        row.ranking_accuracy = it.ranking_accuracy;
        row.mean_kl = it.mean_kl;
        row.mean_margin = it.mean_selected_margin;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << kResultsHeader << "\n";
  for (const ResultRow& r : rows) {
    out << r.seed << ',' << csv_field(r.arm) << ',' << r.iteration << ',' << r.trained_instances
        << ',' << format_real(r.win_rate) << ',' << format_real(r.ranking_accuracy) << ','
        << format_real(r.mean_kl) << ',' << format_real(r.mean_margin) << "\n";
  }
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty results file", 1);
  ++line_no;
  std::string header = line;
  while (!header.empty() && (header.back() == '\r' || header.back() == '\n')) header.pop_back();
  if (header != kResultsHeader)
    throw ParseError("results schema mismatch: expected '" + std::string(kResultsHeader) + "'", 1);
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = parse_csv_line(line);
    if (fields.size() != 8) throw ParseError("expected 8 fields", line_no);
    ResultRow r;
    char* end = nullptr;
    r.seed = std::strtoull(fields[0].c_str(), &end, 10);
    if (*end != '\0') throw ParseError("bad seed '" + fields[0] + "'", line_no);
    r.arm = fields[1];
    r.iteration = static_cast<int>(std::strtol(fields[2].c_str(), &end, 10));
    if (*end != '\0') throw ParseError("bad iteration '" + fields[2] + "'", line_no);
    r.trained_instances = std::strtol(fields[3].c_str(), &end, 10);
    if (*end != '\0') throw ParseError("bad trained_instances '" + fields[3] + "'", line_no);
    r.win_rate = std::strtod(fields[4].c_str(), &end);
    if (*end != '\0') throw ParseError("bad win_rate '" + fields[4] + "'", line_no);
    r.ranking_accuracy = std::strtod(fields[5].c_str(), &end);
    if (*end != '\0') throw ParseError("bad ranking_accuracy '" + fields[5] + "'", line_no);
    r.mean_kl = std::strtod(fields[6].c_str(), &end);
    if (*end != '\0') throw ParseError("bad mean_kl '" + fields[6] + "'", line_no);
    r.mean_margin = std::strtod(fields[7].c_str(), &end);
    if (*end != '\0') throw ParseError("bad mean_margin '" + fields[7] + "'", line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

struct ArmGroup {
  std::string name;
  std::map<int, std::vector<const ResultRow*>> by_iteration;
  int final_iteration = 0;
};

std::vector<ArmGroup> group_by_arm(const std::vector<ResultRow>& rows) {
  std::vector<ArmGroup> groups;
  std::map<std::string, std::size_t> index_of;
  for (const ResultRow& row : rows) {
    auto [it, inserted] = index_of.try_emplace(row.arm, groups.size());
    if (inserted) {
      ArmGroup g;
      g.name = row.arm;
      groups.push_back(std::move(g));
    }
    ArmGroup& g = groups[it->second];
    g.by_iteration[row.iteration].push_back(&row);
    g.final_iteration = std::max(g.final_iteration, row.iteration);
  }
  return groups;
}

}  // namespace

void write_summary(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  std::vector<ArmGroup> groups = group_by_arm(rows);
  out << "rows: " << rows.size() << ", arms: " << groups.size() << "\n";
  for (const ArmGroup& g : groups) {
    out << "arm " << g.name << "\n";
    for (const auto& [iteration, iteration_rows] : g.by_iteration) {
      std::vector<double> wr, acc, kl, margin;
      for (const ResultRow* r : iteration_rows) {
        wr.push_back(r->win_rate);
        acc.push_back(r->ranking_accuracy);
        kl.push_back(r->mean_kl);
        margin.push_back(r->mean_margin);
      }
      MeanStderr w = mean_stderr(wr);
      out << "  iteration " << iteration << ": win_rate " << fmt6(w.mean) << " +/- "
          << fmt6(w.stderr_) << ", ranking_accuracy " << fmt6(mean_stderr(acc).mean)
          << ", mean_kl " << fmt6(mean_stderr(kl).mean) << ", mean_margin "
          << fmt6(mean_stderr(margin).mean) << " (n=" << w.n << ")\n";
    }
    std::vector<double> final_wr;
    for (const ResultRow* r : g.by_iteration.at(g.final_iteration)) final_wr.push_back(r->win_rate);
    MeanStderr fw = mean_stderr(final_wr);
    out << "  final win_rate " << fmt6(fw.mean) << " +/- " << fmt6(fw.stderr_) << " over " << fw.n
        << " seeds\n";
  }
}

void cmd_run(const std::string& plan_path, const std::string& out_dir,
             const std::string& seeds_override) {
  ParsedPlan parsed = parse_plan_file(plan_path);
  for (const std::string& notice : parsed.notices) std::cerr << notice << "\n";
  if (!seeds_override.empty()) {
    parsed.plan.seeds.clear();
    for (const std::string& item : split(seeds_override, ',')) {
      std::string text{trim(item)};
      if (text.empty()) continue;
      char* end = nullptr;
      long s = std::strtol(text.c_str(), &end, 10);
      if (*end != '\0') throw ConfigError("--seeds: bad seed '" + text + "'");
      parsed.plan.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (parsed.plan.seeds.empty()) throw ConfigError("--seeds: empty seed list");
    parsed.plan.validate();
  }
  std::vector<ExperimentArm> arms = expand_arms(parsed.plan, parsed.arm_names);
  std::vector<ResultRow> rows = run_arms(arms);
  std::filesystem::create_directories(out_dir);
  write_results_csv(rows, out_dir + "/results.csv");
  write_summary(rows, out_dir + "/summary.txt");
}

void cmd_select(const std::string& dump_path, const std::string& instance_kind,
                const std::string& corpus_kind, const std::string& budget, double beta,
                bool normalized, std::uint64_t seed, const std::string& out_path) {
  std::vector<DumpRecord> records = load_dump(dump_path);
  Normalization normalization =
      normalized ? Normalization::length_normalized : Normalization::raw;
  DumpSelectionResult result =
      select_from_dump(records, parse_selection_kind(instance_kind),
                       parse_selection_kind(corpus_kind), normalization,
                       CorpusBudget::parse(budget), beta, seed);
  for (const std::string& warning : result.warnings) std::cerr << "warning: " << warning << "\n";
  write_worklist(result.rows, out_path);
}

void cmd_report(const std::string& results_path, const std::string& out_dir) {
  std::vector<ResultRow> rows = read_results_csv(results_path);
  if (rows.empty()) throw ParseError("no rows in " + results_path);
  std::vector<ArmGroup> groups = group_by_arm(rows);
  std::filesystem::create_directories(out_dir);

  for (const ArmGroup& g : groups) {
    std::string path = out_dir + "/curve_" + g.name + ".csv";
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "iteration,n,mean_win_rate,stderr_win_rate\n";
    for (const auto& [iteration, iteration_rows] : g.by_iteration) {
      std::vector<double> wr;
      for (const ResultRow* r : iteration_rows) wr.push_back(r->win_rate);
      MeanStderr w = mean_stderr(wr);
      out << iteration << ',' << w.n << ',' << format_real(w.mean) << ','
          << format_real(w.stderr_) << "\n";
    }
  }

  std::string calib_path = out_dir + "/calibration.csv";
  std::ofstream calib(calib_path);
  if (!calib) throw Error("cannot open " + calib_path + " for writing");
  calib << "arm,iteration,mean_margin,mean_ranking_accuracy,logistic_prediction\n";
  for (const ArmGroup& g : groups) {
    for (const auto& [iteration, iteration_rows] : g.by_iteration) {
      std::vector<double> margin, acc;
      for (const ResultRow* r : iteration_rows) {
        margin.push_back(r->mean_margin);
        acc.push_back(r->ranking_accuracy);
      }
      double m = mean_stderr(margin).mean;
      calib << csv_field(g.name) << ',' << iteration << ',' << format_real(m) << ','
            << format_real(mean_stderr(acc).mean) << ',' << format_real(sigmoid(m)) << "\n";
    }
  }
}

void cmd_dump(const std::string& out_path, int instructions, int pool_size, std::uint64_t seed,
              long warmup_instructions) {
  WorldConfig config;
  config.num_instructions = instructions;
  config.pool_size = pool_size;
  config.length_min = 16;
  config.length_max = 256;
  config.feature_dim = 8;
  config.seed = seed;
  World world = generate_world(config);
  auto [ref, policy] = init_policies(world, 1.0, 0.5, seed);

  SamplingConfig sampling;

  // Warm the policy up on a leading slice so that the dumped margins are
  // informative, then sample the remaining instructions for the dump.
  if (warmup_instructions >= instructions)
    throw ConfigError("dump: warmup must leave instructions to export");
  if (warmup_instructions > 0) {
    RngStream sampling_rng = RngStream::substream(seed, "sampling", 0);
    RngStream selection_rng = RngStream::substream(seed, "selection", 0);
    GoldOracle oracle(GoldOracle::Mode::deterministic, 1.0, seed, 0);
    std::vector<InstructionSample> warm_samples;
    for (int x = 0; x < static_cast<int>(warmup_instructions); ++x) {
      InstructionSample s;
      s.instruction_id = x;
      s.sampled = policy.sample_responses(x, sampling, sampling_rng);
      warm_samples.push_back(std::move(s));
    }
    Strategy inst{SelectionLevel::instance, SelectionKind::random, Normalization::raw};
    Strategy corp{SelectionLevel::corpus, SelectionKind::random, Normalization::raw};
    TrainConfig train_config;
    std::vector<MarginRecord> selected =
        select_for_iteration(world, warm_samples, inst, corp, CorpusBudget::from_fraction(0.5),
                             train_config.beta, policy, ref, selection_rng);
    std::vector<AnnotatedTrio> trios;
    for (const MarginRecord& rec : selected) {
      PreferenceLabel label = oracle.annotate(world.instruction(rec.instruction_id), rec.a, rec.b);
      trios.push_back(AnnotatedTrio{rec.instruction_id, label.winner, label.loser});
    }
    train_config.seed = RngStream::substream(seed, "training", 0).next_u64();
    train(policy, ref, trios, train_config);
  }

  RngStream sampling_rng = RngStream::substream(seed, "sampling", 1);
  std::vector<InstructionSample> samples;
  for (int x = static_cast<int>(warmup_instructions); x < instructions; ++x) {
    InstructionSample s;
    s.instruction_id = x;
    s.sampled = policy.sample_responses(x, sampling, sampling_rng);
    samples.push_back(std::move(s));
  }
  std::vector<DumpRecord> records = export_dump(world, policy, ref, samples);
  write_dump(records, out_path);
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"margin-based preference-data selection for iterative direct preference learning"};
  app.require_subcommand(1);

  std::string plan_path, out_dir, seeds_override;
  CLI::App* run = app.add_subcommand("run", "run an experiment plan");
  run->add_option("--plan", plan_path, "plan file")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--seeds", seeds_override, "comma-separated seed override");

  std::string dump_path, instance_kind = "smallest", corpus_kind = "smallest";
  std::string budget = "100%", select_out;
  double beta = 0.1;
  bool normalized = false;
  std::uint64_t select_seed = 0;
  CLI::App* select = app.add_subcommand("select", "rank an external log-probability dump");
  select->add_option("--dump", dump_path, "dump file")->required();
  select->add_option("--instance", instance_kind, "instance-level strategy")
      ->check(CLI::IsMember({"smallest", "largest", "random"}));
  select->add_option("--corpus", corpus_kind, "corpus-level strategy")
      ->check(CLI::IsMember({"smallest", "largest", "random"}));
  select->add_option("--budget", budget, "corpus budget (count or percentage)");
  select->add_option("--beta", beta, "margin scale");
  select->add_flag("--normalized", normalized, "rank by the length-normalized margin");
  select->add_option("--seed", select_seed, "seed for the random strategies");
  select->add_option("--out", select_out, "worklist output path")->required();

  std::string results_path, report_out;
  CLI::App* report = app.add_subcommand("report", "aggregate results into plot data");
  report->add_option("--results", results_path, "results.csv path")->required();
  report->add_option("--out", report_out, "output directory")->required();

  std::string dump_out;
  int dump_instructions = 200;
  int dump_pool = 8;
  std::uint64_t dump_seed = 0;
  long dump_warmup = 50;
  CLI::App* dump = app.add_subcommand("dump", "simulate a world and export its dump");
  dump->add_option("--out", dump_out, "dump output path")->required();
  dump->add_option("--instructions", dump_instructions, "world size");
  dump->add_option("--pool-size", dump_pool, "responses per instruction");
  dump->add_option("--seed", dump_seed, "root seed");
  dump->add_option("--warmup", dump_warmup, "warmup instructions before the dump");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) cmd_run(plan_path, out_dir, seeds_override);
    else if (*select) cmd_select(dump_path, instance_kind, corpus_kind, budget, beta, normalized,
                                 select_seed, select_out);
    else if (*report) cmd_report(results_path, report_out);
    else if (*dump) cmd_dump(dump_out, dump_instructions, dump_pool, dump_seed, dump_warmup);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("dposim");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace dposim
