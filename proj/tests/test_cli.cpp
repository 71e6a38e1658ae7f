#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dposim/cli.hpp"
#include "dposim/dump.hpp"
#include "dposim/error.hpp"
#include "dposim/io.hpp"
#include "dposim/presets.hpp"

using namespace dposim;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("dposim_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long count_lines(const std::string& text) {
  long n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

const char* kTinyPlan =
    "[world]\n"
    "instructions = 160\n"
    "pool_size = 6\n"
    "reward = normal(0,1)\n"
    "length_min = 8\n"
    "length_max = 64\n"
    "feature_dim = 6\n"
    "[sampling]\n"
    "responses = 6\n"
    "[train]\n"
    "step_size = 0.3\n"
    "epochs = 2\n"
    "batch_size = 8\n"
    "[strategy]\n"
    "instance = smallest\n"
    "corpus = smallest\n"
    "[schedule]\n"
    "kind = constant\n"
    "sizes = 40, 40\n"
    "budgets = 50%\n"
    "[eval]\n"
    "quantile = 0.9\n"
    "[run]\n"
    "seeds = 1,2\n"
    "arms = always_smallest, always_random\n"
    "warmup_instructions = 30\n"
    "warmup_budget = 50%\n";

}  // namespace

TEST_CASE("plan parsing: round trip of the key fields and defaults notice") {
  std::stringstream in(kTinyPlan);
  ParsedPlan parsed = parse_plan(in);
  CHECK(parsed.plan.world.num_instructions == 160);
  CHECK(parsed.plan.world.pool_size == 6);
  CHECK(parsed.plan.sampling.num_responses == 6);
  CHECK(parsed.plan.train.epochs == 2);
  CHECK(parsed.plan.schedule.per_iteration == std::vector<long>{40, 40});
  CHECK(parsed.plan.budgets.size() == 1);
  CHECK(parsed.plan.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(parsed.arm_names == std::vector<std::string>{"always_smallest", "always_random"});
  CHECK(parsed.plan.warmup.instructions == 30);
  // beta and loss fall back silently; step_size etc. were provided
  for (const std::string& notice : parsed.notices) {
    CHECK(notice.find("step_size") == std::string::npos);
  }
}

TEST_CASE("plan parsing: unknown keys and sections are rejected with line numbers") {
  std::stringstream unknown_key("[world]\ninstructions = 10\nbogus = 1\n");
  CHECK_THROWS_WITH_AS(parse_plan(unknown_key), doctest::Contains("bogus"), ParseError);

  std::stringstream unknown_section("[galaxy]\nstars = 5\n");
  CHECK_THROWS_WITH_AS(parse_plan(unknown_section), doctest::Contains("galaxy"), ParseError);

  std::stringstream no_section("instructions = 10\n");
  CHECK_THROWS_AS(parse_plan(no_section), ParseError);

  std::stringstream dup("[world]\ninstructions = 10\ninstructions = 20\n");
  CHECK_THROWS_WITH_AS(parse_plan(dup), doctest::Contains("duplicate"), ParseError);

  std::stringstream seeds_range("[run]\nseeds = 4..7\n");
  ParsedPlan parsed = parse_plan(seeds_range);
  CHECK(parsed.plan.seeds == std::vector<std::uint64_t>{4, 5, 6, 7});
}

TEST_CASE("cmd_run: row count contract and byte-identical reruns") {
  fs::path dir = temp_dir("run");
  fs::path plan_path = dir / "tiny.plan";
  write_file(plan_path, kTinyPlan);

  fs::path out_a = dir / "out_a";
  fs::path out_b = dir / "out_b";
  CHECK(cli_main({"run", "--plan", plan_path.string(), "--out", out_a.string()}) == 0);
  CHECK(cli_main({"run", "--plan", plan_path.string(), "--out", out_b.string()}) == 0);

  std::string results = read_file(out_a / "results.csv");
  // 2 arms x 2 seeds x 2 iterations + header
  CHECK(count_lines(results) == 2 * 2 * 2 + 1);
  CHECK(results == read_file(out_b / "results.csv"));
  CHECK(read_file(out_a / "summary.txt") == read_file(out_b / "summary.txt"));

  SUBCASE("--seeds override changes the row count") {
    fs::path out_c = dir / "out_c";
    CHECK(cli_main({"run", "--plan", plan_path.string(), "--out", out_c.string(), "--seeds",
                    "7"}) == 0);
    CHECK(count_lines(read_file(out_c / "results.csv")) == 2 * 1 * 2 + 1);
  }

  SUBCASE("parse failures exit 2, missing plan exits 2") {
    fs::path bad_plan = dir / "bad.plan";
    write_file(bad_plan, "[world]\nbogus = 1\n");
    CHECK(cli_main({"run", "--plan", bad_plan.string(), "--out", (dir / "x").string()}) == 2);
    CHECK(cli_main({"run", "--plan", (dir / "none.plan").string(), "--out",
                    (dir / "y").string()}) == 2);
  }
}

TEST_CASE("cmd_report: curve files, calibration, and failure modes") {
  fs::path dir = temp_dir("report");
  fs::path plan_path = dir / "tiny.plan";
  write_file(plan_path, kTinyPlan);
  fs::path out = dir / "out";
  REQUIRE(cli_main({"run", "--plan", plan_path.string(), "--out", out.string()}) == 0);

  fs::path report = dir / "report";
  CHECK(cli_main({"report", "--results", (out / "results.csv").string(), "--out",
                  report.string()}) == 0);
  CHECK(fs::exists(report / "curve_always_smallest.csv"));
  CHECK(fs::exists(report / "curve_always_random.csv"));
  CHECK(fs::exists(report / "calibration.csv"));

  std::string curve = read_file(report / "curve_always_smallest.csv");
  CHECK(count_lines(curve) == 1 + 2);  // header + 2 iterations
  CHECK(curve.find("iteration,n,mean_win_rate,stderr_win_rate") == 0);

  SUBCASE("empty results exit 2") {
    fs::path empty_csv = dir / "empty.csv";
    write_file(empty_csv,
               "seed,arm,iteration,trained_instances,win_rate,ranking_accuracy,mean_kl,mean_margin\n");
    CHECK(cli_main({"report", "--results", empty_csv.string(), "--out",
                    (dir / "r2").string()}) == 2);
  }

  SUBCASE("schema mismatch exits 2") {
    fs::path bad_csv = dir / "bad.csv";
    write_file(bad_csv, "seed,arm,foo\n1,main,2\n");
    CHECK(cli_main({"report", "--results", bad_csv.string(), "--out", (dir / "r3").string()}) == 2);
  }
}

TEST_CASE("dump files: round trip and validation") {
  std::vector<DumpRecord> records = {
      {"7", "0", -1.25, -1.5, 12},
      {"7", "3", -0.75, -0.25, 90},
      {"9", "1", -2.0, -2.0, 45},
  };
  std::stringstream buffer;
  write_dump(records, buffer);
  std::vector<DumpRecord> back = load_dump(buffer);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].instruction_key == records[i].instruction_key);
    CHECK(back[i].response_key == records[i].response_key);
    CHECK(back[i].logp_policy == records[i].logp_policy);  // 17 digits round-trip
    CHECK(back[i].logp_ref == records[i].logp_ref);
    CHECK(back[i].length == records[i].length);
  }

  std::stringstream dup("#dump v1\na\tb\t-1.0\t-1.0\t3\na\tb\t-2.0\t-2.0\t4\n");
  CHECK_THROWS_WITH_AS(load_dump(dup), doctest::Contains("duplicate"), ParseError);

  std::stringstream short_line("#dump v1\na\tb\t-1.0\n");
  CHECK_THROWS_WITH_AS(load_dump(short_line), doctest::Contains("line 2"), ParseError);

  std::stringstream bad_len("#dump v1\na\tb\t-1.0\t-1.0\t0\n");
  CHECK_THROWS_AS(load_dump(bad_len), ParseError);
}

TEST_CASE("cmd_select: worklist contract on a crafted dump") {
  fs::path dir = temp_dir("select");
  fs::path dump_path = dir / "d.dump";
  // one instruction with 8 responses (28 pairs considered), plus a
  // single-response instruction that is skipped with a warning
  std::vector<DumpRecord> records;
  for (int y = 0; y < 8; ++y) {
    DumpRecord r;
    r.instruction_key = "42";
    r.response_key = std::to_string(y);
    r.logp_policy = -1.0 - 0.17 * y;
    r.logp_ref = -1.0 - 0.05 * y * y * (y % 2 == 0 ? 1 : -1);
    r.length = 10 + 7 * y;
    records.push_back(r);
  }
  records.push_back({"lonely", "0", -0.5, -0.5, 5});
  write_dump(records, dump_path.string());

  fs::path out = dir / "worklist.csv";
  CHECK(cli_main({"select", "--dump", dump_path.string(), "--instance", "smallest", "--corpus",
                  "smallest", "--budget", "100%", "--beta", "0.1", "--out", out.string()}) == 0);
  std::string worklist = read_file(out);
  CHECK(worklist.find("instruction_key,response_a,response_b,rho,rho_hat,provisional_winner") == 0);
  // instance-level keeps exactly one pair for the usable instruction
  CHECK(count_lines(worklist) == 2);

  SUBCASE("malformed dump line exits 2") {
    fs::path bad = dir / "bad.dump";
    write_file(bad, "#dump v1\nx\ty\tnot_a_number\t-1.0\t3\n");
    CHECK(cli_main({"select", "--dump", bad.string(), "--instance", "smallest", "--corpus",
                    "smallest", "--budget", "10", "--beta", "0.1", "--out",
                    (dir / "w2.csv").string()}) == 2);
  }

  SUBCASE("bad budget exits 2") {
    CHECK(cli_main({"select", "--dump", dump_path.string(), "--instance", "smallest", "--corpus",
                    "smallest", "--budget", "many", "--beta", "0.1", "--out",
                    (dir / "w3.csv").string()}) == 2);
  }
}

TEST_CASE("cmd_select: equal lengths make --normalized match raw ordering") {
  fs::path dir = temp_dir("normalized");
  std::vector<DumpRecord> records;
  for (int x = 0; x < 6; ++x) {
    for (int y = 0; y < 4; ++y) {
      DumpRecord r;
      r.instruction_key = std::to_string(x);
      r.response_key = std::to_string(y);
      r.logp_policy = -0.5 - 0.31 * ((x * 7 + y * 3) % 11);
      r.logp_ref = -0.5 - 0.23 * ((x * 5 + y) % 7);
      r.length = 64;  // all equal
      records.push_back(r);
    }
  }
  fs::path dump_path = dir / "eq.dump";
  write_dump(records, dump_path.string());

  fs::path raw_out = dir / "raw.csv";
  fs::path norm_out = dir / "norm.csv";
  REQUIRE(cli_main({"select", "--dump", dump_path.string(), "--instance", "smallest", "--corpus",
                    "largest", "--budget", "4", "--beta", "0.1", "--out", raw_out.string()}) == 0);
  REQUIRE(cli_main({"select", "--dump", dump_path.string(), "--instance", "smallest", "--corpus",
                    "largest", "--budget", "4", "--beta", "0.1", "--normalized", "--out",
                    norm_out.string()}) == 0);

  // same rows in the same order; only the rho_hat column differs from rho
  auto rows_of = [](const std::string& text) {
    std::vector<std::string> keys;
    std::stringstream ss(text);
    std::string line;
    std::getline(ss, line);  // header
    while (std::getline(ss, line)) {
      auto fields = split(line, ',');
      keys.push_back(fields[0] + "|" + fields[1] + "|" + fields[2] + "|" + fields[5]);
    }
    return keys;
  };
  CHECK(rows_of(read_file(raw_out)) == rows_of(read_file(norm_out)));
}

TEST_CASE("ingestion-path equivalence: dump select reproduces in-process select") {
  WorldConfig config;
  config.num_instructions = 60;
  config.pool_size = 6;
  config.feature_dim = 4;
  config.length_min = 8;
  config.length_max = 120;
  config.seed = 31;
  World world = generate_world(config);
  auto [ref, policy] = init_policies(world, 1.0, 0.4, 31);
  // move the policy off the reference so margins are nonzero
  policy.add_to_feature_weights(std::vector<double>{0.4, -0.2, 0.1, 0.3});
  for (int x = 0; x < 60; ++x) policy.add_to_table(x, x % 6, 0.2);

  SamplingConfig sampling;
  sampling.num_responses = 6;
  RngStream sample_rng = RngStream::substream(31, "sampling", 1);
  std::vector<InstructionSample> samples;
  for (int x = 0; x < 60; ++x) {
    InstructionSample s;
    s.instruction_id = x;
    s.sampled = policy.sample_responses(x, sampling, sample_rng);
    samples.push_back(std::move(s));
  }

  std::vector<DumpRecord> dump = export_dump(world, policy, ref, samples);

  for (SelectionKind inst : {SelectionKind::smallest, SelectionKind::random}) {
    for (SelectionKind corp :
         {SelectionKind::smallest, SelectionKind::largest, SelectionKind::random}) {
      CAPTURE(to_string(inst));
      CAPTURE(to_string(corp));
      DumpSelectionResult in_process =
          select_in_process(world, policy, ref, samples, inst, corp, Normalization::raw,
                            CorpusBudget::from_fraction(0.4), 0.1, 99);
      DumpSelectionResult ingested =
          select_from_dump(dump, inst, corp, Normalization::raw,
                           CorpusBudget::from_fraction(0.4), 0.1, 99);
      std::stringstream a, b;
      write_worklist(in_process.rows, a);
      write_worklist(ingested.rows, b);
      CHECK(a.str() == b.str());
      CHECK(a.str().size() > 100);
    }
  }
}

TEST_CASE("cmd_dump + cmd_select: end-to-end files") {
  fs::path dir = temp_dir("dumpcmd");
  fs::path dump_path = dir / "world.dump";
  CHECK(cli_main({"dump", "--out", dump_path.string(), "--instructions", "80", "--pool-size", "6",
                  "--seed", "5", "--warmup", "20"}) == 0);
  std::vector<DumpRecord> records = load_dump(dump_path.string());
  CHECK(records.size() > 100);

  fs::path out = dir / "w.csv";
  CHECK(cli_main({"select", "--dump", dump_path.string(), "--instance", "smallest", "--corpus",
                  "smallest", "--budget", "50%", "--beta", "0.1", "--out", out.string()}) == 0);
  CHECK(count_lines(read_file(out)) > 10);
}

TEST_CASE("csv quoting: fields with commas and quotes round-trip") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");

  std::vector<WorklistRow> rows = {{"instr,7", "a\"x", "b", 0.5, 0.25, "a\"x"}};
  std::stringstream out;
  write_worklist(rows, out);
  std::string text = out.str();
  CHECK(text.find("\"instr,7\"") != std::string::npos);
  CHECK(text.find("\"a\"\"x\"") != std::string::npos);
}
