#include "dposim/plan.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dposim/error.hpp"
#include "dposim/io.hpp"

namespace dposim {

namespace {

struct PlanEntry {
  std::string value;
  long line = 0;
  bool consumed = false;
};

using Section = std::map<std::string, PlanEntry>;

const std::set<std::string> kSections = {"world",    "sampling", "train", "strategy",
                                         "schedule", "eval",     "run"};

long parse_long(const std::string& key, const PlanEntry& e) {
  char* end = nullptr;
  long v = std::strtol(e.value.c_str(), &end, 10);
  if (*end != '\0') throw ParseError("key '" + key + "': bad integer '" + e.value + "'", e.line);
  return v;
}

double parse_double(const std::string& key, const PlanEntry& e) {
  char* end = nullptr;
  double v = std::strtod(e.value.c_str(), &end);
  if (*end != '\0') throw ParseError("key '" + key + "': bad number '" + e.value + "'", e.line);
  return v;
}

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  for (const std::string& part : split(text, ',')) {
    std::string item{trim(part)};
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "1..20" or "3,5,9"
std::vector<std::uint64_t> parse_seeds(const std::string& key, const PlanEntry& e) {
  std::vector<std::uint64_t> seeds;
  std::string text{trim(e.value)};
  auto range_pos = text.find("..");
  if (range_pos != std::string::npos && text.find(',') == std::string::npos) {
    char* end = nullptr;
    long lo = std::strtol(text.c_str(), &end, 10);
    if (end != text.c_str() + range_pos) throw ParseError("key '" + key + "': bad range '" + text + "'", e.line);
    long hi = std::strtol(text.c_str() + range_pos + 2, &end, 10);
    if (*end != '\0' || hi < lo) throw ParseError("key '" + key + "': bad range '" + text + "'", e.line);
    for (long s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    return seeds;
  }
  for (const std::string& item : parse_list(text)) {
    char* end = nullptr;
    long s = std::strtol(item.c_str(), &end, 10);
    if (*end != '\0') throw ParseError("key '" + key + "': bad seed '" + item + "'", e.line);
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  return seeds;
}

class PlanReader {
 public:
  explicit PlanReader(std::map<std::string, Section> sections) : sections_(std::move(sections)) {}

  bool has(const std::string& section, const std::string& key) {
    auto sit = sections_.find(section);
    if (sit == sections_.end()) return false;
    return sit->second.find(key) != sit->second.end();
  }

  const PlanEntry* get(const std::string& section, const std::string& key) {
    auto sit = sections_.find(section);
    if (sit == sections_.end()) return nullptr;
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return nullptr;
    kit->second.consumed = true;
    return &kit->second;
  }

  void note_default(std::vector<std::string>& notices, const std::string& section,
                    const std::string& key, const std::string& value) {
    notices.push_back("notice: [" + section + "] " + key + " defaulted to " + value);
  }

  void reject_unconsumed() const {
    for (const auto& [section, entries] : sections_) {
      for (const auto& [key, entry] : entries) {
        if (!entry.consumed)
          throw ParseError("unknown key '" + key + "' in section [" + section + "]", entry.line);
      }
    }
  }

 private:
  std::map<std::string, Section> sections_;
};

}  // namespace

ParsedPlan parse_plan(std::istream& in) {
  std::map<std::string, Section> sections;
  std::string current;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ParseError("unterminated section header", line_no);
      current = std::string(trim(text.substr(1, text.size() - 2)));
      if (kSections.find(current) == kSections.end())
        throw ParseError("unknown section [" + current + "]", line_no);
      sections[current];
      continue;
    }
    auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    if (current.empty()) throw ParseError("key outside any section", line_no);
    std::string key{trim(text.substr(0, eq))};
    std::string value{trim(text.substr(eq + 1))};
    if (key.empty()) throw ParseError("empty key", line_no);
    if (sections[current].count(key)) throw ParseError("duplicate key '" + key + "'", line_no);
    sections[current][key] = PlanEntry{value, line_no, false};
  }

  PlanReader reader(std::move(sections));
  ParsedPlan out;
  ExperimentPlan& plan = out.plan;
  auto& notices = out.notices;

  // [world]
  if (const PlanEntry* e = reader.get("world", "instructions")) plan.world.num_instructions = static_cast<int>(parse_long("instructions", *e));
  else reader.note_default(notices, "world", "instructions", "2000"), plan.world.num_instructions = 2000;
  if (const PlanEntry* e = reader.get("world", "pool_size")) plan.world.pool_size = static_cast<int>(parse_long("pool_size", *e));
  else reader.note_default(notices, "world", "pool_size", "8"), plan.world.pool_size = 8;
  if (const PlanEntry* e = reader.get("world", "reward")) {
    std::string text{trim(e->value)};
    double p1 = 0.0, p2 = 0.0;
    char kind[16] = {0};
    if (std::sscanf(text.c_str(), "%15[a-z](%lf,%lf)", kind, &p1, &p2) == 3 ||
        std::sscanf(text.c_str(), "%15[a-z]( %lf , %lf )", kind, &p1, &p2) == 3) {
      std::string k = kind;
      if (k == "normal") {
        plan.world.reward_dist = WorldConfig::RewardDist::normal;
        plan.world.reward_mean = p1;
        plan.world.reward_sd = p2;
      } else if (k == "uniform") {
        plan.world.reward_dist = WorldConfig::RewardDist::uniform;
        plan.world.reward_lo = p1;
        plan.world.reward_hi = p2;
      } else {
        throw ParseError("key 'reward': unknown distribution '" + k + "'", e->line);
      }
    } else {
      throw ParseError("key 'reward': expected normal(mean,sd) or uniform(lo,hi)", e->line);
    }
  } else {
    reader.note_default(notices, "world", "reward", "normal(0,1)");
  }
  if (const PlanEntry* e = reader.get("world", "length_min")) plan.world.length_min = static_cast<int>(parse_long("length_min", *e));
  else reader.note_default(notices, "world", "length_min", "16"), plan.world.length_min = 16;
  if (const PlanEntry* e = reader.get("world", "length_max")) plan.world.length_max = static_cast<int>(parse_long("length_max", *e));
  else reader.note_default(notices, "world", "length_max", "256"), plan.world.length_max = 256;
  if (const PlanEntry* e = reader.get("world", "length_reward_corr")) plan.world.length_reward_corr = parse_double("length_reward_corr", *e);
  else plan.world.length_reward_corr = 0.0;
  if (const PlanEntry* e = reader.get("world", "feature_dim")) plan.world.feature_dim = static_cast<int>(parse_long("feature_dim", *e));
  else reader.note_default(notices, "world", "feature_dim", "8"), plan.world.feature_dim = 8;
  if (const PlanEntry* e = reader.get("world", "feature_noise_sd")) plan.world.feature_noise_sd = parse_double("feature_noise_sd", *e);
  else plan.world.feature_noise_sd = 0.5;

  // [sampling]
  if (const PlanEntry* e = reader.get("sampling", "responses")) plan.sampling.num_responses = static_cast<int>(parse_long("responses", *e));
  else reader.note_default(notices, "sampling", "responses", "8"), plan.sampling.num_responses = 8;
  if (const PlanEntry* e = reader.get("sampling", "temperature")) plan.sampling.temperature = parse_double("temperature", *e);
  else plan.sampling.temperature = 1.0;
  if (const PlanEntry* e = reader.get("sampling", "top_k")) plan.sampling.top_k = static_cast<int>(parse_long("top_k", *e));
  else plan.sampling.top_k = 50;

  // [train]
  if (const PlanEntry* e = reader.get("train", "beta")) plan.train.beta = parse_double("beta", *e);
  else plan.train.beta = 0.1;
  if (const PlanEntry* e = reader.get("train", "loss")) plan.train.loss = parse_loss_kind(std::string(trim(e->value)));
  else plan.train.loss = LossKind::dpo;
  if (const PlanEntry* e = reader.get("train", "step_size")) plan.train.step_size = parse_double("step_size", *e);
  else reader.note_default(notices, "train", "step_size", "0.05"), plan.train.step_size = 0.05;
  if (const PlanEntry* e = reader.get("train", "epochs")) plan.train.epochs = static_cast<int>(parse_long("epochs", *e));
  else reader.note_default(notices, "train", "epochs", "3"), plan.train.epochs = 3;
  if (const PlanEntry* e = reader.get("train", "batch_size")) plan.train.batch_size = static_cast<int>(parse_long("batch_size", *e));
  else reader.note_default(notices, "train", "batch_size", "32"), plan.train.batch_size = 32;

  // [strategy]
  plan.instance_strategy.level = SelectionLevel::instance;
  plan.corpus_strategy.level = SelectionLevel::corpus;
  if (const PlanEntry* e = reader.get("strategy", "instance")) plan.instance_strategy.kind = parse_selection_kind(std::string(trim(e->value)));
  else reader.note_default(notices, "strategy", "instance", "random"), plan.instance_strategy.kind = SelectionKind::random;
  if (const PlanEntry* e = reader.get("strategy", "corpus")) plan.corpus_strategy.kind = parse_selection_kind(std::string(trim(e->value)));
  else reader.note_default(notices, "strategy", "corpus", "random"), plan.corpus_strategy.kind = SelectionKind::random;
  if (const PlanEntry* e = reader.get("strategy", "normalization")) {
    Normalization n = parse_normalization(std::string(trim(e->value)));
    plan.instance_strategy.normalization = n;
    plan.corpus_strategy.normalization = n;
  }

  // [schedule]
  BudgetSchedule::Kind schedule_kind = BudgetSchedule::Kind::constant;
  if (const PlanEntry* e = reader.get("schedule", "kind")) schedule_kind = parse_schedule_kind(std::string(trim(e->value)));
  else reader.note_default(notices, "schedule", "kind", "constant");
  std::vector<long> sizes;
  if (const PlanEntry* e = reader.get("schedule", "sizes")) {
    for (const std::string& item : parse_list(e->value)) {
      char* end = nullptr;
      long v = std::strtol(item.c_str(), &end, 10);
      if (*end != '\0') throw ParseError("key 'sizes': bad size '" + item + "'", e->line);
      sizes.push_back(v);
    }
  } else {
    reader.note_default(notices, "schedule", "sizes", "500,500,500");
    sizes = {500, 500, 500};
  }
  plan.schedule = make_schedule(schedule_kind, std::move(sizes));
  if (const PlanEntry* e = reader.get("schedule", "budgets")) {
    for (const std::string& item : parse_list(e->value)) plan.budgets.push_back(CorpusBudget::parse(item));
    if (plan.budgets.empty()) throw ParseError("key 'budgets': empty list", e->line);
  } else {
    reader.note_default(notices, "schedule", "budgets", "50%");
    plan.budgets = {CorpusBudget::from_fraction(0.5)};
  }

  // [eval]
  if (const PlanEntry* e = reader.get("eval", "quantile")) plan.eval_quantile = parse_double("quantile", *e);
  else plan.eval_quantile = 0.9;

  // [run]
  if (const PlanEntry* e = reader.get("run", "seeds")) plan.seeds = parse_seeds("seeds", *e);
  else reader.note_default(notices, "run", "seeds", "1..5"), plan.seeds = {1, 2, 3, 4, 5};
  if (const PlanEntry* e = reader.get("run", "arms")) out.arm_names = parse_list(e->value);
  if (const PlanEntry* e = reader.get("run", "warmup_instructions")) plan.warmup.instructions = parse_long("warmup_instructions", *e);
  else reader.note_default(notices, "run", "warmup_instructions", "400"), plan.warmup.instructions = 400;
  if (const PlanEntry* e = reader.get("run", "warmup_budget")) plan.warmup.budget = CorpusBudget::parse(std::string(trim(e->value)));
  else plan.warmup.budget = CorpusBudget::from_fraction(0.5);
  if (const PlanEntry* e = reader.get("run", "init_signal")) plan.init_signal_coefficient = parse_double("init_signal", *e);
  else plan.init_signal_coefficient = 1.0;
  if (const PlanEntry* e = reader.get("run", "init_noise")) plan.init_noise_sd = parse_double("init_noise", *e);
  else plan.init_noise_sd = 0.5;
  if (const PlanEntry* e = reader.get("run", "oracle")) {
    std::string text{trim(e->value)};
    if (text == "deterministic") {
      plan.oracle_mode = GoldOracle::Mode::deterministic;
    } else {
      double scale = 0.0;
      if (std::sscanf(text.c_str(), "bradley_terry(%lf)", &scale) == 1) {
        plan.oracle_mode = GoldOracle::Mode::bradley_terry;
        plan.oracle_bt_scale = scale;
      } else {
        throw ParseError("key 'oracle': expected deterministic or bradley_terry(scale)", e->line);
      }
    }
  }

  reader.reject_unconsumed();
  plan.validate();
  return out;
}

ParsedPlan parse_plan_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan file " + path);
  return parse_plan(in);
}

namespace {

ExperimentPlan with_kinds(ExperimentPlan plan, SelectionKind instance, SelectionKind corpus) {
  plan.instance_strategy.kind = instance;
  plan.corpus_strategy.kind = corpus;
  return plan;
}

ExperimentPlan reshape_schedule(ExperimentPlan plan, BudgetSchedule::Kind kind) {
  std::vector<long> sizes = plan.schedule.per_iteration;
  switch (kind) {
    case BudgetSchedule::Kind::increase:
      std::sort(sizes.begin(), sizes.end());
      break;
    case BudgetSchedule::Kind::decrease:
      std::sort(sizes.begin(), sizes.end(), std::greater<>());
      break;
    case BudgetSchedule::Kind::constant: {
      long total = 0;
      for (long s : sizes) total += s;
      long n = static_cast<long>(sizes.size());
      if (total % n != 0)
        throw ConfigError("allocation arm 'constant': schedule total " + std::to_string(total) +
                          " is not divisible by " + std::to_string(n) + " iterations");
      sizes.assign(static_cast<std::size_t>(n), total / n);
      break;
    }
  }
  if (plan.budgets.size() != 1)
    throw ConfigError("allocation arms require a single corpus budget entry");
  plan.schedule = make_schedule(kind, std::move(sizes));
  return plan;
}

}  // namespace

std::vector<ExperimentArm> expand_arms(const ExperimentPlan& base,
                                       const std::vector<std::string>& arm_names) {
  std::vector<std::string> names = arm_names;
  if (names.empty()) names.push_back("main");
  std::vector<ExperimentArm> arms;
  for (const std::string& name : names) {
    if (name == "main") {
      arms.push_back({name, base});
    } else if (name == "always_smallest") {
      arms.push_back({name, with_kinds(base, SelectionKind::smallest, SelectionKind::smallest)});
    } else if (name == "always_random") {
      arms.push_back({name, with_kinds(base, SelectionKind::random, SelectionKind::random)});
    } else if (name == "always_largest") {
      arms.push_back({name, with_kinds(base, SelectionKind::largest, SelectionKind::largest)});
    } else if (name == "single_iter") {
      ExperimentPlan plan = with_kinds(base, SelectionKind::smallest, SelectionKind::smallest);
      if (plan.budgets.size() != 1)
        throw ConfigError("arm 'single_iter' requires a single corpus budget entry");
      plan.schedule = make_schedule(BudgetSchedule::Kind::constant, {base.schedule.total()});
      arms.push_back({name, std::move(plan)});
    } else if (name == "increase" || name == "constant" || name == "decrease") {
      ExperimentPlan plan = with_kinds(base, SelectionKind::smallest, SelectionKind::smallest);
      arms.push_back({name, reshape_schedule(std::move(plan), parse_schedule_kind(name))});
    } else if (name == "grid9") {
      const SelectionKind kinds[] = {SelectionKind::smallest, SelectionKind::random,
                                     SelectionKind::largest};
      for (SelectionKind inst : kinds) {
        for (SelectionKind corp : kinds) {
          arms.push_back({to_string(inst) + "_" + to_string(corp), with_kinds(base, inst, corp)});
        }
      }
    } else {
      throw ConfigError("unknown arm '" + name + "'");
    }
  }
  return arms;
}

}  // namespace dposim
