#include "dposim/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dposim/error.hpp"
#include "dposim/io.hpp"

namespace dposim {

namespace {

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void WorldConfig::validate() const {
  if (num_instructions <= 0) throw ConfigError("world config: num_instructions must be positive");
  if (pool_size < 2) throw ConfigError("world config: pool_size must be at least 2");
  if (reward_dist == RewardDist::normal) {
    if (!(reward_sd > 0.0)) throw ConfigError("world config: reward_sd must be positive");
  } else {
    if (!(reward_lo < reward_hi)) throw ConfigError("world config: reward_lo must be below reward_hi");
  }
  if (length_min < 1) throw ConfigError("world config: length_min must be at least 1");
  if (length_max < length_min) throw ConfigError("world config: length_max must be >= length_min");
  if (length_reward_corr < -1.0 || length_reward_corr > 1.0)
    throw ConfigError("world config: length_reward_corr must lie in [-1, 1]");
  if (feature_dim < 0) throw ConfigError("world config: feature_dim must be nonnegative");
  if (feature_noise_sd < 0.0) throw ConfigError("world config: feature_noise_sd must be nonnegative");
}

World::World(std::vector<Instruction> instructions, std::vector<double> reward_direction)
    : instructions_(std::move(instructions)), reward_direction_(std::move(reward_direction)) {}

int World::pool_size() const {
  return instructions_.empty() ? 0 : static_cast<int>(instructions_.front().pool.size());
}

int World::feature_dim() const { return static_cast<int>(reward_direction_.size()); }

const Instruction& World::instruction(int id) const {
  if (id < 0 || id >= num_instructions())
    throw LookupError("unknown instruction id " + std::to_string(id));
  return instructions_[static_cast<std::size_t>(id)];
}

const Response& World::response(int instruction_id, int response_id) const {
  const Instruction& x = instruction(instruction_id);
  if (response_id < 0 || response_id >= static_cast<int>(x.pool.size()))
    throw LookupError("unknown response id " + std::to_string(response_id) +
                      " for instruction " + std::to_string(instruction_id));
  return x.pool[static_cast<std::size_t>(response_id)];
}

World generate_world(const WorldConfig& config) {
  config.validate();
  RngStream rng = RngStream::substream(config.seed, "world");

  // Hidden unit direction mapping features to reward.
  std::vector<double> direction(static_cast<std::size_t>(config.feature_dim), 0.0);
  if (config.feature_dim > 0) {
    double norm = 0.0;
    while (norm < 1e-12) {
      for (double& d : direction) d = rng.next_normal();
      norm = std::sqrt(std::inner_product(direction.begin(), direction.end(), direction.begin(), 0.0));
    }
    for (double& d : direction) d /= norm;
  }

  // With features, the standardized reward latent is (u.phi + eps)/sqrt(1+sd^2),
  // which is exactly standard normal, so the configured marginal distribution
  // is preserved while the features explain part of the reward.
  const double noise_var = config.feature_noise_sd * config.feature_noise_sd;
  const double latent_scale = std::sqrt(1.0 + noise_var);
  const double corr = config.length_reward_corr;
  const double corr_resid = std::sqrt(std::max(0.0, 1.0 - corr * corr));

  std::vector<Instruction> instructions;
  instructions.reserve(static_cast<std::size_t>(config.num_instructions));
  for (int xi = 0; xi < config.num_instructions; ++xi) {
    Instruction instr;
    instr.id = xi;
    instr.pool.reserve(static_cast<std::size_t>(config.pool_size));
    for (int yi = 0; yi < config.pool_size; ++yi) {
      Response r;
      r.id = yi;
      double z_reward;
      if (config.feature_dim > 0) {
        r.features.resize(static_cast<std::size_t>(config.feature_dim));
        for (double& f : r.features) f = rng.next_normal();
        double signal = std::inner_product(direction.begin(), direction.end(), r.features.begin(), 0.0);
        z_reward = (signal + rng.next_normal(0.0, config.feature_noise_sd)) / latent_scale;
      } else {
        z_reward = rng.next_normal();
      }
      if (config.reward_dist == WorldConfig::RewardDist::normal) {
        r.gold_reward = config.reward_mean + config.reward_sd * z_reward;
      } else {
        r.gold_reward = config.reward_lo +
                        (config.reward_hi - config.reward_lo) * standard_normal_cdf(z_reward);
      }
      double z_len = corr * z_reward + corr_resid * rng.next_normal();
      int span = config.length_max - config.length_min + 1;
      int len = config.length_min +
                static_cast<int>(std::floor(standard_normal_cdf(z_len) * span));
      r.length = std::clamp(len, config.length_min, config.length_max);
      instr.pool.push_back(std::move(r));
    }
    instructions.push_back(std::move(instr));
  }
  return World(std::move(instructions), std::move(direction));
}

GoldOracle::GoldOracle(Mode mode, double bt_scale, std::uint64_t rng_seed, std::uint64_t stream_id)
    : mode_(mode),
      bt_scale_(bt_scale),
      rng_seed_(rng_seed),
      rng_(RngStream::substream(rng_seed, "oracle", stream_id)) {
  if (mode == Mode::bradley_terry && !(bt_scale > 0.0))
    throw ConfigError("oracle: bt_scale must be positive");
}

PreferenceLabel GoldOracle::annotate(const Instruction& x, int a, int b) {
  if (a == b) throw PairError("annotate: identical pair (" + std::to_string(a) + ", " + std::to_string(b) + ")");
  auto check = [&](int id) {
    if (id < 0 || id >= static_cast<int>(x.pool.size()))
      throw LookupError("annotate: unknown response id " + std::to_string(id));
  };
  check(a);
  check(b);
  ++annotations_;
  double ra = x.pool[static_cast<std::size_t>(a)].gold_reward;
  double rb = x.pool[static_cast<std::size_t>(b)].gold_reward;
  if (mode_ == Mode::deterministic) {
    // argmax of gold reward; ties break toward the lower id
    if (ra > rb) return {a, b};
    if (rb > ra) return {b, a};
    return a < b ? PreferenceLabel{a, b} : PreferenceLabel{b, a};
  }
  double p_a = sigmoid(bt_scale_ * (ra - rb));
  if (rng_.next_double() < p_a) return {a, b};
  return {b, a};
}

GoldOracle GoldOracle::fork(std::uint64_t stream_id) const {
  return GoldOracle(mode_, bt_scale_, rng_seed_, stream_id);
}

int reference_response(const Instruction& x, double quantile) {
  if (!(quantile > 0.0) || quantile > 1.0)
    throw ConfigError("reference_response: quantile must lie in (0, 1]");
  const int k = static_cast<int>(x.pool.size());
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int lhs, int rhs) {
    double rl = x.pool[static_cast<std::size_t>(lhs)].gold_reward;
    double rr = x.pool[static_cast<std::size_t>(rhs)].gold_reward;
    if (rl != rr) return rl < rr;
    return lhs < rhs;
  });
  int rank = static_cast<int>(std::ceil(quantile * k));
  rank = std::clamp(rank, 1, k);
  double value = x.pool[static_cast<std::size_t>(order[static_cast<std::size_t>(rank - 1)])].gold_reward;
  // lowest id attaining the rank value
  for (int id = 0; id < k; ++id) {
    if (x.pool[static_cast<std::size_t>(id)].gold_reward == value) return id;
  }
  return order[static_cast<std::size_t>(rank - 1)];
}

void save_world(const World& world, std::ostream& out) {
  out << "#world v1 K=" << world.pool_size();
  if (world.feature_dim() > 0) out << " D=" << world.feature_dim();
  out << "\n";
  if (world.feature_dim() > 0) {
    out << "#direction";
    for (double d : world.reward_direction()) out << '\t' << format_real(d);
    out << "\n";
  }
  for (const Instruction& x : world.instructions()) {
    for (const Response& r : x.pool) {
      out << x.id << '\t' << r.id << '\t' << r.length << '\t' << format_real(r.gold_reward);
      for (double f : r.features) out << '\t' << format_real(f);
      out << "\n";
    }
  }
}

void save_world(const World& world, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  save_world(world, out);
}

World load_world(std::istream& in) {
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty world file", 1);
  ++line_no;
  int pool_size = -1;
  int feature_dim = 0;
  {
    std::istringstream header(line);
    std::string tag;
    header >> tag;
    std::string version;
    header >> version;
    if (tag != "#world" || version != "v1") throw ParseError("expected '#world v1' header", line_no);
    std::string kv;
    while (header >> kv) {
      if (kv.rfind("K=", 0) == 0) pool_size = std::atoi(kv.c_str() + 2);
      else if (kv.rfind("D=", 0) == 0) feature_dim = std::atoi(kv.c_str() + 2);
      else throw ParseError("unknown header field '" + kv + "'", line_no);
    }
    if (pool_size < 2) throw ParseError("header must carry K=<pool size> with K >= 2", line_no);
  }

  std::vector<double> direction;
  std::vector<Instruction> instructions;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields[0] == "#direction") {
      if (static_cast<int>(fields.size()) != feature_dim + 1)
        throw ParseError("#direction row needs " + std::to_string(feature_dim) + " values", line_no);
      direction.clear();
      for (std::size_t i = 1; i < fields.size(); ++i) direction.push_back(std::strtod(fields[i].c_str(), nullptr));
      continue;
    }
    if (static_cast<int>(fields.size()) != 4 + feature_dim)
      throw ParseError("expected " + std::to_string(4 + feature_dim) + " tab-separated fields", line_no);
    char* end = nullptr;
    long xi = std::strtol(fields[0].c_str(), &end, 10);
    if (*end != '\0') throw ParseError("bad instruction_id '" + fields[0] + "'", line_no);
    long yi = std::strtol(fields[1].c_str(), &end, 10);
    if (*end != '\0') throw ParseError("bad response_id '" + fields[1] + "'", line_no);
    long len = std::strtol(fields[2].c_str(), &end, 10);
    if (*end != '\0' || len < 1) throw ParseError("bad length '" + fields[2] + "'", line_no);
    Response r;
    r.id = static_cast<int>(yi);
    r.length = static_cast<int>(len);
    r.gold_reward = std::strtod(fields[3].c_str(), nullptr);
    for (int d = 0; d < feature_dim; ++d)
      r.features.push_back(std::strtod(fields[4 + static_cast<std::size_t>(d)].c_str(), nullptr));
    if (xi == static_cast<long>(instructions.size())) {
      Instruction instr;
      instr.id = static_cast<int>(xi);
      instructions.push_back(std::move(instr));
    } else if (xi != static_cast<long>(instructions.size()) - 1) {
      throw ParseError("instruction ids must be contiguous and grouped", line_no);
    }
    if (r.id != static_cast<int>(instructions.back().pool.size()))
      throw ParseError("response ids must be 0..K-1 in order", line_no);
    instructions.back().pool.push_back(std::move(r));
  }
  for (const Instruction& x : instructions) {
    if (static_cast<int>(x.pool.size()) != pool_size)
      throw ParseError("instruction " + std::to_string(x.id) + " has " +
                       std::to_string(x.pool.size()) + " responses, expected K=" +
                       std::to_string(pool_size));
  }
  if (feature_dim > 0 && direction.empty())
    direction.assign(static_cast<std::size_t>(feature_dim), 0.0);
  return World(std::move(instructions), std::move(direction));
}

World load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return load_world(in);
}

}  // namespace dposim
