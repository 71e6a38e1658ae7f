#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dposim/rng.hpp"

namespace dposim {

/// One abstract candidate response: no text, just the attributes the
/// simulation needs. `gold_reward` is the latent quality scalar; it is read
/// only by the oracle, by metrics, and by policy initialization, never by
/// margin or selection code. `features` is the observable covariate vector
/// that partially explains the gold reward and gives policies a way to
/// generalize across instructions.
struct Response {
  int id = 0;
  int length = 1;  // tokens
  double gold_reward = 0.0;
  std::vector<double> features;
};

struct Instruction {
  int id = 0;
  std::vector<Response> pool;  // ids 0..K-1
};

struct WorldConfig {
  enum class RewardDist { normal, uniform };

  int num_instructions = 0;
  int pool_size = 2;  // K
  RewardDist reward_dist = RewardDist::normal;
  double reward_mean = 0.0;  // normal
  double reward_sd = 1.0;
  double reward_lo = 0.0;  // uniform
  double reward_hi = 1.0;
  int length_min = 1;
  int length_max = 1;
  // Correlation between a response's length and its gold reward, in [-1, 1].
  // 0 keeps them independent; nonzero lets experiments model length bias.
  double length_reward_corr = 0.0;
  // Observable feature dimension; 0 leaves responses featureless and the
  // world purely tabular.
  int feature_dim = 0;
  // Standard deviation of the part of the gold reward the features do not
  // explain (relative to the unit-variance feature component).
  double feature_noise_sd = 0.5;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

class World {
 public:
  World() = default;
  World(std::vector<Instruction> instructions, std::vector<double> reward_direction);

  int num_instructions() const { return static_cast<int>(instructions_.size()); }
  int pool_size() const;
  int feature_dim() const;
  const std::vector<Instruction>& instructions() const { return instructions_; }
  const Instruction& instruction(int id) const;  // LookupError
  const Response& response(int instruction_id, int response_id) const;

  /// Hidden direction that maps features to reward; exposed for tests and
  /// diagnostics only.
  const std::vector<double>& reward_direction() const { return reward_direction_; }

 private:
  std::vector<Instruction> instructions_;
  std::vector<double> reward_direction_;
};

/// Deterministic function of the config (seed included): same config, same
/// world, bit for bit.
World generate_world(const WorldConfig& config);

struct PreferenceLabel {
  int winner = 0;
  int loser = 0;
};

/// Stand-in for the human/gold-RM annotator. Deterministic mode is a fixed
/// argmax of the latent rewards; bradley_terry adds seeded comparison noise
/// with P(a wins) = sigmoid(bt_scale * (r_a - r_b)). Counts every annotation
/// so budget accounting can be asserted exactly.
class GoldOracle {
 public:
  enum class Mode { deterministic, bradley_terry };

  explicit GoldOracle(Mode mode = Mode::deterministic, double bt_scale = 1.0,
                      std::uint64_t rng_seed = 0, std::uint64_t stream_id = 0);

  PreferenceLabel annotate(const Instruction& x, int a, int b);

  /// Independent oracle for a concurrent task; distinct stream ids give
  /// non-overlapping noise streams.
  GoldOracle fork(std::uint64_t stream_id) const;

  Mode mode() const { return mode_; }
  std::uint64_t annotation_count() const { return annotations_; }
  void reset_annotation_count() { annotations_ = 0; }

 private:
  Mode mode_;
  double bt_scale_;
  std::uint64_t rng_seed_;
  RngStream rng_;
  std::uint64_t annotations_ = 0;
};

/// Pool response at the given gold-reward quantile (nearest rank:
/// rank = ceil(q * K) of the ascending order statistics; reward ties resolve
/// to the lowest id). quantile must lie in (0, 1]; 1 returns the argmax.
int reference_response(const Instruction& x, double quantile);

void save_world(const World& world, std::ostream& out);
void save_world(const World& world, const std::string& path);
World load_world(std::istream& in);
World load_world(const std::string& path);

}  // namespace dposim
