#include "dposim/policy.hpp"

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

double logsumexp(std::span<const double> values) {
  double m = *std::max_element(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

}  // namespace

void SamplingConfig::validate() const {
  if (num_responses < 2) throw ConfigError("sampling config: num_responses must be at least 2");
  if (!(temperature > 0.0)) throw ConfigError("sampling config: temperature must be positive");
  if (top_k < 1) throw ConfigError("sampling config: top_k must be at least 1");
}

TabularPolicy TabularPolicy::uniform(const World& world, bool with_feature_head) {
  TabularPolicy p;
  p.table_.assign(static_cast<std::size_t>(world.num_instructions()), {});
  for (int x = 0; x < world.num_instructions(); ++x)
    p.table_[static_cast<std::size_t>(x)].assign(world.instruction(x).pool.size(), 0.0);
  if (with_feature_head && world.feature_dim() > 0) {
    p.feature_weights_.assign(static_cast<std::size_t>(world.feature_dim()), 0.0);
  }
  p.world_ = &world;
  return p;
}

TabularPolicy TabularPolicy::from_logits(std::vector<std::vector<double>> logits) {
  for (const auto& row : logits) {
    for (double v : row) {
      if (!std::isfinite(v)) throw ConfigError("policy logits must be finite");
    }
  }
  TabularPolicy p;
  p.table_ = std::move(logits);
  return p;
}

int TabularPolicy::pool_size(int x) const {
  if (x < 0 || x >= num_instructions()) throw LookupError("unknown instruction id " + std::to_string(x));
  return static_cast<int>(table_[static_cast<std::size_t>(x)].size());
}

void TabularPolicy::check_ids(int x, int y) const {
  if (x < 0 || x >= num_instructions()) throw LookupError("unknown instruction id " + std::to_string(x));
  if (y < 0 || y >= static_cast<int>(table_[static_cast<std::size_t>(x)].size()))
    throw LookupError("unknown response id " + std::to_string(y) + " for instruction " + std::to_string(x));
}

void TabularPolicy::check_mutable() const {
  if (frozen_) throw TrainError("frozen policy rejects parameter updates");
}

double TabularPolicy::table_logit(int x, int y) const {
  check_ids(x, y);
  return table_[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
}

double TabularPolicy::effective_logit(int x, int y) const {
  check_ids(x, y);
  double v = table_[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
  if (!feature_weights_.empty()) {
    const Response& r = world_->response(x, y);
    v += std::inner_product(feature_weights_.begin(), feature_weights_.end(), r.features.begin(), 0.0);
  }
  return v;
}

std::vector<double> TabularPolicy::effective_logits(int x) const {
  int k = pool_size(x);
  std::vector<double> out(static_cast<std::size_t>(k));
  for (int y = 0; y < k; ++y) out[static_cast<std::size_t>(y)] = effective_logit(x, y);
  return out;
}

double TabularPolicy::log_prob(int x, int y) const {
  check_ids(x, y);
  std::vector<double> logits = effective_logits(x);
  return logits[static_cast<std::size_t>(y)] - logsumexp(logits);
}

std::vector<double> TabularPolicy::log_probs(int x) const {
  std::vector<double> logits = effective_logits(x);
  double lse = logsumexp(logits);
  for (double& v : logits) v -= lse;
  return logits;
}

std::vector<double> TabularPolicy::probs(int x) const {
  std::vector<double> lp = log_probs(x);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

int TabularPolicy::greedy_response(int x) const {
  std::vector<double> logits = effective_logits(x);
  int best = 0;
  for (int y = 1; y < static_cast<int>(logits.size()); ++y) {
    if (logits[static_cast<std::size_t>(y)] > logits[static_cast<std::size_t>(best)]) best = y;
  }
  return best;
}

std::vector<int> TabularPolicy::sample_responses(int x, const SamplingConfig& config,
                                                 RngStream& rng) const {
  config.validate();
  std::vector<double> scaled = effective_logits(x);
  // Scale first, then softmax: sampling at temperature t on logits z is then
  // bitwise identical to temperature 1 on z/t.
  for (double& v : scaled) v /= config.temperature;

  const int k_total = static_cast<int>(scaled.size());
  std::vector<int> order(static_cast<std::size_t>(k_total));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int lhs, int rhs) {
    double vl = scaled[static_cast<std::size_t>(lhs)];
    double vr = scaled[static_cast<std::size_t>(rhs)];
    if (vl != vr) return vl > vr;
    return lhs < rhs;  // cutoff ties keep lower ids
  });
  const int kept = std::min(config.top_k, k_total);

  double max_kept = scaled[static_cast<std::size_t>(order[0])];
  std::vector<double> cumulative(static_cast<std::size_t>(kept));
  double acc = 0.0;
  for (int i = 0; i < kept; ++i) {
    acc += std::exp(scaled[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] - max_kept);
    cumulative[static_cast<std::size_t>(i)] = acc;
  }

  std::vector<int> draws;
  draws.reserve(static_cast<std::size_t>(config.num_responses));
  for (int n = 0; n < config.num_responses; ++n) {
    double u = rng.next_double() * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
    if (idx >= static_cast<std::size_t>(kept)) idx = static_cast<std::size_t>(kept - 1);
    draws.push_back(order[idx]);
  }
  return draws;
}

TabularPolicy TabularPolicy::snapshot() const {
  TabularPolicy copy = *this;
  copy.frozen_ = true;
  return copy;
}

void TabularPolicy::add_to_table(int x, int y, double delta) {
  check_mutable();
  check_ids(x, y);
  table_[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] += delta;
}

void TabularPolicy::add_to_feature_weights(std::span<const double> delta) {
  check_mutable();
  if (delta.size() != feature_weights_.size())
    throw StructureError("feature weight update has dimension " + std::to_string(delta.size()) +
                         ", head has " + std::to_string(feature_weights_.size()));
  for (std::size_t i = 0; i < delta.size(); ++i) feature_weights_[i] += delta[i];
}

void TabularPolicy::set_table(int x, std::vector<double> logits) {
  check_mutable();
  if (x < 0 || x >= num_instructions()) throw LookupError("unknown instruction id " + std::to_string(x));
  table_[static_cast<std::size_t>(x)] = std::move(logits);
}

void save_policy(const TabularPolicy& policy, std::ostream& out) {
  out << "#policy v1\n";
  for (int x = 0; x < policy.num_instructions(); ++x) {
    for (int y = 0; y < policy.pool_size(x); ++y) {
      out << x << '\t' << y << '\t' << format_real(policy.effective_logit(x, y)) << "\n";
    }
  }
}

void save_policy(const TabularPolicy& policy, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  save_policy(policy, out);
}

TabularPolicy load_policy(std::istream& in) {
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty policy file", 1);
  ++line_no;
  if (trim(line) != "#policy v1") throw ParseError("expected '#policy v1' header", line_no);
  std::vector<std::vector<double>> logits;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) throw ParseError("expected 3 tab-separated fields", line_no);
    char* end = nullptr;
    long x = std::strtol(fields[0].c_str(), &end, 10);
    if (*end != '\0') throw ParseError("bad instruction_id '" + fields[0] + "'", line_no);
    long y = std::strtol(fields[1].c_str(), &end, 10);
    if (*end != '\0') throw ParseError("bad response_id '" + fields[1] + "'", line_no);
    double v = std::strtod(fields[2].c_str(), &end);
    if (*end != '\0' || !std::isfinite(v)) throw ParseError("bad logit '" + fields[2] + "'", line_no);
    if (x == static_cast<long>(logits.size())) logits.emplace_back();
    else if (x != static_cast<long>(logits.size()) - 1)
      throw ParseError("instruction ids must be contiguous and grouped", line_no);
    if (y != static_cast<long>(logits.back().size()))
      throw ParseError("response ids must be 0..K-1 in order", line_no);
    logits.back().push_back(v);
  }
  return TabularPolicy::from_logits(std::move(logits));
}

TabularPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return load_policy(in);
}

}  // namespace dposim
