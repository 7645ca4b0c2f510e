#pragma once

// Regret against the clairvoyant price schedule, capacity violations,
// posterior error and cross-run aggregation.

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecpricing/bilevel/bips.hpp"
#include "ecpricing/learner.hpp"

namespace ecpricing::metrics {

/// Net community load per period from per-prosumer responses [n][t].
inline std::vector<double> net_load(const std::vector<std::vector<double>>& responses) {
  std::vector<double> net(responses.empty() ? 0 : responses[0].size(), 0.0);
  for (const auto& y : responses) {
    if (y.size() != net.size()) throw InvalidArgument("net_load: ragged responses");
    for (std::size_t t = 0; t < net.size(); ++t) net[t] += y[t];
  }
  return net;
}

/// Community cost when the noise-free responses are realized at the posted
/// prices. Imports, exports and excess follow from the net load.
inline double realized_cost(const bilevel::CommunityEconomics& econ,
                            const std::vector<std::vector<double>>& expected_responses) {
  const auto net = net_load(expected_responses);
  if (net.size() != econ.horizon()) throw InvalidArgument("realized_cost: response length does not match economics");
  return econ.cost_of_net_load(net);
}

/// Excess import over the capacity limit per period.
inline std::vector<double> violation_series(const std::vector<std::vector<double>>& responses,
                                            std::span<const double> capacity_limit) {
  auto v = net_load(responses);
  if (v.size() != capacity_limit.size()) throw InvalidArgument("violation_series: length mismatch");
  for (std::size_t t = 0; t < v.size(); ++t)
    v[t] = std::isfinite(capacity_limit[t]) ? std::max(v[t] - capacity_limit[t], 0.0) : 0.0;
  return v;
}

struct RegretRecord {
  int day = 0;
  double sampled_cost = 0.0;
  double clairvoyant_cost = 0.0;
  double regret = 0.0;
  double cumulative = 0.0;
};

class RegretTracker {
 public:
  explicit RegretTracker(double tolerance = 1e-4) : tolerance_(tolerance) {}

  const RegretRecord& add(int day, double sampled, double clairvoyant) {
    RegretRecord r{day, sampled, clairvoyant, sampled - clairvoyant, 0.0};
    r.cumulative = (records_.empty() ? 0.0 : records_.back().cumulative) + r.regret;
    min_regret_ = std::min(min_regret_, r.regret);
    records_.push_back(r);
    return records_.back();
  }

  const std::vector<RegretRecord>& records() const noexcept { return records_; }
  double min_regret() const noexcept { return min_regret_; }
  bool within_tolerance() const noexcept { return min_regret_ >= -tolerance_; }

 private:
  double tolerance_;
  double min_regret_ = INFINITY;
  std::vector<RegretRecord> records_;
};

struct PosteriorError {
  std::vector<double> abs_error;  // per signature
  double covariance_trace = 0.0;
};

inline PosteriorError posterior_error(const WeightBelief& belief, std::span<const double> truth) {
  if (truth.size() != belief.size()) throw InvalidArgument("posterior_error: dimension mismatch");
  PosteriorError e;
  for (std::size_t k = 0; k < truth.size(); ++k)
    e.abs_error.push_back(std::abs(belief.mean(static_cast<Eigen::Index>(k)) - truth[k]));
  e.covariance_trace = belief.covariance.trace();
  return e;
}

/// Clairvoyant schedule for one day: the price-setting problem solved with
/// the true weights. Results are cached by (day, community key).
struct ClairvoyantResult {
  double cost = 0.0;
  std::vector<double> violation;  // per period, from the optimal dispatch
  std::vector<std::vector<double>> prices;
  double payment_gap = 0.0;
  bilevel::BigMAuditResult audit;
};

inline ClairvoyantResult clairvoyant(const bilevel::BipsInstance& truth_instance,
                                     const bilevel::BipsSolveOptions& opts = {},
                                     const milp::Backend& backend = milp::default_backend()) {
  const auto s = bilevel::solve_bips(truth_instance, opts, backend);
  return {s.community_cost, violation_series(s.expected_response, truth_instance.econ.capacity_limit), s.prices,
          bilevel::max_payment_gap(s), s.bigm_audit};
}

class ClairvoyantCache {
 public:
  template <class Compute>
  ClairvoyantResult get(int day, const std::string& community_key, Compute&& compute) {
    const auto key = std::make_pair(day, community_key);
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    ClairvoyantResult r = compute();
    std::lock_guard lock(mutex_);
    return cache_.emplace(key, std::move(r)).first->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<int, std::string>, ClairvoyantResult> cache_;
};

/// Linear-interpolation quantile of an unsorted sample.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidArgument("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double h = q * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

struct Band {
  std::vector<double> mean, q05, q95;
};

/// Pointwise mean and 5%/95% quantiles over equally long series.
inline Band aggregate(const std::vector<std::vector<double>>& series) {
  if (series.empty()) return {};
  const std::size_t L = series[0].size();
  Band b;
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> col;
    for (const auto& s : series) {
      if (s.size() != L) throw InvalidArgument("aggregate: series lengths differ");
      col.push_back(s[i]);
    }
    double m = 0.0;
    for (double x : col) m += x;
    b.mean.push_back(m / double(col.size()));
    b.q05.push_back(quantile(col, 0.05));
    b.q95.push_back(quantile(col, 0.95));
  }
  return b;
}

/// Growth of a cumulative series over its trailing `window` entries as a
/// fraction of the final value.
inline double plateau_growth(const std::vector<double>& cumulative, std::size_t window) {
  if (cumulative.size() <= window) throw InvalidArgument("plateau_growth: series shorter than window");
  const double last = cumulative.back();
  const double before = cumulative[cumulative.size() - 1 - window];
  if (last == 0.0) return before == 0.0 ? 0.0 : INFINITY;
  return (last - before) / std::abs(last);
}

}  // namespace ecpricing::metrics
