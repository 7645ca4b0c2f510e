#pragma once

// Thompson-sampling learner: Gaussian beliefs over signature weights,
// conjugate updates from observed daily responses, and drift detection.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecpricing/data.hpp"
#include "ecpricing/errors.hpp"

namespace ecpricing {

struct PriorConfig {
  double mean = 0.5;
  double std = 0.15;
  double pv_scale = 3.0;
  std::vector<std::size_t> pv_signatures{3};  // entries stretched by pv_scale
};

struct WeightBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  std::size_t size() const noexcept { return static_cast<std::size_t>(mean.size()); }

  void validate(double psd_tolerance = 1e-10) const {
    if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
      throw InvalidArgument("belief: covariance dimensions do not match mean");
    if (!mean.allFinite() || !covariance.allFinite()) throw InvalidArgument("belief: non-finite entries");
    if (mean.size() == 0) return;
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, covariance.cwiseAbs().maxCoeff()))
      throw InvalidArgument("belief: covariance not symmetric");
    if (min_eigenvalue() < -psd_tolerance) throw InvalidArgument("belief: covariance not positive semidefinite");
  }

  double min_eigenvalue() const {
    if (mean.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
};

struct NoiseModel {
  double std = 0.0;  // kWh per period

  Eigen::MatrixXd covariance(Eigen::Index periods) const {
    return Eigen::MatrixXd::Identity(periods, periods) * (std * std);
  }
};

inline WeightBelief init_prior(std::size_t size, const PriorConfig& cfg = {}) {
  if (!(cfg.std > 0.0)) throw ConfigError("prior std must be > 0");
  if (!(cfg.pv_scale > 0.0)) throw ConfigError("prior pv_scale must be > 0");
  const auto K = static_cast<Eigen::Index>(size);
  WeightBelief b{Eigen::VectorXd::Constant(K, cfg.mean), Eigen::MatrixXd::Zero(K, K)};
  for (Eigen::Index k = 0; k < K; ++k) b.covariance(k, k) = cfg.std * cfg.std;
  for (auto k : cfg.pv_signatures) {
    if (k >= size) continue;
    const auto i = static_cast<Eigen::Index>(k);
    b.mean(i) = cfg.mean * cfg.pv_scale;
    b.covariance(i, i) = std::pow(cfg.std * cfg.pv_scale, 2);
  }
  return b;
}

inline WeightBelief reset_prior(const WeightBelief& belief, const PriorConfig& cfg = {}) {
  return init_prior(belief.size(), cfg);
}

/// One multivariate-normal draw. Uses an LDLT factorization so singular
/// (e.g. zero) covariances are handled; negative pivots from round-off are
/// treated as zero.
template <class Rng>
Eigen::VectorXd sample_weights(const WeightBelief& belief, Rng& rng) {
  const auto K = belief.mean.size();
  if (K == 0) return {};
  Eigen::LDLT<Eigen::MatrixXd> ldlt(belief.covariance);
  if (ldlt.info() != Eigen::Success) {
    ldlt.compute(belief.covariance + 1e-10 * Eigen::MatrixXd::Identity(K, K));
    if (ldlt.info() != Eigen::Success) throw NumericalError("sample_weights: covariance factorization failed");
  }
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd e(K);
  for (Eigen::Index i = 0; i < K; ++i) e(i) = z(rng);
  const Eigen::VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  Eigen::VectorXd v = ldlt.matrixL() * d.cwiseProduct(e);
  v = ldlt.transpositionsP().transpose() * v;
  return belief.mean + v;
}

inline Eigen::VectorXd sample_weights(const WeightBelief& belief, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_weights(belief, rng);
}

/// Conjugate update with profile matrix P (periods x signatures).
inline WeightBelief update_posterior(const WeightBelief& belief, const Eigen::MatrixXd& P, const Eigen::VectorXd& y,
                                     const NoiseModel& noise) {
  if (P.cols() != belief.mean.size()) throw InvalidArgument("update_posterior: profile columns do not match belief");
  if (P.rows() != y.size()) throw InvalidArgument("update_posterior: observation length does not match profiles");
  if (!(noise.std >= 0.0)) throw ConfigError("noise std must be >= 0");
  if (belief.mean.size() == 0) return belief;
  const Eigen::MatrixXd SPt = belief.covariance * P.transpose();
  const Eigen::MatrixXd S = P * SPt + noise.covariance(P.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    if (S.isZero(0.0)) return belief;  // nothing observed and nothing uncertain
    throw ConfigError("update_posterior: innovation covariance is singular (zero noise with rank-deficient profiles)");
  }
  const Eigen::MatrixXd gain = llt.solve(SPt.transpose()).transpose();  // Sigma P' S^-1
  WeightBelief out;
  out.mean = belief.mean + gain * (y - P * belief.mean);
  out.covariance = belief.covariance - gain * SPt.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

inline double rms_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw InvalidArgument("rms_distance: length mismatch");
  if (a.size() == 0) return 0.0;
  return std::sqrt((a - b).squaredNorm() / double(a.size()));
}

/// Flags a shift once the RMS gap between predicted and observed responses
/// exceeds the tolerance on `window` consecutive days. With `require_settled`,
/// the detector only arms after `window` consecutive days below tolerance,
/// so the large errors of an uninformed prior are not mistaken for drift.
class ShiftDetector {
 public:
  explicit ShiftDetector(double tolerance = 1.0, int window = 3, bool require_settled = false)
      : tolerance_(tolerance), window_(window), require_settled_(require_settled) {
    if (!(tolerance >= 0.0)) throw ConfigError("shift tolerance must be >= 0");
    if (window < 1) throw ConfigError("shift window must be >= 1");
    reset();
  }

  bool observe(const Eigen::VectorXd& predicted, const Eigen::VectorXd& observed) {
    return observe_distance(rms_distance(predicted, observed));
  }

  bool observe_distance(double d) {
    last_ = d;
    if (d > tolerance_) {
      below_ = 0;
      if (!armed_) return false;
      if (++above_ >= window_) {
        reset();
        return true;
      }
      return false;
    }
    above_ = 0;
    if (!armed_ && ++below_ >= window_) armed_ = true;
    return false;
  }

  void reset() {
    above_ = below_ = 0;
    armed_ = !require_settled_;
  }

  bool armed() const noexcept { return armed_; }
  double last_distance() const noexcept { return last_; }

 private:
  double tolerance_;
  int window_;
  bool require_settled_;
  bool armed_ = true;
  int above_ = 0, below_ = 0;
  double last_ = 0.0;
};

/// Appends belief rows (day, prosumer, signature, mean, variance).
inline void write_belief_rows(std::ostream& os, int day, std::size_t prosumer, const WeightBelief& b) {
  for (Eigen::Index k = 0; k < b.mean.size(); ++k)
    os << day << ',' << prosumer << ',' << k << ',' << csv::format(b.mean(k)) << ',' << csv::format(b.covariance(k, k))
       << '\n';
}

}  // namespace ecpricing
