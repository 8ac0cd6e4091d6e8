// Benchmark intrusion detectors and the adversarial sensor environment:
// alarm-driven IDS-1 and the Bayesian IDS-2 that thresholds the posterior
// probability of intrusion given an alarm.
#pragma once

#include "mcasim/errors.hpp"

namespace mcasim {

/// Sensor (event-block) characteristics plus the adversary's manipulation
/// envelope: bias on the estimated attack rate, zero-day probability cap,
/// intentional-false-alarm probability cap.
struct EBlockModel {
  double p_d = 0.9;         // detection probability
  double p_fa = 0.1;        // false-alarm probability
  double p0_hat = 0.25;     // estimated nominal attack rate
  double delta_adv = 0.025; // max deviation injected under p0_hat
  double beta = 0.2;        // max zero-day probability
  double alpha = 0.1;       // max intentional-false-alarm probability

  void validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(p_d) || !in01(p_fa) || !in01(p0_hat) || !in01(beta) || !in01(alpha) ||
        delta_adv < 0.0)
      throw ContractError("EBlockModel: probabilities must lie in [0,1]");
    if (delta_adv > p0_hat) throw ContractError("EBlockModel: delta_adv exceeds p0_hat");
  }
};

enum class IdsLabel { benign, intrusion };

struct BayesVerdict {
  double posterior = 0.0;
  double threshold = 0.5;
  IdsLabel label = IdsLabel::benign;
};

/// IDS-1 labels every alarm an intrusion.
inline IdsLabel ids1_label(bool alarm) { return alarm ? IdsLabel::intrusion : IdsLabel::benign; }

/// Posterior probability of intrusion given an alarm:
///   p_D p0 / ((p_D - p_FA) p0 + p_FA).
inline double bayes_posterior(const EBlockModel& model) {
  double denom = (model.p_d - model.p_fa) * model.p0_hat + model.p_fa;
  if (!(denom > 0.0)) throw ContractError("bayes_posterior: undefined, denominator is zero");
  return model.p_d * model.p0_hat / denom;
}

/// IDS-2: on alarm, intrusion iff the posterior reaches the threshold; silent
/// events are benign (posterior reported as zero).
inline BayesVerdict ids2_label(bool alarm, const EBlockModel& model, double threshold = 0.5) {
  BayesVerdict v;
  v.threshold = threshold;
  if (!alarm) {
    v.posterior = 0.0;
    v.label = IdsLabel::benign;
    return v;
  }
  v.posterior = bayes_posterior(model);
  v.label = v.posterior >= threshold ? IdsLabel::intrusion : IdsLabel::benign;
  return v;
}

}  // namespace mcasim
