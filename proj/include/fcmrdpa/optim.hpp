#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>

#include "fcmrdpa/model.hpp"

namespace fcmrdpa {

enum class OptVariant { Sgdm, Adam, AdaBound, AdaBelief };

inline const char* opt_variant_name(OptVariant v) {
  switch (v) {
    case OptVariant::Sgdm: return "SGDM";
    case OptVariant::Adam: return "Adam";
    case OptVariant::AdaBound: return "AdaBound";
    case OptVariant::AdaBelief: return "AdaBelief";
  }
  return "?";
}

/// One mini-batch optimizer = a Powerball gradient transform followed by the
/// variant's momentum / second-moment / learning-rate-shaping rules.
struct OptimizerConfig {
  OptVariant variant = OptVariant::AdaBelief;
  bool powerball = true;  ///< apply sign(g)|g|^gamma to the raw gradient
  double alpha = 0.01;    ///< initial learning rate
  double gamma = 0.5;     ///< Powerball exponent, in [0,1) when enabled
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Standard bias correction for Adam/AdaBound/AdaBelief. Off reproduces
  /// the plain recursion (no debiasing); SGDM is never debiased.
  bool debias = true;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("optimizer: alpha <= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0))
      throw std::invalid_argument("optimizer: beta1 outside [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("optimizer: beta2 outside [0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer: epsilon <= 0");
    if (powerball && !(gamma >= 0.0 && gamma < 1.0))
      throw std::invalid_argument("optimizer: powerball gamma outside [0,1)");
  }
};

struct OptimizerState {
  Vector m;  ///< first-moment accumulator
  Vector v;  ///< second-moment / belief accumulator, entries always >= 0
  long t = 0;

  explicit OptimizerState(Eigen::Index dim)
      : m(Vector::Zero(dim)), v(Vector::Zero(dim)) {}
};

/// Element-wise sign(g) * |g|^gamma; gamma = 1 is the identity, 0^gamma = 0.
inline Vector powerball(const Eigen::Ref<const Vector>& g, double gamma) {
  if (gamma == 1.0) return g;
  return (g.array().sign() * g.array().abs().pow(gamma)).matrix();
}

/// AdaBound's dynamic learning-rate bounds; both approach alpha as t grows.
inline double adabound_lower(double alpha, double beta2, long t) {
  const double x = (1.0 - beta2) * static_cast<double>(t);
  return alpha * x / (x + 1.0);
}

inline double adabound_upper(double alpha, double beta2, long t) {
  const double x = (1.0 - beta2) * static_cast<double>(t);
  return alpha * (x + 1.0) / x;
}

using ProjectionFn = std::function<void(Eigen::Ref<Vector>)>;

/// One optimizer step. Applies the Powerball transform, updates the
/// accumulators in exponential-moving-average form, moves theta, then applies
/// the feasible-set projection (the sigma floor, plus MF tying when shared).
inline void step(OptimizerState& state, Eigen::Ref<Vector> theta,
                 const Eigen::Ref<const Vector>& g_raw,
                 const OptimizerConfig& cfg,
                 const ProjectionFn& project = {}) {
  if (g_raw.size() != theta.size() || state.m.size() != theta.size())
    throw std::invalid_argument("optimizer step: dimension mismatch");
  if (!g_raw.allFinite())
    throw std::runtime_error("optimizer step: non-finite gradient");

  state.t += 1;
  const Vector g = powerball(g_raw, cfg.powerball ? cfg.gamma : 1.0);
  const double b1 = cfg.beta1, b2 = cfg.beta2;

  switch (cfg.variant) {
    case OptVariant::Sgdm:
      // heavy-ball form: no (1-b1) factor and no debiasing
      state.m = b1 * state.m + g;
      theta -= cfg.alpha * state.m;
      break;

    case OptVariant::Adam:
    case OptVariant::AdaBound:
    case OptVariant::AdaBelief: {
      state.m = b1 * state.m + (1.0 - b1) * g;
      if (cfg.variant == OptVariant::AdaBelief) {
        state.v =
            b2 * state.v + (1.0 - b2) * (g - state.m).array().square().matrix();
      } else {
        state.v = b2 * state.v + (1.0 - b2) * g.array().square().matrix();
      }
      const double mc =
          cfg.debias ? 1.0 - std::pow(b1, static_cast<double>(state.t)) : 1.0;
      const double vc =
          cfg.debias ? 1.0 - std::pow(b2, static_cast<double>(state.t)) : 1.0;
      const auto m_hat = state.m.array() / mc;
      const auto v_hat = state.v.array() / vc;
      if (cfg.variant == OptVariant::AdaBound) {
        const double lo = adabound_lower(cfg.alpha, b2, state.t);
        const double hi = adabound_upper(cfg.alpha, b2, state.t);
        const auto rate = (cfg.alpha / (v_hat.sqrt() + cfg.epsilon))
                              .max(lo)
                              .min(hi);
        theta.array() -= rate * m_hat;
      } else {
        theta.array() -= cfg.alpha * m_hat / (v_hat.sqrt() + cfg.epsilon);
      }
      break;
    }
  }

  if (project) project(theta);
}

}  // namespace fcmrdpa
