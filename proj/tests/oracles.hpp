#pragma once

// Test-side oracles, written independently of the library internals they
// check: a direct transcription of the TSK equations, the closed-sum forms
// of the optimizer variants, and synthetic fixtures.

#include <cmath>
#include <random>
#include <vector>

#include "fcmrdpa/model.hpp"
#include "fcmrdpa/optim.hpp"

namespace oracles {

using fcmrdpa::Matrix;
using fcmrdpa::TskModel;
using fcmrdpa::Vector;

// Straight loop-over-everything transcription of the model equations:
// Gaussian grades, product firing, weighted-average defuzzification.
inline double naive_predict(const TskModel& m, const Vector& x,
                            const std::vector<bool>& keep = {}) {
  const int rules = m.rules();
  const int dim = m.antecedent_dim();
  double num = 0.0, den = 0.0;
  std::vector<double> firing(rules, 0.0);
  for (int r = 0; r < rules; ++r) {
    if (!keep.empty() && !keep[r]) continue;
    double f = 1.0;
    for (int j = 0; j < dim; ++j) {
      const double diff = x[j] - m.centers(r, j);
      f *= std::exp(-diff * diff / (2.0 * m.sigmas(r, j) * m.sigmas(r, j)));
    }
    firing[r] = f;
  }
  for (int r = 0; r < rules; ++r) {
    double y_r = m.weights(r, 0);
    for (int j = 0; j < dim; ++j) y_r += m.weights(r, j + 1) * x[j];
    num += firing[r] * y_r;
    den += firing[r];
  }
  return num / den;
}

inline std::vector<double> naive_firing(const TskModel& m, const Vector& x) {
  std::vector<double> f(m.rules(), 1.0);
  for (int r = 0; r < m.rules(); ++r)
    for (int j = 0; j < m.antecedent_dim(); ++j) {
      const double diff = x[j] - m.centers(r, j);
      f[r] *= std::exp(-diff * diff / (2.0 * m.sigmas(r, j) * m.sigmas(r, j)));
    }
  return f;
}

inline double naive_loss(const TskModel& m, const Matrix& X, const Vector& y,
                         double lambda) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double e = y[i] - naive_predict(m, X.row(i).transpose());
    acc += 0.5 * e * e;
  }
  for (int r = 0; r < m.rules(); ++r)
    for (int j = 1; j <= m.consequent_dim(); ++j)
      acc += 0.5 * lambda * m.weights(r, j) * m.weights(r, j);
  return acc;
}

// ---------------------------------------------------------------------------
// Closed-sum reference for the optimizer variants: the accumulators are
// recomputed from the whole gradient history each step instead of the EMA
// recursion the implementation uses.

struct ClosedSumConfig {
  fcmrdpa::OptVariant variant;
  bool powerball = false;
  double alpha = 0.01;
  double gamma = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool debias = true;
};

inline Vector closed_sum_power(const Vector& g, double gamma) {
  Vector out(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double a = std::abs(g[i]);
    out[i] = (g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0)) * std::pow(a, gamma);
  }
  return out;
}

/// Runs T steps over a raw gradient sequence and returns the theta
/// trajectory (theta after each step).
inline std::vector<Vector> closed_sum_trajectory(
    const ClosedSumConfig& cfg, const Vector& theta0,
    const std::vector<Vector>& raw_grads) {
  using fcmrdpa::OptVariant;
  const Eigen::Index dim = theta0.size();
  std::vector<Vector> g;  // post-powerball gradients, g[0] = g_1
  std::vector<Vector> phi;
  std::vector<Vector> trajectory;
  Vector theta = theta0;

  for (std::size_t step = 0; step < raw_grads.size(); ++step) {
    g.push_back(cfg.powerball ? closed_sum_power(raw_grads[step], cfg.gamma)
                              : raw_grads[step]);
    const long t = static_cast<long>(step) + 1;

    // phi_t (momentum) from the closed sum
    Vector m = Vector::Zero(dim);
    for (long i = 1; i <= t; ++i)
      m += std::pow(cfg.beta1, static_cast<double>(t - i)) * g[i - 1];
    if (cfg.variant != OptVariant::Sgdm) m *= (1.0 - cfg.beta1);
    phi.push_back(m);

    Vector step_vec(dim);
    if (cfg.variant == OptVariant::Sgdm) {
      step_vec = cfg.alpha * m;
    } else {
      Vector v = Vector::Zero(dim);
      for (long i = 1; i <= t; ++i) {
        Vector base;
        if (cfg.variant == OptVariant::AdaBelief)
          base = (g[i - 1] - phi[i - 1]).array().square();
        else
          base = g[i - 1].array().square();
        v += std::pow(cfg.beta2, static_cast<double>(t - i)) * base;
      }
      v *= (1.0 - cfg.beta2);
      const double mc = cfg.debias ? 1.0 - std::pow(cfg.beta1, t) : 1.0;
      const double vc = cfg.debias ? 1.0 - std::pow(cfg.beta2, t) : 1.0;
      for (Eigen::Index k = 0; k < dim; ++k) {
        const double m_hat = m[k] / mc;
        const double v_hat = v[k] / vc;
        double rate = cfg.alpha / (std::sqrt(v_hat) + cfg.epsilon);
        if (cfg.variant == OptVariant::AdaBound) {
          const double x = (1.0 - cfg.beta2) * static_cast<double>(t);
          const double lo = cfg.alpha * x / (x + 1.0);
          const double hi = cfg.alpha * (x + 1.0) / x;
          rate = std::min(std::max(rate, lo), hi);
        }
        step_vec[k] = rate * m_hat;
      }
    }
    theta -= step_vec;
    trajectory.push_back(theta);
  }
  return trajectory;
}

// ---------------------------------------------------------------------------
// Fixtures

/// Two well-separated Gaussian point clouds at +-10 with sigma 0.1, targets
/// +1 for the positive cloud and -1 for the negative one.
inline void two_clouds(int n_per_cloud, int dim, std::uint64_t seed, Matrix& X,
                       Vector& y) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  X.resize(2 * n_per_cloud, dim);
  y.resize(2 * n_per_cloud);
  for (int i = 0; i < n_per_cloud; ++i) {
    for (int j = 0; j < dim; ++j) {
      X(i, j) = 10.0 + noise(rng);
      X(n_per_cloud + i, j) = -10.0 + noise(rng);
    }
    y[i] = 1.0;
    y[n_per_cloud + i] = -1.0;
  }
}

}  // namespace oracles
