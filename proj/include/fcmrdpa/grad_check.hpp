#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fcmrdpa/augment.hpp"
#include "fcmrdpa/model.hpp"

namespace fcmrdpa {

// Finite-difference verification of the analytic gradients. Everything here
// goes through the public loss() only, so it stays independent of the
// analytic gradient path it checks.

/// Central finite differences of a scalar function of theta.
template <class LossFn>
Vector finite_difference_gradient(LossFn&& f, const Vector& theta0,
                                  double h = 1e-6) {
  Vector g(theta0.size());
  Vector theta = theta0;
  for (Eigen::Index i = 0; i < theta0.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + h;
    const double up = f(theta);
    theta[i] = orig - h;
    const double down = f(theta);
    theta[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

struct GradCheckStats {
  double max_rel_err = 0.0;    ///< over entries with magnitude >= small_mag
  double max_small_abs = 0.0;  ///< absolute error over small-magnitude entries
  Eigen::Index worst_index = -1;
  Eigen::Index entries = 0;

  bool pass(double rel_tol = 1e-4, double small_abs_tol = 1e-7) const {
    return max_rel_err <= rel_tol && max_small_abs <= small_abs_tol;
  }
};

/// Entries with |g| >= small_mag are compared relatively; smaller ones
/// absolutely.
inline GradCheckStats compare_gradients(const Vector& analytic,
                                        const Vector& numeric,
                                        double small_mag = 1e-3) {
  GradCheckStats s;
  s.entries = analytic.size();
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double mag = std::max(std::abs(a), std::abs(n));
    const double err = std::abs(a - n);
    if (mag < small_mag) {
      if (err > s.max_small_abs) s.max_small_abs = err;
    } else if (err / mag > s.max_rel_err) {
      s.max_rel_err = err / mag;
      s.worst_index = i;
    }
  }
  return s;
}

struct GradValidationResult {
  int configs = 0;
  int failures = 0;
  double worst_rel_err = 0.0;
  double worst_small_abs = 0.0;
  std::vector<std::string> failed_cases;

  bool pass() const { return failures == 0; }
};

namespace detail {

inline TskModel random_smooth_model(int rules, int ant, int con, Rng& rng) {
  TskModel m = make_tsk_model(rules, ant, con);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> sigma(0.4, 2.0);
  for (int r = 0; r < rules; ++r) {
    for (int j = 0; j < ant; ++j) {
      m.centers(r, j) = normal(rng);
      m.sigmas(r, j) = sigma(rng);
    }
    for (int j = 0; j <= con; ++j) m.weights(r, j) = normal(rng);
  }
  return m;
}

inline Matrix random_batch(int n, int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix X(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) X(i, j) = normal(rng);
  return X;
}

}  // namespace detail

/// Randomized finite-difference sweep over plain and augmented models, with
/// and without DropRule masks and regularization. Dimensions follow the
/// gradient-correctness property: M in [1,8], R in [1,16].
inline GradValidationResult run_gradient_validation(int n_configs,
                                                    std::uint64_t seed,
                                                    bool include_augmented = true) {
  GradValidationResult res;
  Rng rng(seed);
  std::uniform_int_distribution<int> pick_m(1, 8), pick_r(1, 16),
      pick_n(2, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const AugmentMode modes[] = {AugmentMode::None, AugmentMode::AntecedentOnly,
                               AugmentMode::SharedBoth, AugmentMode::SplitBoth};

  for (int k = 0; k < n_configs; ++k) {
    const int dim = pick_m(rng), rules = pick_r(rng), n = pick_n(rng);
    const double lambda = (k % 3 == 0) ? 0.0 : 0.05 * (1 + k % 4);
    const bool with_mask = k % 2 == 0;
    const AugmentMode mode =
        include_augmented ? modes[k % 4] : AugmentMode::None;

    const Matrix X = detail::random_batch(n, dim, rng);
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = std::normal_distribution<double>()(rng);
    DropMask mask;
    const DropMask* mask_ptr = nullptr;
    if (with_mask) {
      mask = sample_drop_mask(n, rules, 0.5 + 0.5 * unit(rng), rng);
      mask_ptr = &mask;
    }

    GradCheckStats stats;
    if (mode == AugmentMode::None) {
      TskModel model = detail::random_smooth_model(rules, dim, dim, rng);
      const Vector analytic =
          loss_and_gradient(model, X, y, mask_ptr, lambda).grad;
      TskModel probe = model;
      const Vector numeric = finite_difference_gradient(
          [&](const Vector& th) {
            unflatten(probe, th);
            return loss(probe, X, y, mask_ptr, lambda);
          },
          flatten(model));
      stats = compare_gradients(analytic, numeric);
    } else {
      const int d = proj_dim_for_rules(rules);
      AugmentedTskModel model;
      model.input_dim = dim;
      model.aug.mode = mode;
      model.aug.proj_dim = d;
      std::normal_distribution<double> normal(0.0, 0.5);
      model.aug.proj_a.resize(dim, d);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < d; ++j) model.aug.proj_a(i, j) = normal(rng);
      if (mode == AugmentMode::SplitBoth) {
        model.aug.proj_c.resize(dim, d);
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < d; ++j) model.aug.proj_c(i, j) = normal(rng);
      }
      const int con = (mode == AugmentMode::AntecedentOnly) ? dim : dim + d;
      model.core = detail::random_smooth_model(rules, dim + d, con, rng);
      const Vector analytic =
          loss_and_gradient(model, X, y, mask_ptr, lambda).grad;
      AugmentedTskModel probe = model;
      const Vector numeric = finite_difference_gradient(
          [&](const Vector& th) {
            unflatten(probe, th);
            return loss(probe, X, y, mask_ptr, lambda);
          },
          flatten(model));
      stats = compare_gradients(analytic, numeric);
    }

    ++res.configs;
    res.worst_rel_err = std::max(res.worst_rel_err, stats.max_rel_err);
    res.worst_small_abs = std::max(res.worst_small_abs, stats.max_small_abs);
    if (!stats.pass()) {
      ++res.failures;
      res.failed_cases.push_back(
          "config " + std::to_string(k) + ": M=" + std::to_string(dim) +
          " R=" + std::to_string(rules) + " mode=" +
          augment_mode_name(mode) + " rel=" + std::to_string(stats.max_rel_err));
    }
  }
  return res;
}

}  // namespace fcmrdpa
