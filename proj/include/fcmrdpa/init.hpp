#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fcmrdpa/clustering.hpp"
#include "fcmrdpa/model.hpp"

namespace fcmrdpa {

struct FcmParams {
  double fuzzifier = 2.0;
  double tol = 1e-5;
  int max_iter = 100;
  Eigen::Index subsample_cap = 10000;
};

/// Rulebase structure: either R free rules with independent MFs, or a grid
/// of shared MFs (K_m per feature) whose cross product enumerates the rules.
struct RulebaseSpec {
  bool shared = false;
  int rule_count = 0;            // independent form
  std::vector<int> mf_counts;    // shared-grid form

  static RulebaseSpec independent(int rules) {
    RulebaseSpec s;
    s.rule_count = rules;
    return s;
  }
  static RulebaseSpec shared_grid(std::vector<int> counts) {
    RulebaseSpec s;
    s.shared = true;
    s.mf_counts = std::move(counts);
    return s;
  }

  int rules() const {
    if (!shared) return rule_count;
    int r = 1;
    for (int k : mf_counts) r *= k;
    return r;
  }

  /// Which of feature m's shared MFs rule r uses (mixed radix, last feature
  /// fastest).
  int mf_index(int r, int m) const {
    int stride = 1;
    for (std::size_t j = m + 1; j < mf_counts.size(); ++j)
      stride *= mf_counts[j];
    return (r / stride) % mf_counts[m];
  }
};

/// Groups of flat-parameter indices that must stay equal (one group per
/// shared MF center and per shared MF width).
using TiedGroups = std::vector<std::vector<Eigen::Index>>;

inline TiedGroups tied_groups_for(const RulebaseSpec& spec,
                                  const ParamLayout& lay) {
  TiedGroups groups;
  if (!spec.shared) return groups;
  const int features = static_cast<int>(spec.mf_counts.size());
  for (int m = 0; m < features; ++m) {
    for (int k = 0; k < spec.mf_counts[m]; ++k) {
      std::vector<Eigen::Index> centers, sigmas;
      for (int r = 0; r < lay.rules; ++r) {
        if (spec.mf_index(r, m) == k) {
          centers.push_back(lay.center_index(r, m));
          sigmas.push_back(lay.sigma_index(r, m));
        }
      }
      groups.push_back(std::move(centers));
      groups.push_back(std::move(sigmas));
    }
  }
  return groups;
}

/// Replace every tied slot's gradient by the group sum, so tied slots take
/// identical optimizer steps.
inline void tie_gradients(const TiedGroups& groups, Eigen::Ref<Vector> grad) {
  for (const auto& g : groups) {
    double sum = 0.0;
    for (Eigen::Index i : g) sum += grad[i];
    for (Eigen::Index i : g) grad[i] = sum;
  }
}

/// Copy each group's canonical (first) value to all aliases.
inline void tie_values(const TiedGroups& groups, Eigen::Ref<Vector> theta) {
  for (const auto& g : groups) {
    const double v = theta[g.front()];
    for (Eigen::Index i : g) theta[i] = v;
  }
}

namespace detail {

// Common clustering-based recipe: centers from the clusterer, widths as the
// membership-weighted standard deviation around them, biases as the
// membership-weighted target mean, all other consequents zero.
inline TskModel model_from_memberships(const Eigen::Ref<const Matrix>& X,
                                       const Eigen::Ref<const Vector>& y,
                                       const Matrix& centers,
                                       const Matrix& memberships,
                                       double sigma_min) {
  const int rules = static_cast<int>(centers.rows());
  const int dim = static_cast<int>(X.cols());
  TskModel model = make_tsk_model(rules, dim, dim);
  model.centers = centers;
  for (int r = 0; r < rules; ++r) {
    const auto u = memberships.row(r).transpose().array();
    const double total = u.sum();
    if (total <= 0.0) {
      // unreachable for FCM; k-means guards against empty clusters upstream
      model.sigmas.row(r).setConstant(sigma_min);
      model.weights(r, 0) = y.mean();
      continue;
    }
    for (int m = 0; m < dim; ++m) {
      const auto diff = X.col(m).array() - centers(r, m);
      const double var = (u * diff.square()).sum() / total;
      model.sigmas(r, m) = std::max(std::sqrt(var), sigma_min);
    }
    model.weights(r, 0) = (u * y.array()).sum() / total;
  }
  return model;
}

}  // namespace detail

/// FCM-clustering initialization: cluster the inputs into R fuzzy clusters
/// (optionally on a random subsample when the set is large), then derive
/// per-rule MFs and biases from the full-set memberships.
inline TskModel init_fcm(const Eigen::Ref<const Matrix>& X,
                         const Eigen::Ref<const Vector>& y, int rules,
                         const FcmParams& params, double sigma_min, Rng& rng) {
  if (X.rows() < rules)
    throw std::invalid_argument("init_fcm: fewer samples than rules");
  const Matrix Xc = subsample_for_clustering(X, params.subsample_cap, rng);
  const FcmResult res =
      fcm(Xc, rules, params.fuzzifier, params.tol, params.max_iter, rng);
  const Matrix u = fcm_memberships(X, res.centers, params.fuzzifier);
  return detail::model_from_memberships(X, y, res.centers, u, sigma_min);
}

/// k-means initialization: same recipe with hard (one-hot) memberships.
inline TskModel init_kmeans(const Eigen::Ref<const Matrix>& X,
                            const Eigen::Ref<const Vector>& y, int rules,
                            const FcmParams& params, double sigma_min,
                            Rng& rng) {
  if (X.rows() < rules)
    throw std::invalid_argument("init_kmeans: fewer samples than rules");
  const Matrix Xc = subsample_for_clustering(X, params.subsample_cap, rng);
  const KmeansResult res = kmeans(Xc, rules, params.tol, params.max_iter, rng);
  // hard memberships of the full set w.r.t. the final centers
  Matrix u = Matrix::Zero(rules, X.rows());
  const Matrix dist = detail::pairwise_sqdist(res.centers, X);
  for (Eigen::Index j = 0; j < X.rows(); ++j) {
    Eigen::Index best;
    dist.col(j).minCoeff(&best);
    u(best, j) = 1.0;
  }
  return detail::model_from_memberships(X, y, res.centers, u, sigma_min);
}

/// Random initialization: centers and consequents uniform in [0,1], widths
/// uniform in [0,5] clamped up to the sigma floor. Draw order is centers
/// row-major, then sigmas, then weights.
inline TskModel init_random(int dim, int rules, double sigma_min, Rng& rng) {
  TskModel model = make_tsk_model(rules, dim, dim);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> wide(0.0, 5.0);
  for (int r = 0; r < rules; ++r)
    for (int m = 0; m < dim; ++m) model.centers(r, m) = unit(rng);
  for (int r = 0; r < rules; ++r)
    for (int m = 0; m < dim; ++m)
      model.sigmas(r, m) = std::max(wide(rng), sigma_min);
  for (int r = 0; r < rules; ++r)
    for (int j = 0; j <= dim; ++j) model.weights(r, j) = unit(rng);
  return model;
}

struct GridInit {
  TskModel model;
  RulebaseSpec spec;
  TiedGroups ties;
};

/// Grid-partition initialization for shared MFs: K_m centers evenly spaced
/// over each feature's [min, max], sigma = half the center spacing, rules
/// enumerating every MF combination. Consequent biases start at mean(y).
inline GridInit init_grid(const Eigen::Ref<const Matrix>& X,
                          const Eigen::Ref<const Vector>& y,
                          const std::vector<int>& mf_counts,
                          double sigma_min) {
  const int dim = static_cast<int>(X.cols());
  if (static_cast<int>(mf_counts.size()) != dim)
    throw std::invalid_argument("init_grid: one MF count per feature needed");
  for (int k : mf_counts)
    if (k < 1) throw std::invalid_argument("init_grid: MF counts must be >= 1");

  GridInit out;
  out.spec = RulebaseSpec::shared_grid(mf_counts);
  const int rules = out.spec.rules();
  out.model = make_tsk_model(rules, dim, dim);

  // per-feature MF centers/sigmas
  std::vector<std::vector<double>> mf_centers(dim), mf_sigmas(dim);
  for (int m = 0; m < dim; ++m) {
    const double lo = X.col(m).minCoeff();
    const double hi = X.col(m).maxCoeff();
    const int k = mf_counts[m];
    if (hi - lo <= 0.0) {
      // constant feature: one effective center
      mf_centers[m].assign(k, lo);
      mf_sigmas[m].assign(k, sigma_min);
    } else if (k == 1) {
      mf_centers[m] = {0.5 * (lo + hi)};
      mf_sigmas[m] = {std::max(0.5 * (hi - lo), sigma_min)};
    } else {
      const double spacing = (hi - lo) / (k - 1);
      for (int i = 0; i < k; ++i) {
        mf_centers[m].push_back(lo + spacing * i);
        mf_sigmas[m].push_back(std::max(0.5 * spacing, sigma_min));
      }
    }
  }

  const double bias = y.mean();
  for (int r = 0; r < rules; ++r) {
    for (int m = 0; m < dim; ++m) {
      const int k = out.spec.mf_index(r, m);
      out.model.centers(r, m) = mf_centers[m][k];
      out.model.sigmas(r, m) = mf_sigmas[m][k];
    }
    out.model.weights(r, 0) = bias;
  }
  out.ties = tied_groups_for(out.spec, layout_of(out.model));
  return out;
}

}  // namespace fcmrdpa
