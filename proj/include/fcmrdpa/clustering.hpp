#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fcmrdpa/model.hpp"
#include "fcmrdpa/rng.hpp"

namespace fcmrdpa {

struct FcmResult {
  Matrix centers;      ///< c x M
  Matrix memberships;  ///< c x N, every column sums to 1
  int iterations = 0;
  std::vector<double> objective_trace;  ///< J_m after each alternation
};

namespace detail {

// Squared Euclidean distances, one row per cluster.
inline Matrix pairwise_sqdist(const Matrix& centers, const Matrix& X) {
  Matrix d2(centers.rows(), X.rows());
  for (Eigen::Index r = 0; r < centers.rows(); ++r)
    d2.row(r) =
        (X.rowwise() - centers.row(r)).rowwise().squaredNorm().transpose();
  return d2;
}

inline constexpr double kCoincident = 1e-250;

}  // namespace detail

/// Memberships of every sample w.r.t. fixed cluster centers (the FCM update
/// formula). A sample coinciding with a center gets membership 1 there.
inline Matrix fcm_memberships(const Eigen::Ref<const Matrix>& X,
                              const Matrix& centers, double fuzzifier) {
  if (!(fuzzifier > 1.0))
    throw std::invalid_argument("fcm: fuzzifier must be > 1");
  const Matrix d2 = detail::pairwise_sqdist(centers, X);
  const double expo = 1.0 / (fuzzifier - 1.0);
  const Eigen::Index c = centers.rows(), n = X.rows();
  Matrix u(c, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index hit = -1;
    for (Eigen::Index r = 0; r < c && hit < 0; ++r)
      if (d2(r, j) < detail::kCoincident) hit = r;
    if (hit >= 0) {
      u.col(j).setZero();
      u(hit, j) = 1.0;
      continue;
    }
    Vector p = d2.col(j).array().pow(-expo);
    u.col(j) = p / p.sum();
  }
  return u;
}

/// Fuzzy c-means (alternating optimization). Stops when the largest center
/// movement falls below tol or after max_iter alternations. Memberships are
/// seeded uniformly at random and column-normalized.
inline FcmResult fcm(const Eigen::Ref<const Matrix>& X, int clusters,
                     double fuzzifier, double tol, int max_iter, Rng& rng) {
  const Eigen::Index n = X.rows();
  if (clusters < 1) throw std::invalid_argument("fcm: need >= 1 cluster");
  if (n < clusters)
    throw std::invalid_argument("fcm: more clusters than samples");
  if (!(fuzzifier > 1.0))
    throw std::invalid_argument("fcm: fuzzifier must be > 1");
  if (!X.allFinite()) throw std::domain_error("fcm: non-finite input");

  FcmResult res;
  std::uniform_real_distribution<double> unit(
      std::numeric_limits<double>::min(), 1.0);
  res.memberships.resize(clusters, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int r = 0; r < clusters; ++r) res.memberships(r, j) = unit(rng);
    res.memberships.col(j) /= res.memberships.col(j).sum();
  }

  Matrix prev_centers;
  for (res.iterations = 0; res.iterations < max_iter;) {
    const Matrix w = res.memberships.array().pow(fuzzifier);
    Matrix centers = w * X;
    const Vector norm = w.rowwise().sum();
    for (int r = 0; r < clusters; ++r) centers.row(r) /= norm[r];

    res.memberships = fcm_memberships(X, centers, fuzzifier);
    ++res.iterations;

    const double obj =
        (res.memberships.array().pow(fuzzifier) *
         detail::pairwise_sqdist(centers, X).array())
            .sum();
    assert(res.objective_trace.empty() ||
           obj <= res.objective_trace.back() +
                      1e-9 * std::max(1.0, res.objective_trace.back()));
    res.objective_trace.push_back(obj);

    const bool converged =
        prev_centers.size() != 0 &&
        (centers - prev_centers).array().abs().maxCoeff() < tol;
    prev_centers = std::move(centers);
    if (converged) break;
  }
  res.centers = std::move(prev_centers);
  return res;
}

struct KmeansResult {
  Matrix centers;               ///< c x M
  std::vector<int> assignment;  ///< per-sample cluster index
  Matrix memberships;           ///< c x N one-hot
  int iterations = 0;
  std::vector<double> sse_trace;  ///< within-cluster SSE after each update
};

/// Lloyd's algorithm with k-means++ seeding. An emptied cluster is reseeded
/// to the point farthest from its nearest center.
inline KmeansResult kmeans(const Eigen::Ref<const Matrix>& X, int clusters,
                           double tol, int max_iter, Rng& rng) {
  const Eigen::Index n = X.rows();
  if (clusters < 1) throw std::invalid_argument("kmeans: need >= 1 cluster");
  if (n < clusters)
    throw std::invalid_argument("kmeans: more clusters than samples");
  if (!X.allFinite()) throw std::domain_error("kmeans: non-finite input");

  KmeansResult res;
  res.centers.resize(clusters, X.cols());

  // k-means++ seeding
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  res.centers.row(0) = X.row(pick(rng));
  Vector d2 = (X.rowwise() - res.centers.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int r = 1; r < clusters; ++r) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      double target = unit(rng) * total, acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        acc += d2[j];
        if (acc >= target) {
          chosen = j;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    res.centers.row(r) = X.row(chosen);
    d2 = d2.cwiseMin(
        (X.rowwise() - res.centers.row(r)).rowwise().squaredNorm());
  }

  res.assignment.assign(n, 0);
  for (res.iterations = 0; res.iterations < max_iter;) {
    Matrix dist = detail::pairwise_sqdist(res.centers, X);
    double sse = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index best;
      sse += dist.col(j).minCoeff(&best);
      res.assignment[j] = static_cast<int>(best);
    }
    res.sse_trace.push_back(sse);

    Matrix centers = Matrix::Zero(clusters, X.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(clusters);
    for (Eigen::Index j = 0; j < n; ++j) {
      centers.row(res.assignment[j]) += X.row(j);
      counts[res.assignment[j]] += 1;
    }
    for (int r = 0; r < clusters; ++r) {
      if (counts[r] > 0) {
        centers.row(r) /= counts[r];
      } else {
        // farthest point from its nearest center
        Eigen::Index far = 0;
        dist.colwise().minCoeff().maxCoeff(&far);
        centers.row(r) = X.row(far);
      }
    }
    ++res.iterations;
    const double shift = (centers - res.centers).array().abs().maxCoeff();
    res.centers = std::move(centers);
    if (shift < tol) break;
  }

  // final hard assignment against the returned centers
  const Matrix dist = detail::pairwise_sqdist(res.centers, X);
  res.memberships = Matrix::Zero(clusters, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index best;
    dist.col(j).minCoeff(&best);
    res.assignment[j] = static_cast<int>(best);
    res.memberships(best, j) = 1.0;
  }
  return res;
}

/// Uniform sample of min(N, cap) distinct rows, used to keep clustering
/// affordable on large training sets.
inline Matrix subsample_for_clustering(const Eigen::Ref<const Matrix>& X,
                                       Eigen::Index cap, Rng& rng) {
  if (cap < 1) throw std::invalid_argument("subsample: cap must be >= 1");
  const Eigen::Index n = X.rows();
  if (n <= cap) return X;
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::vector<Eigen::Index> take(cap);
  std::sample(idx.begin(), idx.end(), take.begin(), cap, rng);
  Matrix out(cap, X.cols());
  for (Eigen::Index i = 0; i < cap; ++i) out.row(i) = X.row(take[i]);
  return out;
}

}  // namespace fcmrdpa
