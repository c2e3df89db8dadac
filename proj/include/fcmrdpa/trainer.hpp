#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fcmrdpa/augment.hpp"
#include "fcmrdpa/data.hpp"
#include "fcmrdpa/init.hpp"
#include "fcmrdpa/model.hpp"
#include "fcmrdpa/optim.hpp"

namespace fcmrdpa {

inline double rmse(const Eigen::Ref<const Vector>& y_true,
                   const Eigen::Ref<const Vector>& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.size() == 0)
    throw std::invalid_argument("rmse: size mismatch or empty input");
  return std::sqrt((y_true - y_pred).squaredNorm() /
                   static_cast<double>(y_true.size()));
}

/// Test RMSE relative to the ridge baseline on the same dataset.
inline double normalized_rmse(double alg_rmse, double rr_rmse) {
  if (!(rr_rmse > 0.0))
    throw std::invalid_argument("normalized_rmse: baseline must be positive");
  return alg_rmse / rr_rmse;
}

// --- ridge baseline ---------------------------------------------------------

struct RidgeModel {
  Vector w;
  double intercept = 0.0;
};

/// Closed-form ridge with an unpenalized intercept (inputs are centered
/// internally, so the intercept absorbs the means).
inline RidgeModel ridge(const Eigen::Ref<const Matrix>& X,
                        const Eigen::Ref<const Vector>& y, double lambda) {
  if (X.rows() != y.size() || X.rows() == 0)
    throw std::invalid_argument("ridge: bad shapes");
  if (lambda < 0.0) throw std::invalid_argument("ridge: lambda must be >= 0");
  RidgeModel m;
  const Vector x_mean = X.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = X.rowwise() - x_mean.transpose();
  const Vector yc = y.array() - y_mean;
  Matrix gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;
  m.w = gram.ldlt().solve(xc.transpose() * yc);
  m.intercept = y_mean - x_mean.dot(m.w);
  return m;
}

inline Vector ridge_predict(const RidgeModel& m,
                            const Eigen::Ref<const Matrix>& X) {
  return (X * m.w).array() + m.intercept;
}

// --- training loop ----------------------------------------------------------

enum class InitStrategy { Fcm, Kmeans, Random, Grid };

struct TrainConfig {
  RulebaseSpec rulebase = RulebaseSpec::independent(16);
  InitStrategy init = InitStrategy::Fcm;
  AugmentMode augment = AugmentMode::None;  // FCM init only
  int iterations = 1000;
  int batch_size = 64;
  double lambda = 0.05;
  double drop_p = 0.5;
  OptimizerConfig optimizer;
  double sigma_min = kSigmaMin;
  FcmParams fcm;
  std::uint64_t seed = 0;
  int val_stride = 1;  ///< evaluate validation RMSE every this many iterations
  bool record_theta_trace = false;  ///< keep per-iteration theta (tests only)
};

struct TrainReport {
  std::vector<double> val_rmse_trace;   ///< length T; NaN where stride skipped
  std::vector<double> batch_loss_trace;  ///< regularized mini-batch loss per iteration
  int best_iter = 0;                    ///< 1-based argmin (first on ties)
  std::variant<TskModel, AugmentedTskModel> best_model;
  double test_rmse = 0.0;
  double wall_time_s = 0.0;
  std::vector<Vector> theta_trace;  ///< filled only on request
};

inline Vector predict_best(const TrainReport& report,
                           const Eigen::Ref<const Matrix>& X) {
  return std::visit([&](const auto& m) { return predict_batch(m, X); },
                    report.best_model);
}

namespace detail {

template <class Model>
TrainReport train_loop(Model model, const Dataset& data,
                       const TrainConfig& cfg, const TiedGroups& ties,
                       Rng& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.optimizer.validate();
  if (cfg.iterations < 1)
    throw std::invalid_argument("train: iterations must be >= 1");
  const Eigen::Index n_train = data.x_train.rows();
  if (n_train < 1) throw std::invalid_argument("train: empty training split");
  const int batch =
      static_cast<int>(std::min<Eigen::Index>(cfg.batch_size, n_train));
  if (batch < 1) throw std::invalid_argument("train: batch size must be >= 1");
  const int rules = cfg.rulebase.rules();

  Vector theta = flatten(model);
  if (!ties.empty()) tie_values(ties, theta);
  OptimizerState state(theta.size());
  ProjectionFn project;
  if constexpr (std::is_same_v<Model, TskModel>) {
    const ParamLayout lay = layout_of(model);
    project = [lay, &ties, &cfg](Eigen::Ref<Vector> th) {
      apply_sigma_floor_flat(lay, th, cfg.sigma_min);
      if (!ties.empty()) tie_values(ties, th);
    };
  } else {
    const ParamLayout lay = layout_of(model.core);
    project = [lay, &cfg](Eigen::Ref<Vector> th) {
      apply_sigma_floor_flat(lay, th, cfg.sigma_min);
    };
  }

  TrainReport report;
  report.val_rmse_trace.assign(cfg.iterations,
                               std::numeric_limits<double>::quiet_NaN());
  double best = std::numeric_limits<double>::infinity();
  Vector best_theta = theta;
  std::vector<Eigen::Index> all_idx(n_train);
  std::iota(all_idx.begin(), all_idx.end(), Eigen::Index{0});
  Matrix xb(batch, data.x_train.cols());
  Vector yb(batch);

  for (int t = 1; t <= cfg.iterations; ++t) {
    if (batch < n_train) {
      std::vector<Eigen::Index> take(batch);
      std::sample(all_idx.begin(), all_idx.end(), take.begin(), batch, rng);
      for (int i = 0; i < batch; ++i) {
        xb.row(i) = data.x_train.row(take[i]);
        yb[i] = data.y_train[take[i]];
      }
    } else {
      xb = data.x_train;
      yb = data.y_train;
    }
    const DropMask mask = sample_drop_mask(batch, rules, cfg.drop_p, rng);
    LossGrad lg = loss_and_gradient(model, xb, yb, &mask, cfg.lambda);
    if (!std::isfinite(lg.loss))
      throw std::runtime_error("train: non-finite training loss");
    report.batch_loss_trace.push_back(lg.loss);
    if (!ties.empty()) tie_gradients(ties, lg.grad);
    step(state, theta, lg.grad, cfg.optimizer, project);
    unflatten(model, theta);
    if (cfg.record_theta_trace) report.theta_trace.push_back(theta);

    if (t % cfg.val_stride == 0 || t == cfg.iterations) {
      const double val = rmse(data.y_val, predict_batch(model, data.x_val));
      report.val_rmse_trace[t - 1] = val;
      if (val < best) {
        best = val;
        best_theta = theta;
        report.best_iter = t;
      }
    }
  }

  unflatten(model, best_theta);
  report.test_rmse = rmse(data.y_test, predict_batch(model, data.x_test));
  report.best_model = std::move(model);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace detail

/// Full training run: initialize per config, then T mini-batch iterations of
/// DropRule gradient accumulation and optimizer steps, tracking validation
/// RMSE each iteration; returns the snapshot from the best validation
/// iteration, evaluated on the test split with all rules active.
inline TrainReport train(const Dataset& data, const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  const Eigen::Index dim = data.x_train.cols();
  if (cfg.augment != AugmentMode::None) {
    if (cfg.init != InitStrategy::Fcm)
      throw std::invalid_argument(
          "train: feature projection requires FCM initialization");
    AugmentedTskModel model = init_fcm_augmented(
        data.x_train, data.y_train, cfg.rulebase.rules(), cfg.augment, cfg.fcm,
        cfg.sigma_min, rng);
    return detail::train_loop(std::move(model), data, cfg, {}, rng);
  }

  TskModel model;
  TiedGroups ties;
  switch (cfg.init) {
    case InitStrategy::Fcm:
      model = init_fcm(data.x_train, data.y_train, cfg.rulebase.rules(),
                       cfg.fcm, cfg.sigma_min, rng);
      break;
    case InitStrategy::Kmeans:
      model = init_kmeans(data.x_train, data.y_train, cfg.rulebase.rules(),
                          cfg.fcm, cfg.sigma_min, rng);
      break;
    case InitStrategy::Random:
      model = init_random(static_cast<int>(dim), cfg.rulebase.rules(),
                          cfg.sigma_min, rng);
      break;
    case InitStrategy::Grid: {
      if (!cfg.rulebase.shared)
        throw std::invalid_argument("train: grid init needs a shared rulebase");
      GridInit gi = init_grid(data.x_train, data.y_train,
                              cfg.rulebase.mf_counts, cfg.sigma_min);
      model = std::move(gi.model);
      ties = std::move(gi.ties);
      break;
    }
  }
  return detail::train_loop(std::move(model), data, cfg, ties, rng);
}

// --- the benchmark pipelines -------------------------------------------------

enum class Pipeline {
  RR,
  PcaGpRda,
  PcaGpRdpa,
  PcaFcmRda,
  PcaFcmRdpa,
  FcmRda,
  FcmRdpa,
  RandRdpa,
  KmRdpa,
  FcmRdpaAnt,
  FcmRdpaShared,
  FcmRdpaX,
  FcmRdSgdm,
  FcmRdPSgdm,
  FcmRdAdam,
  FcmRdPAdam,
  FcmRdAdaBelief,
  FcmRdPAdaBound,
};

inline const char* pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::RR: return "RR";
    case Pipeline::PcaGpRda: return "PCA-GP-RDA";
    case Pipeline::PcaGpRdpa: return "PCA-GP-RDpA";
    case Pipeline::PcaFcmRda: return "PCA-FCM-RDA";
    case Pipeline::PcaFcmRdpa: return "PCA-FCM-RDpA";
    case Pipeline::FcmRda: return "FCM-RDA";
    case Pipeline::FcmRdpa: return "FCM-RDpA";
    case Pipeline::RandRdpa: return "rand-RDpA";
    case Pipeline::KmRdpa: return "kM-RDpA";
    case Pipeline::FcmRdpaAnt: return "FCM-RDpA-ant";
    case Pipeline::FcmRdpaShared: return "FCM-RDpA-shared";
    case Pipeline::FcmRdpaX: return "FCM-RDpAx";
    case Pipeline::FcmRdSgdm: return "FCM-RD-SGDM";
    case Pipeline::FcmRdPSgdm: return "FCM-RD-pSGDM";
    case Pipeline::FcmRdAdam: return "FCM-RD-Adam";
    case Pipeline::FcmRdPAdam: return "FCM-RD-pAdam";
    case Pipeline::FcmRdAdaBelief: return "FCM-RD-AdaBelief";
    case Pipeline::FcmRdPAdaBound: return "FCM-RD-pAdaBound";
  }
  return "?";
}

inline Pipeline parse_pipeline(const std::string& name) {
  for (Pipeline p :
       {Pipeline::RR, Pipeline::PcaGpRda, Pipeline::PcaGpRdpa,
        Pipeline::PcaFcmRda, Pipeline::PcaFcmRdpa, Pipeline::FcmRda,
        Pipeline::FcmRdpa, Pipeline::RandRdpa, Pipeline::KmRdpa,
        Pipeline::FcmRdpaAnt, Pipeline::FcmRdpaShared, Pipeline::FcmRdpaX,
        Pipeline::FcmRdSgdm, Pipeline::FcmRdPSgdm, Pipeline::FcmRdAdam,
        Pipeline::FcmRdPAdam, Pipeline::FcmRdAdaBelief,
        Pipeline::FcmRdPAdaBound})
    if (name == pipeline_name(p)) return p;
  throw std::invalid_argument("unknown pipeline '" + name + "'");
}

inline bool pipeline_uses_pca(Pipeline p) {
  return p == Pipeline::PcaGpRda || p == Pipeline::PcaGpRdpa ||
         p == Pipeline::PcaFcmRda || p == Pipeline::PcaFcmRdpa;
}

/// RDA = AdaBound without Powerball; RDpA = AdaBelief with Powerball.
inline OptimizerConfig pipeline_optimizer(Pipeline p) {
  OptimizerConfig cfg;
  switch (p) {
    case Pipeline::PcaGpRda:
    case Pipeline::PcaFcmRda:
    case Pipeline::FcmRda:
      cfg.variant = OptVariant::AdaBound;
      cfg.powerball = false;
      break;
    case Pipeline::FcmRdPAdaBound:
      cfg.variant = OptVariant::AdaBound;
      cfg.powerball = true;
      break;
    case Pipeline::FcmRdSgdm:
      cfg.variant = OptVariant::Sgdm;
      cfg.powerball = false;
      break;
    case Pipeline::FcmRdPSgdm:
      cfg.variant = OptVariant::Sgdm;
      cfg.powerball = true;
      break;
    case Pipeline::FcmRdAdam:
      cfg.variant = OptVariant::Adam;
      cfg.powerball = false;
      break;
    case Pipeline::FcmRdPAdam:
      cfg.variant = OptVariant::Adam;
      cfg.powerball = true;
      break;
    case Pipeline::FcmRdAdaBelief:
      cfg.variant = OptVariant::AdaBelief;
      cfg.powerball = false;
      break;
    default:  // every RDpA pipeline
      cfg.variant = OptVariant::AdaBelief;
      cfg.powerball = true;
      break;
  }
  return cfg;
}

struct HyperParams {
  double alpha = 0.01;
  double drop_p = 0.5;
  double gamma = 0.5;
  double lambda = 0.05;
  int batch_size = 64;
  int iterations = 1000;
  int val_stride = 1;
};

struct PipelineResult {
  bool skipped = false;
  std::string skip_reason;
  TrainReport report;
};

/// Wires preprocessing (PCA to log2(R) dims where the name says so), the
/// initialization strategy, and the optimizer variant for one named pipeline,
/// then trains on the given split. PCA pipelines refuse datasets whose
/// feature count is below log2(R).
inline PipelineResult run_pipeline(const EncodedData& data,
                                   const SplitIndices& idx, Pipeline pipe,
                                   int rules, const HyperParams& hp,
                                   std::uint64_t train_seed) {
  PipelineResult out;

  if (pipe == Pipeline::RR) {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset d = prepare_dataset(data, idx);
    const RidgeModel m = ridge(d.x_train, d.y_train, hp.lambda);
    out.report.test_rmse = rmse(d.y_test, ridge_predict(m, d.x_test));
    out.report.best_iter = 0;
    out.report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return out;
  }

  TrainConfig cfg;
  cfg.optimizer = pipeline_optimizer(pipe);
  cfg.optimizer.alpha = hp.alpha;
  cfg.optimizer.gamma = hp.gamma;
  cfg.lambda = hp.lambda;
  cfg.drop_p = hp.drop_p;
  cfg.batch_size = hp.batch_size;
  cfg.iterations = hp.iterations;
  cfg.val_stride = hp.val_stride;
  cfg.seed = train_seed;

  std::optional<int> pca_dim;
  if (pipeline_uses_pca(pipe)) {
    const int d = proj_dim_for_rules(rules);
    if (d > data.X.cols()) {
      out.skipped = true;
      out.skip_reason = "PCA needs log2(R)=" + std::to_string(d) +
                        " components but only " +
                        std::to_string(data.X.cols()) + " features exist";
      return out;
    }
    pca_dim = d;
  }

  switch (pipe) {
    case Pipeline::PcaGpRda:
    case Pipeline::PcaGpRdpa:
      cfg.init = InitStrategy::Grid;
      cfg.rulebase =
          RulebaseSpec::shared_grid(std::vector<int>(*pca_dim, 2));
      break;
    case Pipeline::RandRdpa:
      cfg.init = InitStrategy::Random;
      cfg.rulebase = RulebaseSpec::independent(rules);
      break;
    case Pipeline::KmRdpa:
      cfg.init = InitStrategy::Kmeans;
      cfg.rulebase = RulebaseSpec::independent(rules);
      break;
    case Pipeline::FcmRdpaAnt:
      cfg.augment = AugmentMode::AntecedentOnly;
      cfg.rulebase = RulebaseSpec::independent(rules);
      break;
    case Pipeline::FcmRdpaShared:
      cfg.augment = AugmentMode::SharedBoth;
      cfg.rulebase = RulebaseSpec::independent(rules);
      break;
    case Pipeline::FcmRdpaX:
      cfg.augment = AugmentMode::SplitBoth;
      cfg.rulebase = RulebaseSpec::independent(rules);
      break;
    default:
      cfg.init = InitStrategy::Fcm;
      cfg.rulebase = RulebaseSpec::independent(rules);
      break;
  }

  const Dataset d = prepare_dataset(data, idx, pca_dim);
  out.report = train(d, cfg);
  return out;
}

}  // namespace fcmrdpa
