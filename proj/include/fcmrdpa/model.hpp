#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "fcmrdpa/rng.hpp"

namespace fcmrdpa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// Row-major so a mask row can be handed around as a contiguous pointer.
using BoolMatrix =
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Floor applied to every Gaussian MF width after initialization and after
/// every optimizer step.
inline constexpr double kSigmaMin = 1e-3;

/// Underflow guard: when the masked firing sum drops below this, the
/// defuzzifier falls back to a uniform average over the preserved rules.
inline constexpr double kFiringGuard = 1e-12;

/// First-order TSK rulebase with Gaussian antecedents.
///
/// Antecedent and consequent inputs are normally the same vector; the two
/// dimensions are kept independent so feature-projection concatenation
/// (augment.hpp) can reuse the same parameter block.
struct TskModel {
  Matrix centers;  ///< R x Ma Gaussian MF centers
  Matrix sigmas;   ///< R x Ma Gaussian MF widths, always >= the sigma floor
  Matrix weights;  ///< R x (Mc+1) consequent parameters; column 0 is the bias

  int rules() const { return static_cast<int>(centers.rows()); }
  int antecedent_dim() const { return static_cast<int>(centers.cols()); }
  int consequent_dim() const { return static_cast<int>(weights.cols()) - 1; }

  /// Total parameter count; equals R*(3M+1) when both input dims are M.
  Eigen::Index param_count() const {
    return centers.size() + sigmas.size() + weights.size();
  }

  bool operator==(const TskModel& o) const {
    return centers == o.centers && sigmas == o.sigmas && weights == o.weights;
  }
};

inline TskModel make_tsk_model(int rules, int ant_dim, int con_dim) {
  if (rules < 1 || ant_dim < 1 || con_dim < 1)
    throw std::invalid_argument("make_tsk_model: dimensions must be positive");
  TskModel m;
  m.centers = Matrix::Zero(rules, ant_dim);
  m.sigmas = Matrix::Ones(rules, ant_dim);
  m.weights = Matrix::Zero(rules, con_dim + 1);
  return m;
}

/// Per-sample, per-rule DropRule mask; true keeps the rule for that sample.
/// Every row is guaranteed to preserve at least one rule.
struct DropMask {
  BoolMatrix keep;

  const bool* row(Eigen::Index i) const { return keep.data() + i * keep.cols(); }
};

/// Each entry is preserved independently with probability p; all-false rows
/// are resampled so the invariant above holds.
inline DropMask sample_drop_mask(int n, int rules, double p, Rng& rng) {
  if (!(p > 0.0 && p <= 1.0))
    throw std::invalid_argument("sample_drop_mask: p must be in (0,1]");
  if (n < 1 || rules < 1)
    throw std::invalid_argument("sample_drop_mask: empty mask requested");
  DropMask mask;
  mask.keep.resize(n, rules);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    bool any = false;
    do {
      any = false;
      for (int r = 0; r < rules; ++r) {
        const bool keep = unit(rng) <= p;
        mask.keep(i, r) = keep;
        any |= keep;
      }
    } while (!any);
  }
  return mask;
}

/// Gaussian membership grade exp(-(x-c)^2 / (2 sigma^2)).
inline double membership(double x, double c, double sigma) {
  if (!(std::isfinite(x) && std::isfinite(c) && std::isfinite(sigma)))
    throw std::domain_error("membership: non-finite input");
  if (!(sigma > 0.0))
    throw std::domain_error("membership: sigma must be positive");
  const double z = (x - c) / sigma;
  return std::exp(-0.5 * z * z);
}

/// Rule firing levels for one antecedent input: the product of the rule's
/// membership grades, computed as one exp over the summed exponents.
/// Rules dropped by mask_row fire at exactly zero.
inline Vector firing_levels(const TskModel& model,
                            const Eigen::Ref<const Vector>& x,
                            const bool* mask_row = nullptr) {
  if (x.size() != model.antecedent_dim())
    throw std::invalid_argument("firing_levels: input dimension mismatch");
  if (!x.allFinite())
    throw std::domain_error("firing_levels: non-finite input");
  const int rules = model.rules();
  const int dim = model.antecedent_dim();
  Vector f(rules);
  for (int r = 0; r < rules; ++r) {
    if (mask_row && !mask_row[r]) {
      f[r] = 0.0;
      continue;
    }
    double e = 0.0;
    for (int m = 0; m < dim; ++m) {
      const double z = (x[m] - model.centers(r, m)) / model.sigmas(r, m);
      e += z * z;
    }
    f[r] = std::exp(-0.5 * e);
  }
  return f;
}

namespace detail {

/// Everything the forward pass of one sample produces, kept around so the
/// backward pass does not recompute it.
struct SampleEval {
  Vector firing;    ///< masked firing levels
  Vector rule_out;  ///< y_r for every rule
  Vector q;         ///< defuzzifier weights; exactly zero for dropped rules
  double firing_sum = 0.0;
  double y = 0.0;
  bool degenerate = false;  ///< uniform fallback taken (firing sum underflow)
};

inline SampleEval eval_sample(const TskModel& model,
                              const Eigen::Ref<const Vector>& xa,
                              const Eigen::Ref<const Vector>& xc,
                              const bool* mask_row) {
  SampleEval ev;
  ev.firing = firing_levels(model, xa, mask_row);
  ev.rule_out =
      model.weights.col(0) +
      model.weights.rightCols(model.consequent_dim()) * xc;
  ev.firing_sum = ev.firing.sum();
  const int rules = model.rules();
  if (ev.firing_sum < kFiringGuard) {
    ev.degenerate = true;
    ev.q = Vector::Zero(rules);
    int preserved = 0;
    for (int r = 0; r < rules; ++r)
      if (!mask_row || mask_row[r]) ++preserved;
    const double w = 1.0 / preserved;  // DropMask guarantees preserved >= 1
    for (int r = 0; r < rules; ++r)
      if (!mask_row || mask_row[r]) ev.q[r] = w;
  } else {
    ev.q = ev.firing / ev.firing_sum;
  }
  ev.y = ev.q.dot(ev.rule_out);
  return ev;
}

/// Backward pass for one sample. err is dL/dy_hat for this sample. Adds the
/// parameter gradients into gC/gS/gW; when g_xa / g_xc are given, also adds
/// the loss gradient w.r.t. the antecedent and consequent inputs (used by
/// the feature-projection layer).
inline void accumulate_sample_gradient(const TskModel& model,
                                       const Eigen::Ref<const Vector>& xa,
                                       const Eigen::Ref<const Vector>& xc,
                                       double err, const SampleEval& ev,
                                       Matrix& gC, Matrix& gS, Matrix& gW,
                                       Vector* g_xa = nullptr,
                                       Vector* g_xc = nullptr) {
  const int rules = model.rules();
  const int ant = model.antecedent_dim();
  const int con = model.consequent_dim();

  for (int r = 0; r < rules; ++r) {
    const double qr = ev.q[r];
    if (qr == 0.0) continue;  // dropped rule: no data-fit contribution
    const double c0 = err * qr;
    gW(r, 0) += c0;
    gW.row(r).tail(con) += c0 * xc.transpose();
  }
  if (g_xc)
    *g_xc += err * (model.weights.rightCols(con).transpose() * ev.q);

  // Antecedent path. In the underflow-fallback region the defuzzifier
  // weights are locally constant, so the firing levels carry no gradient.
  if (ev.degenerate) return;
  for (int r = 0; r < rules; ++r) {
    const double fr = ev.firing[r];
    if (fr == 0.0) continue;
    const double phi = err * (ev.rule_out[r] - ev.y) / ev.firing_sum;  // dL/df_r
    if (phi == 0.0) continue;
    for (int m = 0; m < ant; ++m) {
      const double s = model.sigmas(r, m);
      const double d = xa[m] - model.centers(r, m);
      const double common = phi * fr * d / (s * s);
      gC(r, m) += common;
      gS(r, m) += common * d / s;
      if (g_xa) (*g_xa)[m] -= common;
    }
  }
}

}  // namespace detail

/// TSK output for one sample with separate antecedent/consequent inputs.
inline double predict(const TskModel& model, const Eigen::Ref<const Vector>& xa,
                      const Eigen::Ref<const Vector>& xc,
                      const bool* mask_row = nullptr) {
  if (xc.size() != model.consequent_dim())
    throw std::invalid_argument("predict: consequent dimension mismatch");
  return detail::eval_sample(model, xa, xc, mask_row).y;
}

/// TSK output for one sample (antecedents and consequents share x).
inline double predict(const TskModel& model, const Eigen::Ref<const Vector>& x,
                      const bool* mask_row = nullptr) {
  if (model.antecedent_dim() != model.consequent_dim())
    throw std::invalid_argument(
        "predict: split-input model needs both inputs");
  return predict(model, x, x, mask_row);
}

/// Batch prediction with all rules active (evaluation never applies
/// DropRule). X is N x M with antecedents and consequents sharing rows.
inline Vector predict_batch(const TskModel& model,
                            const Eigen::Ref<const Matrix>& X) {
  const int dim = model.antecedent_dim();
  if (model.consequent_dim() != dim || X.cols() != dim)
    throw std::invalid_argument("predict_batch: dimension mismatch");
  if (!X.allFinite())
    throw std::domain_error("predict_batch: non-finite input");
  const int n = static_cast<int>(X.rows());
  const int rules = model.rules();
  Matrix F(n, rules);
  for (int r = 0; r < rules; ++r) {
    F.col(r) = (-0.5 *
                ((X.rowwise() - model.centers.row(r)).array().rowwise() /
                 model.sigmas.row(r).array())
                    .square()
                    .rowwise()
                    .sum())
                   .exp();
  }
  Matrix rule_out =
      (X * model.weights.rightCols(dim).transpose()).rowwise() +
      model.weights.col(0).transpose();
  Vector out(n);
  for (int i = 0; i < n; ++i) {
    const double s = F.row(i).sum();
    out[i] = s < kFiringGuard ? rule_out.row(i).mean()
                              : F.row(i).dot(rule_out.row(i)) / s;
  }
  return out;
}

/// L2-regularized batch loss, Eq.-style plain sum over the mini-batch:
///   L = 1/2 sum_n (y_n - yhat_n)^2 + lambda/2 sum_r sum_{m>=1} w_{r,m}^2.
/// Biases w_{r,0} are not penalized.
inline double loss(const TskModel& model, const Eigen::Ref<const Matrix>& X,
                   const Eigen::Ref<const Vector>& y,
                   const DropMask* mask = nullptr, double lambda = 0.0) {
  if (X.rows() == 0) throw std::invalid_argument("loss: empty batch");
  if (X.rows() != y.size())
    throw std::invalid_argument("loss: sample/target count mismatch");
  if (mask && mask->keep.rows() != X.rows())
    throw std::invalid_argument("loss: mask row count mismatch");
  if (lambda < 0.0) throw std::invalid_argument("loss: lambda must be >= 0");
  double fit = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    const double yh =
        detail::eval_sample(model, x, x, mask ? mask->row(i) : nullptr).y;
    const double e = y[i] - yh;
    fit += e * e;
  }
  const int con = model.consequent_dim();
  return 0.5 * fit +
         0.5 * lambda * model.weights.rightCols(con).squaredNorm();
}

// ---------------------------------------------------------------------------
// Flat parameter vector. Fixed layout: all centers row-major, then all
// sigmas row-major, then all weight rows (bias first). Slot indices are pure
// functions of (R, Ma, Mc).

struct ParamLayout {
  int rules = 0;
  int ant_dim = 0;
  int con_dim = 0;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(rules) * (2 * ant_dim + con_dim + 1);
  }
  Eigen::Index sigma_offset() const {
    return static_cast<Eigen::Index>(rules) * ant_dim;
  }
  Eigen::Index weight_offset() const {
    return static_cast<Eigen::Index>(2) * rules * ant_dim;
  }
  Eigen::Index center_index(int r, int m) const {
    return static_cast<Eigen::Index>(r) * ant_dim + m;
  }
  Eigen::Index sigma_index(int r, int m) const {
    return sigma_offset() + static_cast<Eigen::Index>(r) * ant_dim + m;
  }
  Eigen::Index weight_index(int r, int j) const {
    return weight_offset() + static_cast<Eigen::Index>(r) * (con_dim + 1) + j;
  }
};

inline ParamLayout layout_of(const TskModel& model) {
  return {model.rules(), model.antecedent_dim(), model.consequent_dim()};
}

inline void flatten_into(const TskModel& model, Eigen::Ref<Vector> theta) {
  const ParamLayout lay = layout_of(model);
  for (int r = 0; r < lay.rules; ++r)
    for (int m = 0; m < lay.ant_dim; ++m) {
      theta[lay.center_index(r, m)] = model.centers(r, m);
      theta[lay.sigma_index(r, m)] = model.sigmas(r, m);
    }
  for (int r = 0; r < lay.rules; ++r)
    for (int j = 0; j <= lay.con_dim; ++j)
      theta[lay.weight_index(r, j)] = model.weights(r, j);
}

inline Vector flatten(const TskModel& model) {
  Vector theta(model.param_count());
  flatten_into(model, theta);
  return theta;
}

inline void unflatten(TskModel& model, const Eigen::Ref<const Vector>& theta) {
  const ParamLayout lay = layout_of(model);
  if (theta.size() != lay.size())
    throw std::invalid_argument("unflatten: parameter count mismatch");
  for (int r = 0; r < lay.rules; ++r)
    for (int m = 0; m < lay.ant_dim; ++m) {
      model.centers(r, m) = theta[lay.center_index(r, m)];
      model.sigmas(r, m) = theta[lay.sigma_index(r, m)];
    }
  for (int r = 0; r < lay.rules; ++r)
    for (int j = 0; j <= lay.con_dim; ++j)
      model.weights(r, j) = theta[lay.weight_index(r, j)];
}

inline void apply_sigma_floor(TskModel& model, double sigma_min = kSigmaMin) {
  model.sigmas = model.sigmas.cwiseMax(sigma_min);
}

/// Sigma floor applied directly to a flat parameter vector.
inline void apply_sigma_floor_flat(const ParamLayout& lay,
                                   Eigen::Ref<Vector> theta,
                                   double sigma_min = kSigmaMin) {
  const Eigen::Index len = static_cast<Eigen::Index>(lay.rules) * lay.ant_dim;
  theta.segment(lay.sigma_offset(), len) =
      theta.segment(lay.sigma_offset(), len).cwiseMax(sigma_min);
}

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/// Analytic gradient of `loss` w.r.t. the flat parameter vector. Dropped
/// rules contribute no data-fit gradient; the regularizer term lambda*w_{r,m}
/// (m >= 1) is added once per batch.
inline LossGrad loss_and_gradient(const TskModel& model,
                                  const Eigen::Ref<const Matrix>& X,
                                  const Eigen::Ref<const Vector>& y,
                                  const DropMask* mask = nullptr,
                                  double lambda = 0.0) {
  if (X.rows() == 0) throw std::invalid_argument("gradient: empty batch");
  if (X.rows() != y.size())
    throw std::invalid_argument("gradient: sample/target count mismatch");
  if (mask && mask->keep.rows() != X.rows())
    throw std::invalid_argument("gradient: mask row count mismatch");
  if (lambda < 0.0)
    throw std::invalid_argument("gradient: lambda must be >= 0");

  const int rules = model.rules();
  const int ant = model.antecedent_dim();
  const int con = model.consequent_dim();
  Matrix gC = Matrix::Zero(rules, ant);
  Matrix gS = Matrix::Zero(rules, ant);
  Matrix gW = Matrix::Zero(rules, con + 1);

  double fit = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    const bool* row = mask ? mask->row(i) : nullptr;
    const detail::SampleEval ev = detail::eval_sample(model, x, x, row);
    const double err = ev.y - y[i];
    fit += err * err;
    detail::accumulate_sample_gradient(model, x, x, err, ev, gC, gS, gW);
  }
  gW.rightCols(con) += lambda * model.weights.rightCols(con);

  LossGrad out;
  out.loss = 0.5 * fit +
             0.5 * lambda * model.weights.rightCols(con).squaredNorm();
  out.grad.resize(model.param_count());
  const ParamLayout lay = layout_of(model);
  for (int r = 0; r < rules; ++r)
    for (int m = 0; m < ant; ++m) {
      out.grad[lay.center_index(r, m)] = gC(r, m);
      out.grad[lay.sigma_index(r, m)] = gS(r, m);
    }
  for (int r = 0; r < rules; ++r)
    for (int j = 0; j <= con; ++j) out.grad[lay.weight_index(r, j)] = gW(r, j);
  return out;
}

inline Vector gradient(const TskModel& model, const Eigen::Ref<const Matrix>& X,
                       const Eigen::Ref<const Vector>& y,
                       const DropMask* mask = nullptr, double lambda = 0.0) {
  return loss_and_gradient(model, X, y, mask, lambda).grad;
}

}  // namespace fcmrdpa
