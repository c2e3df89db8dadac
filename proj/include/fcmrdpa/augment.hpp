#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "fcmrdpa/init.hpp"
#include "fcmrdpa/model.hpp"
#include "fcmrdpa/model_io.hpp"

namespace fcmrdpa {

/// Which rule inputs receive the trainable linear feature projection.
enum class AugmentMode {
  None,            ///< antecedents and consequents both see x
  AntecedentOnly,  ///< antecedents see [Px x], consequents see x
  SharedBoth,      ///< one projection feeds both sides
  SplitBoth,       ///< independent projections per side
};

inline const char* augment_mode_name(AugmentMode m) {
  switch (m) {
    case AugmentMode::None: return "none";
    case AugmentMode::AntecedentOnly: return "antecedent_only";
    case AugmentMode::SharedBoth: return "shared_both";
    case AugmentMode::SplitBoth: return "split_both";
  }
  return "?";
}

/// Projection width used throughout: round(log2 R), at least 1.
inline int proj_dim_for_rules(int rules) {
  return std::max(1, static_cast<int>(std::lround(std::log2(
                          static_cast<double>(rules)))));
}

struct AugmentSpec {
  AugmentMode mode = AugmentMode::None;
  int proj_dim = 0;
  Matrix proj_a;  ///< M x proj_dim, antecedent-side projection
  Matrix proj_c;  ///< M x proj_dim, consequent-side (SplitBoth only)

  bool has_antecedent() const { return mode != AugmentMode::None; }
  bool has_consequent() const {
    return mode == AugmentMode::SharedBoth || mode == AugmentMode::SplitBoth;
  }
  Eigen::Index extra_params() const {
    return proj_a.size() + proj_c.size();
  }
};

/// Maps an input to the (antecedent, consequent) pair the rulebase sees.
/// Projected slots come first, the original features after them.
inline std::pair<Vector, Vector> augment_forward(
    const AugmentSpec& spec, const Eigen::Ref<const Vector>& x) {
  if (spec.mode == AugmentMode::None) return {x, x};
  const Eigen::Index m = x.size(), d = spec.proj_dim;
  Vector xa(d + m);
  xa.head(d) = spec.proj_a.transpose() * x;
  xa.tail(m) = x;
  if (spec.mode == AugmentMode::AntecedentOnly) return {std::move(xa), x};
  if (spec.mode == AugmentMode::SharedBoth) return {xa, xa};
  Vector xc(d + m);
  xc.head(d) = spec.proj_c.transpose() * x;
  xc.tail(m) = x;
  return {std::move(xa), std::move(xc)};
}

/// Chain rule through the concatenation for one sample: g_ant / g_con are the
/// loss gradients w.r.t. the projected antecedent / consequent slots. The
/// antecedent path feeds proj_a, the consequent path feeds proj_c when split
/// or proj_a again when shared.
inline void augment_accumulate_projection_gradient(
    const AugmentSpec& spec, const Eigen::Ref<const Vector>& x,
    const Eigen::Ref<const Vector>& g_ant, const Eigen::Ref<const Vector>& g_con,
    Matrix& grad_proj_a, Matrix& grad_proj_c) {
  switch (spec.mode) {
    case AugmentMode::None:
      break;
    case AugmentMode::AntecedentOnly:
      grad_proj_a += x * g_ant.transpose();
      break;
    case AugmentMode::SharedBoth:
      grad_proj_a += x * (g_ant + g_con).transpose();
      break;
    case AugmentMode::SplitBoth:
      grad_proj_a += x * g_ant.transpose();
      grad_proj_c += x * g_con.transpose();
      break;
  }
}

/// TSK rulebase over augmented inputs. The projections are ordinary trainable
/// parameters appended to the core's flat vector (proj_a row-major, then
/// proj_c when present).
struct AugmentedTskModel {
  TskModel core;
  AugmentSpec aug;
  int input_dim = 0;  ///< dimension of the raw x

  Eigen::Index param_count() const {
    return core.param_count() + aug.extra_params();
  }
};

inline double predict(const AugmentedTskModel& model,
                      const Eigen::Ref<const Vector>& x,
                      const bool* mask_row = nullptr) {
  if (x.size() != model.input_dim)
    throw std::invalid_argument("predict: input dimension mismatch");
  const auto [xa, xc] = augment_forward(model.aug, x);
  return predict(model.core, xa, xc, mask_row);
}

inline Vector predict_batch(const AugmentedTskModel& model,
                            const Eigen::Ref<const Matrix>& X) {
  Vector out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    out[i] = predict(model, X.row(i).transpose());
  return out;
}

inline double loss(const AugmentedTskModel& model,
                   const Eigen::Ref<const Matrix>& X,
                   const Eigen::Ref<const Vector>& y,
                   const DropMask* mask = nullptr, double lambda = 0.0) {
  if (X.rows() == 0) throw std::invalid_argument("loss: empty batch");
  if (X.rows() != y.size())
    throw std::invalid_argument("loss: sample/target count mismatch");
  double fit = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto [xa, xc] = augment_forward(model.aug, X.row(i).transpose());
    const double yh =
        detail::eval_sample(model.core, xa, xc, mask ? mask->row(i) : nullptr)
            .y;
    const double e = y[i] - yh;
    fit += e * e;
  }
  const int con = model.core.consequent_dim();
  return 0.5 * fit +
         0.5 * lambda * model.core.weights.rightCols(con).squaredNorm();
}

inline Vector flatten(const AugmentedTskModel& model) {
  Vector theta(model.param_count());
  flatten_into(model.core, theta.head(model.core.param_count()));
  Eigen::Index k = model.core.param_count();
  for (Eigen::Index i = 0; i < model.aug.proj_a.rows(); ++i)
    for (Eigen::Index j = 0; j < model.aug.proj_a.cols(); ++j)
      theta[k++] = model.aug.proj_a(i, j);
  for (Eigen::Index i = 0; i < model.aug.proj_c.rows(); ++i)
    for (Eigen::Index j = 0; j < model.aug.proj_c.cols(); ++j)
      theta[k++] = model.aug.proj_c(i, j);
  return theta;
}

inline void unflatten(AugmentedTskModel& model,
                      const Eigen::Ref<const Vector>& theta) {
  if (theta.size() != model.param_count())
    throw std::invalid_argument("unflatten: parameter count mismatch");
  unflatten(model.core, theta.head(model.core.param_count()));
  Eigen::Index k = model.core.param_count();
  for (Eigen::Index i = 0; i < model.aug.proj_a.rows(); ++i)
    for (Eigen::Index j = 0; j < model.aug.proj_a.cols(); ++j)
      model.aug.proj_a(i, j) = theta[k++];
  for (Eigen::Index i = 0; i < model.aug.proj_c.rows(); ++i)
    for (Eigen::Index j = 0; j < model.aug.proj_c.cols(); ++j)
      model.aug.proj_c(i, j) = theta[k++];
}

inline void apply_sigma_floor(AugmentedTskModel& model,
                              double sigma_min = kSigmaMin) {
  apply_sigma_floor(model.core, sigma_min);
}

inline LossGrad loss_and_gradient(const AugmentedTskModel& model,
                                  const Eigen::Ref<const Matrix>& X,
                                  const Eigen::Ref<const Vector>& y,
                                  const DropMask* mask = nullptr,
                                  double lambda = 0.0) {
  if (X.rows() == 0) throw std::invalid_argument("gradient: empty batch");
  if (X.rows() != y.size())
    throw std::invalid_argument("gradient: sample/target count mismatch");
  if (mask && mask->keep.rows() != X.rows())
    throw std::invalid_argument("gradient: mask row count mismatch");

  const TskModel& core = model.core;
  const int rules = core.rules();
  const int ant = core.antecedent_dim();
  const int con = core.consequent_dim();
  const int d = model.aug.proj_dim;
  Matrix gC = Matrix::Zero(rules, ant);
  Matrix gS = Matrix::Zero(rules, ant);
  Matrix gW = Matrix::Zero(rules, con + 1);
  Matrix gPa = Matrix::Zero(model.aug.proj_a.rows(), model.aug.proj_a.cols());
  Matrix gPc = Matrix::Zero(model.aug.proj_c.rows(), model.aug.proj_c.cols());

  const bool want_inputs = model.aug.mode != AugmentMode::None;
  double fit = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    const auto [xa, xc] = augment_forward(model.aug, x);
    const bool* row = mask ? mask->row(i) : nullptr;
    const detail::SampleEval ev = detail::eval_sample(core, xa, xc, row);
    const double err = ev.y - y[i];
    fit += err * err;
    if (want_inputs) {
      Vector g_xa = Vector::Zero(ant);
      Vector g_xc = Vector::Zero(con);
      detail::accumulate_sample_gradient(core, xa, xc, err, ev, gC, gS, gW,
                                         &g_xa, &g_xc);
      const Vector g_ant = g_xa.head(d);
      const Vector g_con = model.aug.has_consequent()
                               ? Vector(g_xc.head(d))
                               : Vector(Vector::Zero(d));
      augment_accumulate_projection_gradient(model.aug, x, g_ant, g_con, gPa,
                                             gPc);
    } else {
      detail::accumulate_sample_gradient(core, xa, xc, err, ev, gC, gS, gW);
    }
  }
  gW.rightCols(con) += lambda * core.weights.rightCols(con);

  LossGrad out;
  out.loss =
      0.5 * fit + 0.5 * lambda * core.weights.rightCols(con).squaredNorm();
  out.grad.resize(model.param_count());
  const ParamLayout lay = layout_of(core);
  for (int r = 0; r < rules; ++r)
    for (int m = 0; m < ant; ++m) {
      out.grad[lay.center_index(r, m)] = gC(r, m);
      out.grad[lay.sigma_index(r, m)] = gS(r, m);
    }
  for (int r = 0; r < rules; ++r)
    for (int j = 0; j <= con; ++j) out.grad[lay.weight_index(r, j)] = gW(r, j);
  Eigen::Index k = core.param_count();
  for (Eigen::Index i = 0; i < gPa.rows(); ++i)
    for (Eigen::Index j = 0; j < gPa.cols(); ++j) out.grad[k++] = gPa(i, j);
  for (Eigen::Index i = 0; i < gPc.rows(); ++i)
    for (Eigen::Index j = 0; j < gPc.cols(); ++j) out.grad[k++] = gPc(i, j);
  return out;
}

/// FCM-initialized augmented model. The clustering sees only the original
/// features; augmented antecedent slots start neutral (center 0, sigma 1),
/// augmented consequent weights start at 0, and projection entries are drawn
/// uniformly from [-1/sqrt(M), 1/sqrt(M)] (proj_a first, row-major).
inline AugmentedTskModel init_fcm_augmented(const Eigen::Ref<const Matrix>& X,
                                            const Eigen::Ref<const Vector>& y,
                                            int rules, AugmentMode mode,
                                            const FcmParams& params,
                                            double sigma_min, Rng& rng) {
  const int m = static_cast<int>(X.cols());
  const TskModel base = init_fcm(X, y, rules, params, sigma_min, rng);

  AugmentedTskModel model;
  model.input_dim = m;
  model.aug.mode = mode;
  if (mode == AugmentMode::None) {
    model.core = base;
    return model;
  }

  const int d = proj_dim_for_rules(rules);
  model.aug.proj_dim = d;
  const double bound = 1.0 / std::sqrt(static_cast<double>(m));
  std::uniform_real_distribution<double> u(-bound, bound);
  model.aug.proj_a.resize(m, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) model.aug.proj_a(i, j) = u(rng);
  if (mode == AugmentMode::SplitBoth) {
    model.aug.proj_c.resize(m, d);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < d; ++j) model.aug.proj_c(i, j) = u(rng);
  }

  const int con = (mode == AugmentMode::AntecedentOnly) ? m : m + d;
  model.core = make_tsk_model(rules, m + d, con);
  model.core.centers.leftCols(d).setZero();
  model.core.centers.rightCols(m) = base.centers;
  model.core.sigmas.leftCols(d).setOnes();
  model.core.sigmas.rightCols(m) = base.sigmas;
  model.core.weights.setZero();
  model.core.weights.col(0) = base.weights.col(0);
  return model;
}

// --- serialization ---------------------------------------------------------

inline void save_model(const std::string& path,
                       const AugmentedTskModel& model) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_model(os, model.core);
  os << "augment " << augment_mode_name(model.aug.mode) << '\n';
  os << "input_dim " << model.input_dim << '\n';
  if (model.aug.mode != AugmentMode::None) {
    os << "proj_dim " << model.aug.proj_dim << '\n';
    detail::write_matrix(os, "proj_a", model.aug.proj_a);
    if (model.aug.mode == AugmentMode::SplitBoth)
      detail::write_matrix(os, "proj_c", model.aug.proj_c);
  }
  os << "end\n";
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline AugmentedTskModel load_augmented_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  AugmentedTskModel model;
  model.core = load_tsk_model(is);
  std::string line;
  if (!std::getline(is, line) || line.rfind("augment ", 0) != 0)
    throw std::runtime_error("model file: missing augment section");
  const std::string mode = line.substr(8);
  if (mode == "none") model.aug.mode = AugmentMode::None;
  else if (mode == "antecedent_only") model.aug.mode = AugmentMode::AntecedentOnly;
  else if (mode == "shared_both") model.aug.mode = AugmentMode::SharedBoth;
  else if (mode == "split_both") model.aug.mode = AugmentMode::SplitBoth;
  else throw std::runtime_error("model file: unknown augment mode " + mode);
  model.input_dim = static_cast<int>(detail::read_keyed_int(is, "input_dim"));
  if (model.aug.mode != AugmentMode::None) {
    model.aug.proj_dim =
        static_cast<int>(detail::read_keyed_int(is, "proj_dim"));
    model.aug.proj_a = detail::read_matrix(is, "proj_a", model.input_dim,
                                           model.aug.proj_dim);
    if (model.aug.mode == AugmentMode::SplitBoth)
      model.aug.proj_c = detail::read_matrix(is, "proj_c", model.input_dim,
                                             model.aug.proj_dim);
  }
  return model;
}

}  // namespace fcmrdpa
