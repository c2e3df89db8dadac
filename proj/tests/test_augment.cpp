#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "fcmrdpa/augment.hpp"
#include "fcmrdpa/grad_check.hpp"

using namespace fcmrdpa;
using Catch::Approx;

namespace {

AugmentedTskModel random_augmented(AugmentMode mode, int dim, int rules,
                                   Rng& rng) {
  AugmentedTskModel m;
  m.input_dim = dim;
  m.aug.mode = mode;
  if (mode == AugmentMode::None) {
    m.core = detail::random_smooth_model(rules, dim, dim, rng);
    return m;
  }
  const int d = proj_dim_for_rules(rules);
  m.aug.proj_dim = d;
  std::normal_distribution<double> normal(0.0, 0.5);
  m.aug.proj_a.resize(dim, d);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < d; ++j) m.aug.proj_a(i, j) = normal(rng);
  if (mode == AugmentMode::SplitBoth) {
    m.aug.proj_c.resize(dim, d);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < d; ++j) m.aug.proj_c(i, j) = normal(rng);
  }
  const int con = (mode == AugmentMode::AntecedentOnly) ? dim : dim + d;
  m.core = detail::random_smooth_model(rules, dim + d, con, rng);
  return m;
}

}  // namespace

TEST_CASE("proj_dim_for_rules") {
  CHECK(proj_dim_for_rules(16) == 4);
  CHECK(proj_dim_for_rules(4) == 2);
  CHECK(proj_dim_for_rules(1) == 1);  // floored at 1
  CHECK(proj_dim_for_rules(10) == 3);  // round(log2 10) = 3
  CHECK(proj_dim_for_rules(24) == 5);  // round(4.58) = 5
}

TEST_CASE("augment_forward") {
  Vector x(3);
  x << 1.0, -2.0, 0.5;

  SECTION("none mode returns the input on both sides") {
    AugmentSpec spec;
    const auto [xa, xc] = augment_forward(spec, x);
    CHECK(xa == x);
    CHECK(xc == x);
  }

  SECTION("projected slots come first, original features after") {
    AugmentSpec spec;
    spec.mode = AugmentMode::AntecedentOnly;
    spec.proj_dim = 2;
    spec.proj_a = Matrix::Zero(3, 2);
    spec.proj_a(0, 0) = 1.0;   // first slot = x0
    spec.proj_a(1, 1) = -1.0;  // second slot = -x1
    const auto [xa, xc] = augment_forward(spec, x);
    REQUIRE(xa.size() == 5);
    CHECK(xa[0] == 1.0);
    CHECK(xa[1] == 2.0);
    CHECK(xa.tail(3) == x);
    CHECK(xc == x);  // consequent untouched in this mode
  }

  SECTION("zero projections add all-zero slots") {
    AugmentSpec spec;
    spec.mode = AugmentMode::SharedBoth;
    spec.proj_dim = 2;
    spec.proj_a = Matrix::Zero(3, 2);
    const auto [xa, xc] = augment_forward(spec, x);
    CHECK(xa.head(2).isZero(0.0));
    CHECK(xa == xc);
  }

  SECTION("split mode keeps the two sides independent") {
    Rng rng(1);
    AugmentedTskModel m = random_augmented(AugmentMode::SplitBoth, 3, 4, rng);
    const auto [xa, xc] = augment_forward(m.aug, x);
    CHECK(xa.head(2) != xc.head(2));
    CHECK(xa.tail(3) == xc.tail(3));
  }
}

TEST_CASE("zero projections with neutral slots reproduce the plain model") {
  Rng rng(9);
  const Matrix X = detail::random_batch(30, 3, rng);
  const Vector y = Vector::Random(30);
  Rng ra(4), rb(4);
  const TskModel plain = init_fcm(X, y, 4, FcmParams{}, 1e-3, ra);
  AugmentedTskModel aug =
      init_fcm_augmented(X, y, 4, AugmentMode::SplitBoth, FcmParams{}, 1e-3, rb);
  aug.aug.proj_a.setZero();
  aug.aug.proj_c.setZero();
  for (int i = 0; i < 30; ++i) {
    const Vector x = X.row(i).transpose();
    CHECK(predict(aug, x) == predict(plain, x));
  }
}

TEST_CASE("projection gradient paths") {
  Rng rng(21);
  const int dim = 3, rules = 4;
  const Matrix X = detail::random_batch(8, dim, rng);
  const Vector y = Vector::Random(8);

  SECTION("consequent path vanishes when projected-slot weights are zero") {
    AugmentedTskModel m = random_augmented(AugmentMode::SplitBoth, dim, rules, rng);
    const int d = m.aug.proj_dim;
    m.core.weights.middleCols(1, d).setZero();  // projected consequent slots
    const Vector g = loss_and_gradient(m, X, y, nullptr, 0.0).grad;
    const Eigen::Index pc_off = m.core.param_count() + m.aug.proj_a.size();
    CHECK(g.segment(pc_off, m.aug.proj_c.size()).isZero(0.0));
  }

  SECTION("antecedent path vanishes when all rule outputs coincide") {
    AugmentedTskModel m =
        random_augmented(AugmentMode::AntecedentOnly, dim, rules, rng);
    // identical consequents in every rule: y_r == y for any firing profile
    for (int r = 1; r < rules; ++r)
      m.core.weights.row(r) = m.core.weights.row(0);
    const Vector g = loss_and_gradient(m, X, y, nullptr, 0.0).grad;
    const Eigen::Index pa_off = m.core.param_count();
    CHECK(g.segment(pa_off, m.aug.proj_a.size()).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("shared projection gradient sums the two paths") {
    AugmentedTskModel shared =
        random_augmented(AugmentMode::SharedBoth, dim, rules, rng);
    AugmentedTskModel split = shared;
    split.aug.mode = AugmentMode::SplitBoth;
    split.aug.proj_c = shared.aug.proj_a;  // same values, now independent

    const Vector gs = loss_and_gradient(shared, X, y, nullptr, 0.0).grad;
    const Vector gp = loss_and_gradient(split, X, y, nullptr, 0.0).grad;
    const Eigen::Index np = shared.aug.proj_a.size();
    const Eigen::Index core_n = shared.core.param_count();
    const Vector shared_proj = gs.segment(core_n, np);
    const Vector split_sum =
        gp.segment(core_n, np) + gp.segment(core_n + np, np);
    CHECK((shared_proj - split_sum).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("augmented gradients match finite differences in all modes") {
  Rng rng(33);
  for (AugmentMode mode : {AugmentMode::AntecedentOnly, AugmentMode::SharedBoth,
                           AugmentMode::SplitBoth}) {
    CAPTURE(augment_mode_name(mode));
    const int dim = 4, rules = 8, n = 6;
    AugmentedTskModel model = random_augmented(mode, dim, rules, rng);
    const Matrix X = detail::random_batch(n, dim, rng);
    const Vector y = Vector::Random(n);
    DropMask mask = sample_drop_mask(n, rules, 0.7, rng);

    const Vector analytic = loss_and_gradient(model, X, y, &mask, 0.05).grad;
    AugmentedTskModel probe = model;
    const Vector numeric = finite_difference_gradient(
        [&](const Vector& th) {
          unflatten(probe, th);
          return loss(probe, X, y, &mask, 0.05);
        },
        flatten(model));
    const GradCheckStats stats = compare_gradients(analytic, numeric);
    INFO("rel " << stats.max_rel_err << " abs " << stats.max_small_abs);
    CHECK(stats.pass());
  }
}

TEST_CASE("parameter-count accounting") {
  Rng rng(41);
  const int dim = 5, rules = 8;  // proj_dim = 3
  const int d = proj_dim_for_rules(rules);

  const AugmentedTskModel none = random_augmented(AugmentMode::None, dim, rules, rng);
  CHECK(none.param_count() == rules * (3 * dim + 1));

  const AugmentedTskModel ant =
      random_augmented(AugmentMode::AntecedentOnly, dim, rules, rng);
  CHECK(ant.param_count() ==
        rules * (2 * (dim + d) + dim + 1) + dim * d);

  const AugmentedTskModel both =
      random_augmented(AugmentMode::SharedBoth, dim, rules, rng);
  CHECK(both.param_count() == rules * (3 * (dim + d) + 1) + dim * d);

  const AugmentedTskModel split =
      random_augmented(AugmentMode::SplitBoth, dim, rules, rng);
  CHECK(split.param_count() == rules * (3 * (dim + d) + 1) + 2 * dim * d);
  CHECK(split.param_count() - both.param_count() ==
        static_cast<Eigen::Index>(dim) * d);

  SECTION("flatten covers every parameter exactly once") {
    const Vector theta = flatten(split);
    CHECK(theta.size() == split.param_count());
    AugmentedTskModel copy = split;
    copy.aug.proj_a.setZero();
    copy.core.weights.setZero();
    unflatten(copy, theta);
    CHECK(copy.aug.proj_a == split.aug.proj_a);
    CHECK(copy.aug.proj_c == split.aug.proj_c);
    CHECK(copy.core == split.core);
  }
}

TEST_CASE("augmented model files round-trip") {
  Rng rng(51);
  for (AugmentMode mode : {AugmentMode::None, AugmentMode::AntecedentOnly,
                           AugmentMode::SharedBoth, AugmentMode::SplitBoth}) {
    const AugmentedTskModel m = random_augmented(mode, 3, 4, rng);
    const auto path = (std::filesystem::temp_directory_path() /
                       "fcmrdpa_aug_test.model")
                          .string();
    save_model(path, m);
    const AugmentedTskModel loaded = load_augmented_model(path);
    CHECK(loaded.core == m.core);
    CHECK(loaded.aug.mode == m.aug.mode);
    CHECK(loaded.aug.proj_a == m.aug.proj_a);
    CHECK(loaded.aug.proj_c == m.aug.proj_c);
    CHECK(loaded.input_dim == m.input_dim);
    std::filesystem::remove(path);
  }
}
