#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <limits>

#include "fcmrdpa/grad_check.hpp"
#include "fcmrdpa/model.hpp"
#include "fcmrdpa/model_io.hpp"
#include "oracles.hpp"

using namespace fcmrdpa;
using Catch::Approx;

namespace {

TskModel random_model(int rules, int dim, Rng& rng) {
  return detail::random_smooth_model(rules, dim, dim, rng);
}

}  // namespace

TEST_CASE("membership grade") {
  CHECK(membership(2.5, 2.5, 0.7) == 1.0);
  CHECK(membership(1.0 + 2.0, 1.0, 2.0) == Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(membership(3.0, 1.0, 2.0) == Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(membership(0.0, 5.0, 1.0) < 1e-5);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(membership(nan, 0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(membership(0.0, nan, 1.0), std::domain_error);
  CHECK_THROWS_AS(membership(0.0, 0.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(membership(0.0, 0.0, -1.0), std::domain_error);
}

TEST_CASE("firing levels") {
  SECTION("single MF at center fires fully") {
    TskModel m = make_tsk_model(1, 1, 1);
    m.centers(0, 0) = 3.0;
    Vector x(1);
    x << 3.0;
    CHECK(firing_levels(m, x)[0] == 1.0);
  }

  SECTION("firing is the product of the membership grades") {
    TskModel m = make_tsk_model(1, 2, 2);
    m.centers << 0.0, 1.0;
    m.sigmas << 1.0, 0.5;
    Vector x(2);
    x << 0.8, 1.7;
    const double expect =
        membership(0.8, 0.0, 1.0) * membership(1.7, 1.0, 0.5);
    CHECK(firing_levels(m, x)[0] == Approx(expect).epsilon(1e-13));
  }

  SECTION("matches the naive oracle on random models") {
    Rng rng(42);
    for (int rep = 0; rep < 20; ++rep) {
      TskModel m = random_model(4, 3, rng);
      const Matrix X = detail::random_batch(1, 3, rng);
      const Vector f = firing_levels(m, X.row(0).transpose());
      const auto naive = oracles::naive_firing(m, X.row(0).transpose());
      for (int r = 0; r < 4; ++r)
        CHECK(f[r] == Approx(naive[r]).epsilon(1e-12));
    }
  }

  SECTION("masked rules fire at exactly zero") {
    Rng rng(7);
    TskModel m = random_model(3, 2, rng);
    Vector x(2);
    x << 0.1, -0.2;
    const bool keep[3] = {true, false, true};
    const Vector f = firing_levels(m, x, keep);
    CHECK(f[1] == 0.0);
    CHECK(f[0] > 0.0);
  }

  SECTION("non-finite input is rejected") {
    TskModel m = make_tsk_model(1, 1, 1);
    Vector x(1);
    x << std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(firing_levels(m, x), std::domain_error);
  }
}

TEST_CASE("predict") {
  SECTION("one rule: output equals that rule's consequent exactly") {
    TskModel m = make_tsk_model(1, 2, 2);
    m.centers << 0.4, -1.0;
    m.sigmas << 1.3, 0.8;
    m.weights << 2.0, -1.5, 0.25;
    Vector x(2);
    x << 0.9, 2.0;
    CHECK(predict(m, x) == 2.0 - 1.5 * 0.9 + 0.25 * 2.0);
  }

  SECTION("two rules with equal firing average their consequents") {
    TskModel m = make_tsk_model(2, 1, 1);
    m.centers << -1.0, 1.0;
    m.sigmas << 1.0, 1.0;
    m.weights << 2.0, 0.0, 4.0, 0.0;
    Vector x(1);
    x << 0.0;  // symmetric between the two centers
    CHECK(predict(m, x) == 3.0);
  }

  SECTION("matches the direct transcription of the model equations") {
    Rng rng(11);
    for (int rep = 0; rep < 30; ++rep) {
      TskModel m = random_model(3, 2, rng);
      const Matrix X = detail::random_batch(1, 2, rng);
      const Vector x = X.row(0).transpose();
      CHECK(predict(m, x) ==
            Approx(oracles::naive_predict(m, x)).epsilon(1e-12));
    }
  }

  SECTION("prediction stays within the preserved rule outputs") {
    Rng rng(13);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
      TskModel m = random_model(5, 3, rng);
      const Vector x = detail::random_batch(1, 3, rng).row(0).transpose();
      DropMask mask = sample_drop_mask(1, 5, 0.6, rng);
      const auto ev = detail::eval_sample(m, x, x, mask.row(0));
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int r = 0; r < 5; ++r) {
        if (!mask.keep(0, r)) continue;
        lo = std::min(lo, ev.rule_out[r]);
        hi = std::max(hi, ev.rule_out[r]);
      }
      CHECK(ev.y >= lo - 1e-12);
      CHECK(ev.y <= hi + 1e-12);
    }
  }

  SECTION("underflow guard: all-zero firing falls back to a uniform average") {
    TskModel m = make_tsk_model(2, 1, 1);
    m.centers << 0.0, 1.0;
    m.sigmas << 1e-3, 1e-3;  // x far away underflows both rules
    m.weights << 2.0, 0.0, 4.0, 0.0;
    Vector x(1);
    x << 500.0;
    CHECK(firing_levels(m, x).sum() < kFiringGuard);
    CHECK(predict(m, x) == 3.0);

    // batch path takes the same fallback
    Matrix X(1, 1);
    X << 500.0;
    CHECK(predict_batch(m, X)[0] == 3.0);
  }
}

TEST_CASE("batch prediction agrees with per-sample prediction") {
  Rng rng(3);
  TskModel m = random_model(4, 3, rng);
  const Matrix X = detail::random_batch(16, 3, rng);
  const Vector out = predict_batch(m, X);
  for (int i = 0; i < 16; ++i)
    CHECK(out[i] == Approx(predict(m, X.row(i).transpose())).epsilon(1e-12));
}

TEST_CASE("loss") {
  Rng rng(5);
  TskModel m = random_model(2, 2, rng);
  const Matrix X = detail::random_batch(6, 2, rng);

  SECTION("perfect predictions and lambda=0 give zero loss") {
    const Vector y = predict_batch(m, X);
    CHECK(loss(m, X, y, nullptr, 0.0) == 0.0);
  }

  SECTION("biases are excluded from the penalty") {
    TskModel single = make_tsk_model(1, 2, 2);
    single.weights << 5.0, 2.0, -1.0;
    Matrix X1(1, 2);
    X1 << 0.0, 0.0;
    Vector y1(1);
    y1 << predict(single, X1.row(0).transpose());
    CHECK(loss(single, X1, y1, nullptr, 0.05) == Approx(0.125).epsilon(1e-14));
  }

  SECTION("matches the independent summation oracle") {
    const Vector y = Vector::Random(6);
    CHECK(loss(m, X, y, nullptr, 0.3) ==
          Approx(oracles::naive_loss(m, X, y, 0.3)).epsilon(1e-12));
  }

  SECTION("empty batch is rejected") {
    Matrix none(0, 2);
    Vector y0(0);
    CHECK_THROWS_AS(loss(m, none, y0, nullptr, 0.0), std::invalid_argument);
  }
}

TEST_CASE("gradient") {
  Rng rng(17);

  SECTION("zero residuals and lambda=0 give a zero gradient") {
    TskModel m = random_model(3, 2, rng);
    const Matrix X = detail::random_batch(4, 2, rng);
    const Vector y = predict_batch(m, X);
    CHECK(gradient(m, X, y, nullptr, 0.0).isZero(0.0));
  }

  SECTION("single-rule bias gradient is minus the residual sum") {
    TskModel m = random_model(1, 2, rng);
    const Matrix X = detail::random_batch(5, 2, rng);
    const Vector y = Vector::Random(5);
    const Vector g = gradient(m, X, y, nullptr, 0.0);
    double expect = 0.0;
    for (int i = 0; i < 5; ++i)
      expect -= y[i] - predict(m, X.row(i).transpose());
    const ParamLayout lay = layout_of(m);
    CHECK(g[lay.weight_index(0, 0)] == Approx(expect).epsilon(1e-12));
  }

  SECTION("matches central finite differences on random configurations") {
    const auto res = run_gradient_validation(100, 2024, true);
    INFO("worst relative error " << res.worst_rel_err);
    for (const auto& c : res.failed_cases) INFO(c);
    CHECK(res.pass());
  }
}

TEST_CASE("DropRule mask") {
  Rng rng(23);

  SECTION("P=1 produces an all-true mask") {
    const DropMask m = sample_drop_mask(20, 8, 1.0, rng);
    CHECK(m.keep.all());
  }

  SECTION("preservation rate is near P") {
    // 6250 x 16 = 1e5 draws; resampling bias at R=16 is ~1.5e-5
    const DropMask m = sample_drop_mask(6250, 16, 0.5, rng);
    const double rate =
        static_cast<double>(m.keep.count()) / static_cast<double>(m.keep.size());
    CHECK(rate > 0.49);
    CHECK(rate < 0.51);
  }

  SECTION("every row preserves at least one rule") {
    const DropMask m = sample_drop_mask(3000, 3, 0.05, rng);
    for (int i = 0; i < 3000; ++i) {
      bool any = false;
      for (int r = 0; r < 3; ++r) any |= m.keep(i, r);
      CHECK(any);
    }
  }

  SECTION("invalid P rejected") {
    CHECK_THROWS_AS(sample_drop_mask(1, 1, 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_drop_mask(1, 1, 1.5, rng), std::invalid_argument);
  }
}

TEST_CASE("DropRule at P=1 is a bit-for-bit no-op") {
  Rng rng(29);
  TskModel m = detail::random_smooth_model(6, 4, 4, rng);
  const Matrix X = detail::random_batch(10, 4, rng);
  const Vector y = Vector::Random(10);
  DropMask all_true = sample_drop_mask(10, 6, 1.0, rng);

  CHECK(loss(m, X, y, &all_true, 0.05) == loss(m, X, y, nullptr, 0.05));
  const Vector g1 = gradient(m, X, y, &all_true, 0.05);
  const Vector g2 = gradient(m, X, y, nullptr, 0.05);
  CHECK(g1 == g2);
}

TEST_CASE("dropped rules receive zero data-fit gradient") {
  Rng rng(31);
  const int rules = 4, dim = 3, n = 8;
  TskModel m = detail::random_smooth_model(rules, dim, dim, rng);
  const Matrix X = detail::random_batch(n, dim, rng);
  const Vector y = Vector::Random(n);

  DropMask mask;
  mask.keep = BoolMatrix::Constant(n, rules, true);
  const int dropped = 2;
  for (int i = 0; i < n; ++i) mask.keep(i, dropped) = false;

  const double lambda = 0.05;
  const Vector g = gradient(m, X, y, &mask, lambda);
  const ParamLayout lay = layout_of(m);
  for (int j = 0; j < dim; ++j) {
    CHECK(g[lay.center_index(dropped, j)] == 0.0);
    CHECK(g[lay.sigma_index(dropped, j)] == 0.0);
    // only the regularizer reaches the dropped rule's consequents
    CHECK(g[lay.weight_index(dropped, j + 1)] == lambda * m.weights(dropped, j + 1));
  }
  CHECK(g[lay.weight_index(dropped, 0)] == 0.0);
}

TEST_CASE("flat parameter vector") {
  Rng rng(37);
  TskModel m = detail::random_smooth_model(3, 4, 4, rng);

  SECTION("parameter count is R(3M+1)") {
    CHECK(m.param_count() == 3 * (3 * 4 + 1));
  }

  SECTION("flatten/unflatten round-trips exactly") {
    const Vector theta = flatten(m);
    TskModel copy = make_tsk_model(3, 4, 4);
    unflatten(copy, theta);
    CHECK(copy == m);
    CHECK(flatten(copy) == theta);
  }

  SECTION("slot indices are pure functions of the shape") {
    const ParamLayout lay = layout_of(m);
    CHECK(lay.center_index(0, 0) == 0);
    CHECK(lay.sigma_index(0, 0) == 12);
    CHECK(lay.weight_index(0, 0) == 24);
    CHECK(lay.weight_index(2, 4) == lay.size() - 1);
    const Vector theta = flatten(m);
    CHECK(theta[lay.center_index(1, 2)] == m.centers(1, 2));
    CHECK(theta[lay.sigma_index(2, 3)] == m.sigmas(2, 3));
    CHECK(theta[lay.weight_index(1, 0)] == m.weights(1, 0));
  }

  SECTION("sigma floor applies to the flat vector") {
    Vector theta = flatten(m);
    const ParamLayout lay = layout_of(m);
    theta[lay.sigma_index(1, 1)] = 1e-9;
    apply_sigma_floor_flat(lay, theta, 1e-3);
    CHECK(theta[lay.sigma_index(1, 1)] == 1e-3);
    // centers and weights untouched
    CHECK(theta[lay.center_index(1, 1)] == m.centers(1, 1));
  }
}

TEST_CASE("model file round-trips at full precision") {
  Rng rng(41);
  TskModel m = detail::random_smooth_model(5, 3, 3, rng);
  m.centers(0, 0) = 0.1;  // not exactly representable; hex floats must keep it
  m.weights(4, 3) = -1.0 / 3.0;

  const auto path =
      (std::filesystem::temp_directory_path() / "fcmrdpa_model_test.model")
          .string();
  save_model(path, m);
  const TskModel loaded = load_tsk_model(path);
  CHECK(loaded == m);
  std::filesystem::remove(path);
}
