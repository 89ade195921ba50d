#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "csdyn/gfa_core.hpp"
#include "csdyn/rng.hpp"

using namespace csdyn;

namespace {

Eigen::MatrixXd random_strictly_lower(int n, std::uint64_t seed) {
  RngStream rng(seed, StreamTag::kNoise);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  std::uint64_t k = 0;
  for (int r = 1; r < n; ++r)
    for (int c = 0; c < r; ++c) G(r, c) = 0.5 * rng.normal(k++);
  return G;
}

}  // namespace

TEST_CASE("build_D at stage zero and its symmetry") {
  OrderParams p = OrderParams::initial();
  const auto D = build_D(p, 0.1, 0.5, 0.04);
  REQUIRE(D.rows() == 1);
  REQUIRE(D(0, 0) == Catch::Approx(0.04 + 0.1 / 0.5).epsilon(1e-15));

  OrderParams q;
  q.horizon = 2;
  q.m = Eigen::Vector3d(0.0, 0.02, 0.05);
  q.C = Eigen::Matrix3d::Zero();
  q.C(1, 1) = 0.03;
  q.C(2, 2) = 0.07;
  q.C(2, 1) = q.C(1, 2) = 0.02;
  q.G = Eigen::Matrix3d::Zero();
  const auto D2 = build_D(q, 0.1, 0.5, 0.0);
  REQUIRE((D2 - D2.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("build_D matches an independent scalar evaluation") {
  // rho=0.1, delta=0.5, sigma_omega=0, m=(0,0.05), C=diag(0,0.07).
  OrderParams p;
  p.horizon = 1;
  p.m = Eigen::Vector2d(0.0, 0.05);
  p.C = Eigen::Matrix2d::Zero();
  p.C(1, 1) = 0.07;
  p.G = Eigen::Matrix2d::Zero();
  const auto D = build_D(p, 0.1, 0.5, 0.0);
  auto scalar = [&](int s, int s2) {
    return 0.0 + (0.1 - p.m[s] - p.m[s2] + p.C(s, s2)) / 0.5;
  };
  for (int s = 0; s < 2; ++s)
    for (int s2 = 0; s2 < 2; ++s2)
      REQUIRE(D(s, s2) == Catch::Approx(scalar(s, s2)).epsilon(1e-15));
  REQUIRE(D(0, 0) == Catch::Approx(0.2).epsilon(1e-15));
  REQUIRE(D(0, 1) == Catch::Approx(0.1).epsilon(1e-15));
  REQUIRE(D(1, 1) == Catch::Approx(0.14).epsilon(1e-15));
}

TEST_CASE("build_R reduces to D/c^2 without memory") {
  OrderParams p = OrderParams::initial();
  const auto D = build_D(p, 0.1, 0.5, 0.0);
  const auto R = build_R(D, p.G, 3.0, 0.5);
  REQUIRE(R(0, 0) == Catch::Approx(0.2 / 9.0).epsilon(1e-15));

  Eigen::MatrixXd D3 = Eigen::MatrixXd::Identity(3, 3) * 0.4;
  D3(0, 1) = D3(1, 0) = 0.1;
  const auto R3 = build_R(D3, Eigen::MatrixXd::Zero(3, 3), 2.0, 0.5);
  REQUIRE((R3 - D3 / 4.0).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("build_R matches the hand-expanded 2x2 sandwich") {
  const double c = 3.0, delta = 0.5;
  Eigen::MatrixXd D(2, 2), G = Eigen::MatrixXd::Zero(2, 2);
  D << 0.2, 0.17, 0.17, 0.16;
  G(1, 0) = 0.07;
  const double g = G(1, 0) / (c * delta);
  const auto R = build_R(D, G, c, delta);
  REQUIRE(R(0, 0) == Catch::Approx(D(0, 0) / (c * c)).epsilon(1e-14));
  REQUIRE(R(0, 1) ==
          Catch::Approx((D(0, 1) - g * D(0, 0)) / (c * c)).epsilon(1e-14));
  REQUIRE(R(1, 1) ==
          Catch::Approx((D(1, 1) - 2 * g * D(0, 1) + g * g * D(0, 0)) /
                        (c * c))
              .epsilon(1e-14));
  REQUIRE(R(1, 0) == R(0, 1));
}

TEST_CASE("extending the horizon preserves earlier kernel blocks") {
  // Causality as linear algebra: the top-left blocks of R and Gamma do not
  // move when one more stage of order parameters arrives.
  const double c = 2.0, delta = 0.8;
  const auto G4 = random_strictly_lower(4, 77);
  Eigen::MatrixXd D4(4, 4);
  RngStream rng(78, StreamTag::kNoise);
  for (int r = 0; r < 4; ++r)
    for (int s = 0; s <= r; ++s) {
      D4(r, s) = (r == s) ? 1.0 + rng.uniform(r * 4 + s)
                          : 0.3 * rng.normal(r * 4 + s);
      D4(s, r) = D4(r, s);
    }
  const auto R4 = build_R(D4, G4, c, delta);
  const auto R3 = build_R(D4.topLeftCorner(3, 3), G4.topLeftCorner(3, 3), c,
                          delta);
  REQUIRE((R4.topLeftCorner(3, 3) - R3).cwiseAbs().maxCoeff() < 1e-14);

  const auto Gam4 = build_Gamma(G4, c, delta);
  const auto Gam3 = build_Gamma(G4.topLeftCorner(3, 3), c, delta);
  REQUIRE((Gam4.topLeftCorner(3, 3) - Gam3).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("kernel builders reject acausal response matrices") {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2, 2);
  G(0, 1) = 0.1;
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(2, 2);
  REQUIRE_THROWS_AS(build_R(D, G, 1.0, 0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(build_Gamma(G, 1.0, 0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(effective_gain(G, 1.0, 0.5, 1), std::invalid_argument);
  G(0, 1) = 0.0;
  G(1, 1) = 0.2;  // diagonal is just as forbidden
  REQUIRE_THROWS_AS(build_Gamma(G, 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("memory matrix forms agree and have the fixed diagonal") {
  const double delta = 0.8;
  for (double c : {1.0, 2.0, 3.0}) {
    const auto G = random_strictly_lower(5, 101 + int(c));
    const auto Gamma = build_Gamma(G, c, delta);
    // Independent route: c^{-1}(c-1) I + c^{-1} L a G.
    const double a = 1.0 / (c * delta);
    Eigen::MatrixXd L =
        (Eigen::MatrixXd::Identity(5, 5) + a * G).inverse();
    Eigen::MatrixXd alt = ((c - 1.0) / c) * Eigen::MatrixXd::Identity(5, 5) +
                          (L * (a * G)) / c;
    REQUIRE((Gamma - alt).cwiseAbs().maxCoeff() < 1e-12);
    for (int i = 0; i < 5; ++i)
      REQUIRE(Gamma(i, i) == Catch::Approx((c - 1.0) / c).margin(1e-15));
    if (c == 1.0)
      for (int i = 0; i < 5; ++i)
        for (int j = i; j < 5; ++j) REQUIRE(Gamma(i, j) == 0.0);
  }
  REQUIRE(build_Gamma(Eigen::MatrixXd::Zero(3, 3), 1.0, 0.8).isZero(0.0));

  Eigen::MatrixXd G2 = Eigen::MatrixXd::Zero(2, 2);
  G2(1, 0) = 0.4;
  const auto Gamma2 = build_Gamma(G2, 1.0, 0.8);
  REQUIRE(Gamma2(1, 0) == Catch::Approx(0.5).epsilon(1e-14));
  REQUIRE(Gamma2(0, 0) == 0.0);
  REQUIRE(Gamma2(1, 1) == 0.0);
}

TEST_CASE("unit-triangular determinant is exactly one") {
  const auto G = random_strictly_lower(6, 55);
  const double a = 1.0 / (2.0 * 0.8);
  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(6, 6) + a * G;
  double det = 1.0;
  for (int i = 0; i < 6; ++i) det *= B(i, i);
  REQUIRE(det == 1.0);
}

TEST_CASE("effective gains") {
  SECTION("stage zero is always 1/c") {
    const auto G = random_strictly_lower(4, 3);
    for (double c : {1.0, 2.5, 3.0})
      REQUIRE(effective_gain(G, c, 0.5, 0) == 1.0 / c);
  }
  SECTION("no memory means gain 1/c at every stage") {
    const Eigen::MatrixXd G = Eigen::MatrixXd::Zero(5, 5);
    for (int s = 0; s < 5; ++s)
      REQUIRE(effective_gain(G, 3.0, 0.5, s) ==
              Catch::Approx(1.0 / 3.0).epsilon(1e-14));
  }
  SECTION("stage one reproduces the 2x2 determinant by hand") {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2, 2);
    G(1, 0) = 0.3;
    const double c = 2.0, delta = 0.8;
    const double expected = (1.0 - G(1, 0) / (c * delta)) / c;
    REQUIRE(effective_gain(G, c, delta, 1) ==
            Catch::Approx(expected).epsilon(1e-14));
  }
  SECTION("matrix determinant lemma cross-check at stage three") {
    // det(ones-row matrix) = 1 + sum_{r<s} (B^{-1})(r,s), B = I + a G^T.
    const auto G = random_strictly_lower(4, 91);
    const double c = 1.5, delta = 0.7, a = 1.0 / (c * delta);
    Eigen::MatrixXd B =
        Eigen::MatrixXd::Identity(4, 4) + a * G.transpose();
    const Eigen::MatrixXd Binv = B.inverse();
    const double det = 1.0 + Binv(0, 3) + Binv(1, 3) + Binv(2, 3);
    REQUIRE(effective_gain(G, c, delta, 3) ==
            Catch::Approx(det / c).epsilon(1e-12));
  }
  SECTION("the unit-determinant reading is constant 1/c") {
    const auto G = random_strictly_lower(4, 13);
    for (int s = 0; s < 4; ++s)
      REQUIRE(effective_gain(G, 2.0, 0.5, s,
                             LambdaInterpretation::kUnitDet) == 0.5);
  }
}

TEST_CASE("predicted error from order parameters") {
  OrderParams p;
  p.horizon = 1;
  p.m = Eigen::Vector2d(0.0, 0.0);
  p.C = Eigen::Matrix2d::Zero();
  p.G = Eigen::Matrix2d::Zero();
  REQUIRE(mse_from_order_params(p, 0.1, 1) == Catch::Approx(0.1));

  p.m[1] = 0.1;
  p.C(1, 1) = 0.1;
  REQUIRE(mse_from_order_params(p, 0.1, 1) == Catch::Approx(0.0).margin(1e-15));

  p.m[1] = 0.05;
  p.C(1, 1) = 0.07;
  REQUIRE(mse_from_order_params(p, 0.1, 1) == Catch::Approx(0.07));

  p.m[1] = 0.2;  // sampling noise can push the raw value negative
  p.C(1, 1) = 0.0;
  REQUIRE(mse_from_order_params_raw(p, 0.1, 1) ==
          Catch::Approx(-0.3).epsilon(1e-14));
  REQUIRE(mse_from_order_params(p, 0.1, 1) == 0.0);
}

TEST_CASE("free parameter count grows as t + t(t+1)") {
  for (int t : {0, 1, 2, 5, 9}) {
    OrderParams p;
    p.horizon = t;
    p.m = Eigen::VectorXd::Zero(t + 1);
    p.C = Eigen::MatrixXd::Zero(t + 1, t + 1);
    p.G = Eigen::MatrixXd::Zero(t + 1, t + 1);
    REQUIRE(p.free_parameter_count() == t + t * (t + 1));
  }
}

TEST_CASE("kernel snapshots serialize all blocks") {
  OrderParams p;
  p.horizon = 1;
  p.m = Eigen::Vector2d(0.0, 0.01);
  p.C = Eigen::Matrix2d::Zero();
  p.C(1, 1) = 0.02;
  p.G = Eigen::Matrix2d::Zero();
  p.G(1, 0) = 0.05;
  const auto kernel =
      GfaKernel::build(p, 0.1, 0.5, 0.0, 3.0, LambdaInterpretation::kOnesRow);
  const auto j = kernel_snapshot(p, kernel);
  for (const char* key : {"m", "C", "G", "D", "R", "Gamma", "k_hat"})
    REQUIRE(j.contains(key));
  REQUIRE(j["horizon"] == 1);
  REQUIRE(j["k_hat"][0].get<double>() == Catch::Approx(1.0 / 3.0));
  REQUIRE(j["R"][0][0].get<double>() ==
          Catch::Approx(kernel.R(0, 0)).epsilon(1e-15));
}
