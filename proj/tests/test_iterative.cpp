#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "csdyn/iterative.hpp"

using namespace csdyn;

namespace {

ProblemInstance tiny_instance() {
  // 2x3 system with unit rows, x0 = (1,0,0), no noise: y = (1,0).
  ProblemInstance inst;
  inst.A.resize(2, 3);
  inst.A << 1, 0, 0, 0, 1, 0;
  inst.x0 = Vector::Zero(3);
  inst.x0[0] = 1.0;
  inst.omega = Vector::Zero(2);
  inst.y = inst.A * inst.x0;
  inst.delta = 2.0 / 3.0;
  inst.rho = 1.0 / 3.0;
  return inst;
}

}  // namespace

TEST_CASE("first IST step thresholds A^T y") {
  const auto inst = make_instance(31, 0, 40, 80, SignalPrior{0.2}, 0.0);
  const auto s1 = ist_step(AlgoState::init(inst), inst, 1.0, 0.4);
  const Vector expected =
      (inst.A.transpose() * inst.y)
          .unaryExpr([](double v) { return soft_threshold(v, 0.4); });
  REQUIRE((s1.x - expected).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(s1.t == 1);
}

TEST_CASE("an effectively infinite threshold freezes the estimate at zero") {
  const auto inst = make_instance(32, 0, 40, 80, SignalPrior{0.2}, 0.1);
  const auto s1 = ist_step(AlgoState::init(inst), inst, 2.0, 1e9);
  REQUIRE(s1.x.isZero(0.0));
}

TEST_CASE("hand-computed 2x3 step") {
  const auto inst = tiny_instance();
  const auto s1 = ist_step(AlgoState::init(inst), inst, 1.0, 0.5);
  REQUIRE(s1.x[0] == Catch::Approx(0.5).epsilon(1e-15));
  REQUIRE(s1.x[1] == 0.0);
  REQUIRE(s1.x[2] == 0.0);
}

TEST_CASE("ist with zero threshold and c=1 is a plain gradient step") {
  const auto inst = make_instance(33, 0, 30, 60, SignalPrior{0.3}, 0.2);
  AlgoState state = AlgoState::init(inst);
  state.x = Vector::Random(60) * 0.1;
  const auto next = ist_step(state, inst, 1.0, 0.0);
  const Vector direct =
      state.x + inst.A.transpose() * (inst.y - inst.A * state.x);
  REQUIRE((next.x - direct).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("amp and ist coincide at t = 0") {
  const auto inst = make_instance(34, 0, 50, 100, SignalPrior{0.1}, 0.0);
  const auto a = amp_step(AlgoState::init(inst), inst, inst.delta, 0.3);
  const auto i = ist_step(AlgoState::init(inst), inst, 1.0, 0.3);
  REQUIRE(a.x == i.x);  // bitwise
  REQUIRE(a.z == i.z);
}

TEST_CASE("amp correction term switches off and on with <eta'>") {
  const auto inst = make_instance(35, 0, 50, 100, SignalPrior{0.1}, 0.0);
  // One step with a huge threshold: every pre-threshold point sits in the
  // dead zone, so <eta'> = 0 and the next residual is the plain one.
  auto s = amp_step(AlgoState::init(inst), inst, inst.delta, 1e9);
  REQUIRE(s.eta_prime_mean == 0.0);
  auto s2 = amp_step(s, inst, inst.delta, 0.2);
  REQUIRE((s2.z - (inst.y - inst.A * s.x)).cwiseAbs().maxCoeff() == 0.0);

  // Zero threshold: nothing is clipped, <eta'> = 1, correction = z/delta.
  auto t0 = amp_step(AlgoState::init(inst), inst, inst.delta, 0.0);
  REQUIRE(t0.eta_prime_mean == 1.0);
  auto t1 = amp_step(t0, inst, inst.delta, 0.0);
  const Vector expected =
      inst.y - inst.A * t0.x + t0.z / inst.delta;
  REQUIRE((t1.z - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("run records a full trajectory with recomputable errors") {
  const auto inst = make_instance(36, 0, 100, 200, SignalPrior{0.1}, 0.0);
  auto sched = ThresholdSchedule::make(3.0, 3.0, 0.1);
  const auto traj = run(Algorithm::kIst, inst, 5, sched);
  REQUIRE(traj.points.size() == 6);
  REQUIRE_FALSE(traj.diverged);

  // Replay manually and recompute every statistic independently.
  AlgoState state = AlgoState::init(inst);
  auto replay = ThresholdSchedule::make(3.0, 3.0, 0.1);
  for (int t = 0; t < 5; ++t) {
    REQUIRE(traj.points[t].lam_hat ==
            Catch::Approx(current_threshold(replay)).margin(0.0));
    state = ist_step(state, inst, replay.c, current_threshold(replay));
    replay.update(state.x, inst.x0);
    const double mse =
        (inst.x0 - state.x).squaredNorm() / double(inst.x0.size());
    REQUIRE(std::abs(traj.points[t + 1].mse - mse) <= 1e-12);
    REQUIRE(traj.points[t + 1].msez ==
            Catch::Approx(msez(state.x, inst.x0)).margin(0.0));
  }
}

TEST_CASE("a pinned estimate keeps mse at rho-hat") {
  const auto inst = make_instance(37, 0, 100, 200, SignalPrior{0.1}, 0.0);
  auto sched = ThresholdSchedule::make(1e18, 1.0, 0.1);
  const auto traj = run(Algorithm::kIta, inst, 4, sched);
  const double rho_hat = inst.x0.squaredNorm() / 200.0;
  for (const auto& p : traj.points) {
    REQUIRE(p.mse == Catch::Approx(rho_hat).epsilon(1e-15));
    REQUIRE(p.nonzero_fraction == 0.0);
  }
}

TEST_CASE("the empty problem stays identically zero") {
  const auto inst = make_instance(38, 0, 50, 100, SignalPrior{0.0}, 0.0);
  auto sched = ThresholdSchedule::make(2.0, 1.0, 0.0);
  const auto traj = run(Algorithm::kIst, inst, 4, sched);
  for (const auto& p : traj.points) REQUIRE(p.mse == 0.0);
  REQUIRE_FALSE(traj.diverged);
}

TEST_CASE("successful IST run decreases the error over early stages") {
  const auto inst = make_instance(39, 0, 1000, 2000, SignalPrior{0.1}, 0.0);
  auto sched = ThresholdSchedule::make(3.0, 3.0, 0.1);
  const auto traj = run(Algorithm::kIst, inst, 6, sched);
  REQUIRE_FALSE(traj.diverged);
  for (int t = 1; t < 5; ++t)
    REQUIRE(traj.points[t + 1].mse < traj.points[t].mse);
  REQUIRE(traj.points[6].mse < 0.5 * traj.points[0].mse);
}

TEST_CASE("runs with the same seed are bitwise identical") {
  auto once = [] {
    const auto inst = make_instance(40, 1, 80, 160, SignalPrior{0.15}, 0.05);
    auto sched = ThresholdSchedule::make(2.0, 2.0, 0.15);
    return run(Algorithm::kIst, inst, 5, sched);
  };
  const auto a = once();
  const auto b = once();
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    REQUIRE(a.points[i].mse == b.points[i].mse);
    REQUIRE(a.points[i].msez == b.points[i].msez);
    REQUIRE(a.points[i].lam_hat == b.points[i].lam_hat);
    REQUIRE(a.points[i].nonzero_fraction == b.points[i].nonzero_fraction);
  }
}

TEST_CASE("diverging ITA runs are truncated and flagged") {
  // delta = 0.8 with a small threshold blows up; divergence is recorded as
  // data rather than thrown.
  const auto inst = make_instance(41, 0, 320, 400, SignalPrior{0.1}, 0.0);
  auto sched = ThresholdSchedule::make(0.5, 1.0, 0.1);
  const auto traj = run(Algorithm::kIta, inst, 60, sched);
  REQUIRE(traj.diverged);
  REQUIRE(traj.last_finite_t < 60);
  REQUIRE(traj.points.size() == std::size_t(traj.last_finite_t) + 1);
}

TEST_CASE("ITA requires c = 1 and steps validate dimensions") {
  const auto inst = make_instance(42, 0, 20, 40, SignalPrior{0.1}, 0.0);
  auto sched = ThresholdSchedule::make(1.0, 2.0, 0.1);
  REQUIRE_THROWS_AS(run(Algorithm::kIta, inst, 3, sched),
                    std::invalid_argument);
  AlgoState wrong;
  wrong.x = Vector::Zero(7);
  wrong.z = inst.y;
  REQUIRE_THROWS_AS(ist_step(wrong, inst, 1.0, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(amp_step(wrong, inst, inst.delta, 0.1),
                    std::invalid_argument);
}
