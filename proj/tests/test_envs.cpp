#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include <doctest.h>

#include "cnppo/envs.hpp"
#include "cnppo/rng.hpp"

using cnppo::EnvSpec;
using cnppo::Rng;
using cnppo::StepRecord;
using cnppo::Vector;
using cnppo::VecEnv;

namespace {

Vector act1(double v) {
  Vector a(1);
  a << v;
  return a;
}

// Runs one episode under a fixed-action policy, returns (return, steps, terminated).
struct EpisodeResult {
  double total = 0.0;
  int steps = 0;
  bool terminated = false;
};

EpisodeResult run_episode(VecEnv& vec, const std::function<Vector(const Vector&)>& policy,
                          Vector obs) {
  EpisodeResult r;
  while (true) {
    const std::vector<StepRecord> recs = vec.step_all({policy(obs)});
    const StepRecord& rec = recs[0];
    r.total += rec.reward;
    r.steps += 1;
    if (rec.terminated || rec.truncated) {
      r.terminated = rec.terminated;
      return r;
    }
    obs = rec.obs;
  }
}

}  // namespace

TEST_CASE("env registry exposes the three builtin environments") {
  const std::vector<std::string> names = cnppo::builtin_env_names();
  REQUIRE(names.size() == 3);
  for (const std::string& n : names) {
    auto env = cnppo::make_env(n);
    const EnvSpec& spec = env->spec();
    CHECK(spec.name == n);
    CHECK(spec.obs_dim > 0);
    CHECK(spec.action_dim > 0);
    CHECK(spec.max_episode_steps > 0);
    CHECK(spec.action_low.size() == spec.action_dim);
    CHECK(spec.action_high.size() == spec.action_dim);
    for (int d = 0; d < spec.action_dim; ++d)
      CHECK(spec.action_low(d) < spec.action_high(d));
  }
  CHECK_THROWS(cnppo::make_env("no-such-env"));
}

TEST_CASE("same seed gives bit-identical trajectories") {
  for (const std::string& name : cnppo::builtin_env_names()) {
    VecEnv a(name, 2, Rng(11));
    VecEnv b(name, 2, Rng(11));
    a.reset_all();
    b.reset_all();
    Rng action_rng(3);
    for (int t = 0; t < 300; ++t) {
      std::vector<Vector> actions;
      for (int i = 0; i < 2; ++i) {
        Vector act(a.spec().action_dim);
        for (int d = 0; d < act.size(); ++d) act(d) = action_rng.normal();
        actions.push_back(act);
      }
      const auto ra = a.step_all(actions);
      const auto rb = b.step_all(actions);
      for (int i = 0; i < 2; ++i) {
        CHECK(ra[i].reward == rb[i].reward);
        CHECK(ra[i].terminated == rb[i].terminated);
        CHECK(ra[i].truncated == rb[i].truncated);
        for (int d = 0; d < ra[i].obs.size(); ++d) CHECK(ra[i].obs(d) == rb[i].obs(d));
      }
    }
  }
}

TEST_CASE("per-instance streams give different initial states") {
  VecEnv vec("pendulum-swingup", 4, Rng(5));
  const std::vector<Vector> obs = vec.reset_all();
  bool any_diff = false;
  for (size_t i = 1; i < obs.size(); ++i)
    any_diff = any_diff || (obs[i] - obs[0]).norm() > 1e-12;
  CHECK(any_diff);
}

TEST_CASE("observations and rewards stay in range under random actions") {
  Rng action_rng(17);
  for (const std::string& name : cnppo::builtin_env_names()) {
    VecEnv vec(name, 1, Rng(7));
    vec.reset_all();
    for (int t = 0; t < 2000; ++t) {
      Vector act(vec.spec().action_dim);
      for (int d = 0; d < act.size(); ++d) act(d) = 5.0 * action_rng.normal();
      const StepRecord rec = vec.step_all({act})[0];
      CHECK(rec.obs.allFinite());
      CHECK(std::isfinite(rec.reward));
      if (name == "pendulum-swingup") {
        CHECK(rec.reward >= 0.0);
        CHECK(rec.reward <= 1.0);
        CHECK(std::abs(rec.obs(0) * rec.obs(0) + rec.obs(1) * rec.obs(1) - 1.0) < 1e-9);
        CHECK(std::abs(rec.obs(2)) <= 1.0 + 1e-12);  // velocity scaled by its clip bound
      } else if (name == "sparse-point-maze") {
        CHECK((rec.reward == 0.0 || rec.reward == 1.0));
        const double x = (rec.obs(0) + 1.0) * 1.5;
        const double y = (rec.obs(1) + 1.0) * 1.5;
        CHECK(x >= -1e-9);
        CHECK(x <= 3.0 + 1e-9);
        CHECK(y >= -1e-9);
        CHECK(y <= 3.0 + 1e-9);
      }
    }
  }
}

TEST_CASE("episodes hit the step cap and auto-reset with the final state attached") {
  VecEnv vec("pendulum-swingup", 1, Rng(2));
  Vector obs = vec.reset_all()[0];
  const int cap = vec.spec().max_episode_steps;
  double total = 0.0;
  for (int t = 0; t < cap - 1; ++t) {
    const StepRecord rec = vec.step_all({act1(0.0)})[0];
    total += rec.reward;
    CHECK_FALSE(rec.terminated);
    CHECK_FALSE(rec.truncated);
    CHECK(vec.episode_step_count(0) == t + 1);
  }
  const StepRecord last = vec.step_all({act1(0.0)})[0];
  total += last.reward;
  CHECK(last.truncated);
  CHECK_FALSE(last.terminated);
  CHECK(last.final_obs.size() == vec.spec().obs_dim);
  CHECK(last.final_episode_return == doctest::Approx(total).epsilon(1e-12));
  // the returned obs is the next episode's start, not the final state
  CHECK((last.obs - last.final_obs).norm() > 1e-12);
  CHECK(vec.episode_step_count(0) == 0);
  CHECK(vec.episode_return(0) == 0.0);
}

TEST_CASE("pendulum starts near the bottom and zero torque keeps reward low") {
  VecEnv vec("pendulum-swingup", 1, Rng(4));
  for (int ep = 0; ep < 5; ++ep) {
    const Vector obs0 = ep == 0 ? vec.reset_all()[0] : vec.reset(0);
    CHECK(obs0(0) < -0.9);  // cos(theta) near -1: hanging down
    EpisodeResult r = run_episode(vec, [](const Vector&) { return act1(0.0); }, obs0);
    CHECK_FALSE(r.terminated);
    CHECK(r.steps == vec.spec().max_episode_steps);
    CHECK(r.total < 0.1 * vec.spec().max_episode_steps);
  }
}

TEST_CASE("pendulum energy pumping beats the random baseline") {
  VecEnv vec("pendulum-swingup", 1, Rng(6));
  double total = 0.0;
  const int episodes = 5;
  for (int ep = 0; ep < episodes; ++ep) {
    Vector obs = ep == 0 ? vec.reset_all()[0] : vec.reset(0);
    // torque with the velocity to pump energy, brake near the top
    EpisodeResult r = run_episode(
        vec,
        [](const Vector& o) {
          const double cos_th = o(0), vel = o(2);
          if (cos_th > 0.6) return act1(-2.0 * vel * 8.0);
          return act1(vel >= 0 ? 2.0 : -2.0);
        },
        obs);
    total += r.total;
  }
  CHECK(total / episodes > 80.0);  // random actions collect about 6 per episode
}

TEST_CASE("mountain car: full throttle alone cannot leave the valley") {
  VecEnv vec("continuous-mountain-car", 1, Rng(8));
  Vector obs = vec.reset_all()[0];
  EpisodeResult r = run_episode(vec, [](const Vector&) { return act1(1.0); }, obs);
  CHECK_FALSE(r.terminated);
  CHECK(r.steps == vec.spec().max_episode_steps);
  CHECK(r.total < 0.0);  // only the action cost, no goal bonus
}

TEST_CASE("mountain car: bang-bang energy pumping reaches the goal") {
  VecEnv vec("continuous-mountain-car", 1, Rng(9));
  for (int ep = 0; ep < 3; ++ep) {
    Vector obs = ep == 0 ? vec.reset_all()[0] : vec.reset(0);
    EpisodeResult r = run_episode(
        vec, [](const Vector& o) { return act1(o(1) >= 0.0 ? 1.0 : -1.0); }, obs);
    CHECK(r.terminated);
    CHECK(r.steps < 200);
    CHECK(r.total > 80.0);  // +100 bonus minus the action cost
  }
}

TEST_CASE("maze: zero action earns exactly zero") {
  VecEnv vec("sparse-point-maze", 1, Rng(10));
  Vector obs = vec.reset_all()[0];
  for (int ep = 0; ep < 20; ++ep) {
    EpisodeResult r = run_episode(vec, [](const Vector&) {
      Vector a(2);
      a << 0.0, 0.0;
      return a;
    }, obs);
    CHECK(r.total == 0.0);
    CHECK_FALSE(r.terminated);
    obs = vec.reset(0);
  }
}

TEST_CASE("maze: the wall blocks the straight-line path") {
  VecEnv vec("sparse-point-maze", 1, Rng(11));
  Vector obs = vec.reset_all()[0];
  // head straight up: the wall spans x in [0,2] at y about 1.5, start is near x=0.5
  EpisodeResult r = run_episode(vec, [](const Vector&) {
    Vector a(2);
    a << 0.0, 1.0;
    return a;
  }, obs);
  CHECK_FALSE(r.terminated);
  CHECK(r.total == 0.0);
}

TEST_CASE("maze: going around the wall reaches the goal") {
  VecEnv vec("sparse-point-maze", 1, Rng(12));
  for (int ep = 0; ep < 3; ++ep) {
    Vector obs = ep == 0 ? vec.reset_all()[0] : vec.reset(0);
    EpisodeResult r = run_episode(
        vec,
        [](const Vector& o) {
          const double x = (o(0) + 1.0) * 1.5;
          const double y = (o(1) + 1.0) * 1.5;
          Vector a(2);
          if (y < 2.2 && x < 2.4) {
            a << 1.0, 0.0;  // slide right along the bottom, past the wall's end
          } else if (x > 2.2 && y < 2.6) {
            a << 0.0, 1.0;  // climb the open corridor on the right
          } else {
            // past the wall: head straight for the goal
            a << std::clamp(0.5 - x, -1.0, 1.0), std::clamp(2.5 - y, -1.0, 1.0);
          }
          return a;
        },
        obs);
    CHECK(r.terminated);
    CHECK(r.total == 1.0);
    CHECK(r.steps < vec.spec().max_episode_steps);
  }
}

TEST_CASE("terminated episodes report final obs distinct from the reset obs") {
  VecEnv vec("continuous-mountain-car", 1, Rng(13));
  Vector obs = vec.reset_all()[0];
  while (true) {
    const StepRecord rec = vec.step_all({act1(obs(1) >= 0.0 ? 1.0 : -1.0)})[0];
    if (rec.terminated) {
      CHECK(rec.final_obs(0) >= 0.45);      // the goal position
      CHECK(rec.obs(0) < 0.0);              // fresh episode starts in the valley
      CHECK(rec.final_episode_return > 80.0);
      break;
    }
    REQUIRE_FALSE(rec.truncated);
    obs = rec.obs;
  }
}

TEST_CASE("actions are clipped to the spec bounds") {
  // identical trajectories for a=5 and a=1 prove the clip (pendulum torque cap 2)
  VecEnv a("pendulum-swingup", 1, Rng(14));
  VecEnv b("pendulum-swingup", 1, Rng(14));
  a.reset_all();
  b.reset_all();
  for (int t = 0; t < 50; ++t) {
    const StepRecord ra = a.step_all({act1(50.0)})[0];
    const StepRecord rb = b.step_all({act1(a.spec().action_high(0))})[0];
    CHECK(ra.reward == rb.reward);
    for (int d = 0; d < ra.obs.size(); ++d) CHECK(ra.obs(d) == rb.obs(d));
  }
}

TEST_CASE("non-finite actions are rejected") {
  VecEnv vec("pendulum-swingup", 1, Rng(15));
  vec.reset_all();
  CHECK_THROWS(vec.step_all({act1(std::nan(""))}));
  CHECK_THROWS(vec.step_all({act1(std::numeric_limits<double>::infinity())}));
  Vector wrong(2);
  wrong << 0.0, 0.0;
  CHECK_THROWS(vec.step_all({wrong}));
}

TEST_CASE("vec env argument validation") {
  CHECK_THROWS(VecEnv("pendulum-swingup", 0, Rng(1)));
  VecEnv vec("pendulum-swingup", 2, Rng(1));
  vec.reset_all();
  CHECK_THROWS(vec.step_all({act1(0.0)}));  // one action for two envs
  CHECK_THROWS(vec.reset(5));
}
