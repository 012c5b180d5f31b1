#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <random>

#include "diffsim/adjoint.hpp"
#include "diffsim/identify.hpp"
#include "fixtures.hpp"

using namespace diffsim;
using Catch::Approx;

namespace {

size_t count_op(const ad::Tape& tape, ad::Op op) {
    size_t n = 0;
    for (size_t i = 0; i < tape.size(); ++i)
        if (tape.node(static_cast<std::int32_t>(i)).op == op) ++n;
    return n;
}

bool same_samples(const Trajectory& a, const Trajectory& b) {
    if (a.samples.size() != b.samples.size()) return false;
    return std::memcmp(a.samples.data(), b.samples.data(),
                       a.samples.size() * sizeof(Trajectory::Sample)) == 0;
}

}  // namespace

TEST_CASE("record_rollout refuses explicit Euler") {
    Scenario sc = fixtures::pushdown_scenario(0.1, 0.6);
    BodyModel body = scenario_body(sc);
    SimConfig cfg = sim_config(sc);
    cfg.integrator = Integrator::Explicit;
    CHECK_THROWS_AS(record_rollout(initial_state(sc, body), body, sc.schedule, cfg, 0.1),
                    std::invalid_argument);
}

TEST_CASE("recorded trajectory equals the plain rollout bit for bit") {
    Scenario sc = fixtures::contact_scenario(0.1, 2000.0, 8.0, 2.0, 400);
    BodyModel body = scenario_body(sc);
    RigidState init = initial_state(sc, body);
    SimConfig cfg = sim_config(sc);

    auto plain = rollout_states<double>(init, body, 0.08, sc.schedule, cfg);
    REQUIRE_FALSE(plain.diverged);
    Trajectory plain_traj = trajectory_from_states(plain.states, cfg.dt);

    RecordedRollout rec = record_rollout(init, body, sc.schedule, cfg, 0.08);
    REQUIRE_FALSE(rec.diverged);
    CHECK(same_samples(rec.trajectory, plain_traj));
}

TEST_CASE("tape replay reproduces the recorded trajectory bit for bit") {
    Scenario sc = fixtures::contact_scenario(0.1, 2000.0, 8.0, 2.0, 300);
    BodyModel body = scenario_body(sc);
    RecordedRollout rec =
        record_rollout(initial_state(sc, body), body, sc.schedule, sim_config(sc), 0.1);
    REQUIRE_FALSE(rec.diverged);
    Trajectory replayed = replay_trajectory(rec);
    CHECK(same_samples(replayed, rec.trajectory));
}

TEST_CASE("contact-free tapes contain no contact branches") {
    Scenario sc = fixtures::pushdown_scenario(0.1, 0.6);
    BodyModel body = scenario_body(sc);
    RecordedRollout rec =
        record_rollout(initial_state(sc, body), body, sc.schedule, sim_config(sc), 0.1);
    REQUIRE_FALSE(rec.diverged);
    CHECK(count_op(rec.tape, ad::Op::Max0) == 0);
    for (const auto& step_events : rec.contacts) CHECK(step_events.empty());

    Scenario touching = fixtures::contact_scenario(0.1, 2000.0, 8.0, 2.0, 300);
    BodyModel body2 = scenario_body(touching);
    RecordedRollout rec2 = record_rollout(initial_state(touching, body2), body2,
                                          touching.schedule, sim_config(touching), 0.1);
    CHECK(count_op(rec2.tape, ad::Op::Max0) > 0);
}

TEST_CASE("tape size grows linearly with step count") {
    auto tape_size = [](int steps) {
        Scenario sc = fixtures::contact_scenario(0.1, 2000.0, 8.0, 2.0, steps);
        BodyModel body = scenario_body(sc);
        RecordedRollout rec =
            record_rollout(initial_state(sc, body), body, sc.schedule, sim_config(sc), 0.1);
        REQUIRE_FALSE(rec.diverged);
        return static_cast<double>(rec.tape.size());
    };
    const double s250 = tape_size(250);
    const double s500 = tape_size(500);
    const double s1000 = tape_size(1000);
    const double slope_a = (s500 - s250) / 250.0;
    const double slope_b = (s1000 - s500) / 500.0;
    CHECK(slope_b == Approx(slope_a).epsilon(0.10));
}

TEST_CASE("gradient vanishes when observations equal the simulation") {
    Scenario sc = fixtures::pushdown_scenario(0.1, 0.6);
    BodyModel body = scenario_body(sc);
    RecordedRollout rec =
        record_rollout(initial_state(sc, body), body, sc.schedule, sim_config(sc), 0.1);
    GradReport rep = grad_mass(rec, rec.trajectory);
    CHECK(rep.loss == 0.0);
    CHECK(rep.grad == 0.0);
}

TEST_CASE("contact-free gradient matches the closed-form derivative") {
    Scenario sc = fixtures::pushdown_scenario(0.1, 0.6);
    const double m_true = 0.1;
    const double m_probe = 0.06;

    Trajectory real = synthesize_real_trajectory(sc, m_true, NoiseModel{});
    BodyModel body = scenario_body(sc);
    RecordedRollout rec =
        record_rollout(initial_state(sc, body), body, sc.schedule, sim_config(sc), m_probe);
    REQUIRE_FALSE(rec.diverged);
    GradReport rep = grad_mass(rec, real);

    PushdownModel model = scenario_pushdown_model(sc);
    double grad_analytic = 0.0;
    for (size_t k = 0; k < model.alpha.size(); ++k) {
        const double z_sim = model.alpha[k] + model.beta[k] / m_probe;
        const double z_obs = model.alpha[k] + model.beta[k] / m_true;
        grad_analytic += 2.0 * (z_sim - z_obs) * (-model.beta[k] / (m_probe * m_probe));
    }
    CHECK(rep.grad == Approx(grad_analytic).epsilon(1e-9));
}

TEST_CASE("gradient matches central finite differences with ground contact") {
    Scenario sc = fixtures::contact_scenario(0.1, 2000.0, 8.0, 2.0, 400);
    const double m_probe = 0.08;
    Trajectory real = synthesize_real_trajectory(sc, 0.1, NoiseModel{});

    BodyModel body = scenario_body(sc);
    RecordedRollout rec =
        record_rollout(initial_state(sc, body), body, sc.schedule, sim_config(sc), m_probe);
    REQUIRE_FALSE(rec.diverged);
    GradReport rep = grad_mass(rec, real);

    const double h = 1e-5 * m_probe;  // small enough to stay on one side of
                                      // every contact/clamp branch here
    const double fd = finite_diff_grad(sc, real, m_probe, h);
    CHECK(rep.grad == Approx(fd).epsilon(1e-3));
}

TEST_CASE("gradient sign pushes an overestimated mass down") {
    Scenario sc = fixtures::pushdown_scenario(0.1, 0.6);
    Trajectory real = synthesize_real_trajectory(sc, 0.1, NoiseModel{});
    BodyModel body = scenario_body(sc);
    RecordedRollout rec =
        record_rollout(initial_state(sc, body), body, sc.schedule, sim_config(sc), 0.25);
    GradReport rep = grad_mass(rec, real);
    CHECK(rep.grad > 0.0);  // descent step m - lr*grad decreases m

    RecordedRollout rec_low =
        record_rollout(initial_state(sc, body), body, sc.schedule, sim_config(sc), 0.04);
    GradReport rep_low = grad_mass(rec_low, real);
    CHECK(rep_low.grad < 0.0);
}

TEST_CASE("finite_diff on a quadratic is exact to rounding") {
    auto loss = [](double m) { return (m - 2.0) * (m - 2.0); };
    CHECK(finite_diff(loss, 3.0, 1e-4) == Approx(2.0).margin(1e-6));
    CHECK(std::abs(finite_diff(loss, 2.0, 1e-4)) < 1e-10);
    CHECK_THROWS_AS(finite_diff(loss, 1e-5, 1e-4), std::domain_error);
}

TEST_CASE("push-down closed form") {
    const double dt = 1e-3;
    const double g = -9.81;

    SECTION("no force gives the discrete ballistic form") {
        std::vector<double> u(100, 0.0);
        auto z = pushdown_closed_form(u, 2.0, 0.5, g, 0.3, dt);
        REQUIRE(z.size() == 101);
        CHECK(z[0] == 2.0);
        const double tri = 0.5 * 100.0 * 101.0;
        CHECK(z[100] == Approx(2.0 + 0.5 * 0.1 + g * dt * dt * tri).epsilon(1e-12));
    }

    SECTION("force equal to weight freezes the motion") {
        const double m = 0.4;
        std::vector<double> u(200, m * 9.81);
        auto z = pushdown_closed_form(u, 1.0, 0.25, g, m, dt);
        for (size_t k = 0; k < z.size(); ++k) {
            const double t = static_cast<double>(k) * dt;
            CHECK(z[k] == Approx(1.0 + 0.25 * t).margin(1e-12));
        }
    }

    SECTION("matches the contact-free rollout z to 1e-12") {
        Scenario sc = fixtures::pushdown_scenario(0.25, 0.9);
        BodyModel body = scenario_body(sc);
        auto run = rollout_states<double>(initial_state(sc, body), body, 0.25, sc.schedule,
                                          sim_config(sc));
        REQUIRE_FALSE(run.diverged);
        auto u = schedule_z_samples(sc.schedule, sc.dt, sc.steps);
        auto z = pushdown_closed_form(u, run.states[0].p.z, 0.0, sc.gravity.z, 0.25, sc.dt);
        REQUIRE(z.size() == run.states.size());
        for (size_t k = 0; k < z.size(); ++k)
            CHECK(z[k] == Approx(run.states[k].p.z).margin(1e-12));
    }
}

TEST_CASE("push-down least squares") {
    Scenario sc = fixtures::pushdown_scenario(0.5, 1.2);
    PushdownModel model = scenario_pushdown_model(sc);

    SECTION("noiseless recovery is exact") {
        std::vector<double> observed(model.alpha.size());
        for (size_t k = 0; k < observed.size(); ++k)
            observed[k] = model.alpha[k] + model.beta[k] / 0.5;
        PushdownFit fit = pushdown_least_squares(observed, model.alpha, model.beta);
        CHECK(fit.m_hat == Approx(0.5).margin(1e-10));
        CHECK(fit.residual < 1e-18);
    }

    SECTION("zero force makes the mass unobservable") {
        std::vector<double> beta(model.alpha.size(), 0.0);
        std::vector<double> observed = model.alpha;
        CHECK_THROWS_AS(pushdown_least_squares(observed, model.alpha, beta), std::domain_error);
    }

    SECTION("theta perturbations never decrease the residual") {
        std::vector<double> observed(model.alpha.size());
        std::mt19937_64 rng(21);
        std::normal_distribution<double> gauss(0.0, 1e-3);
        for (size_t k = 0; k < observed.size(); ++k)
            observed[k] = model.alpha[k] + model.beta[k] / 0.5 + gauss(rng);
        PushdownFit fit = pushdown_least_squares(observed, model.alpha, model.beta);
        auto residual_at = [&](double theta) {
            double acc = 0.0;
            for (size_t k = 0; k < observed.size(); ++k) {
                const double r = model.alpha[k] + theta * model.beta[k] - observed[k];
                acc += r * r;
            }
            return acc;
        };
        CHECK(residual_at(fit.theta_hat + 1e-3) >= fit.residual);
        CHECK(residual_at(fit.theta_hat - 1e-3) >= fit.residual);
    }

    SECTION("one-millimeter z noise keeps recovery within 3 percent") {
        Scenario noisy = fixtures::pushdown_scenario(0.2, 0.8);
        noisy.steps = 200;
        PushdownModel pm = scenario_pushdown_model(noisy);
        std::vector<double> errors;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> gauss(0.0, 1e-3);
            std::vector<double> observed(pm.alpha.size());
            for (size_t k = 0; k < observed.size(); ++k)
                observed[k] = pm.alpha[k] + pm.beta[k] / 0.2 + gauss(rng);
            PushdownFit fit = pushdown_least_squares(observed, pm.alpha, pm.beta);
            errors.push_back(std::abs(fit.m_hat - 0.2) / 0.2);
        }
        std::sort(errors.begin(), errors.end());
        CHECK(errors[94] <= 0.03);  // 95th percentile
    }
}
