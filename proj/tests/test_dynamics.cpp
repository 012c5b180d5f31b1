#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "diffsim/dynamics.hpp"
#include "fixtures.hpp"

using namespace diffsim;
using Catch::Approx;

namespace {

BodyModel test_cube_body(double mass, double k_e, double k_d) {
    return make_body(fixtures::cube_mesh(0.1), mass, k_e, k_d, 4, 0);
}

RigidState state_at(double z, const Vec3& v = {}, const Vec3& w = {}) {
    RigidState s;
    s.p = {0.0, 0.0, z};
    s.q = Quat::identity();
    s.v = v;
    s.w = w;
    return s;
}

}  // namespace

TEST_CASE("contact force hand cases") {
    CHECK(norm(contact_force(0.0, 0.0, {0, 0, -1}, 1e4, 10.0)) == 0.0);

    Vec3 f = contact_force(0.01, 0.0, {0, 0, -1}, 1000.0, 0.0);
    CHECK(f.x == 0.0);
    CHECK(f.y == 0.0);
    CHECK(f.z == Approx(10.0));

    // separating fast: damping would pull the body down; clamped instead
    Vec3 clamped = contact_force(0.001, -5.0, {0, 0, -1}, 1000.0, 100.0);
    CHECK(clamped.z == 0.0);
}

TEST_CASE("ground contact detection") {
    BodyModel body = test_cube_body(0.1, 1e4, 0.0);

    SECTION("airborne body yields no events") {
        auto events = detect_ground_contacts(state_at(0.2), body, 0.0);
        CHECK(events.empty());
    }

    SECTION("bottom face exactly at ground: four events, zero penetration") {
        auto events = detect_ground_contacts(state_at(0.05), body, 0.0);
        REQUIRE(events.size() == 4);
        for (const auto& ev : events) {
            CHECK(ev.penetration == Approx(0.0).margin(1e-15));
            CHECK(norm(ev.force) == Approx(0.0).margin(1e-12));
            CHECK(norm2(ev.normal) == Approx(1.0));
        }
    }

    SECTION("cube sunk 1 mm at rest carries 10 N per bottom vertex") {
        auto events = detect_ground_contacts(state_at(0.05 - 0.001), body, 0.0);
        REQUIRE(events.size() == 4);
        for (const auto& ev : events) {
            CHECK(ev.penetration == Approx(0.001));
            CHECK(ev.penetration_rate == Approx(0.0).margin(1e-15));
            CHECK(ev.force.z == Approx(10.0));
        }
    }
}

TEST_CASE("semi-implicit step hand cases") {
    BodyModel body = test_cube_body(0.5, 0.0, 0.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 1;

    SECTION("no force, no gravity: uniform motion") {
        cfg.gravity = {0, 0, 0};
        RigidState s = state_at(1.0, {0.2, -0.1, 0.3});
        RigidState next = step_semi_implicit(s, body, {0, 0, 0}, {0, 0, 0}, cfg);
        CHECK(next.p.x == Approx(1e-3 * 0.2));
        CHECK(next.v.x == 0.2);
        CHECK(next.p.z == Approx(1.0 + 1e-3 * 0.3));
    }

    SECTION("free fall from rest shows the dt^2 position term") {
        RigidState s = state_at(1.0);
        RigidState next = step_semi_implicit(s, body, {0, 0, 0}, {0, 0, 0}, cfg);
        CHECK(next.v.z == Approx(-9.81e-3));
        CHECK(next.p.z == Approx(1.0 - 9.81e-6));
    }

    SECTION("upward force equal to weight balances gravity") {
        RigidState s = state_at(1.0);
        RigidState next =
            step_semi_implicit(s, body, {0, 0, 0.5 * 9.81}, {0, 0, 0}, cfg);
        CHECK(next.v.z == Approx(0.0).margin(1e-15));
        CHECK(next.p.z == Approx(1.0).margin(1e-15));
    }
}

TEST_CASE("explicit step hand cases") {
    BodyModel body = test_cube_body(0.5, 0.0, 0.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 1;

    SECTION("free fall from rest leaves the position unchanged") {
        RigidState s = state_at(1.0);
        RigidState next = step_explicit(s, body, {0, 0, 0}, {0, 0, 0}, cfg);
        CHECK(next.p.z == 1.0);
        CHECK(next.v.z == Approx(-9.81e-3));
    }

    SECTION("positions differ from semi-implicit by exactly dt^2 a") {
        RigidState s = state_at(0.0);  // from rest at origin: difference exact in fp
        Vec3 force{0.0, 0.0, 2.0};
        RigidState semi = step_semi_implicit(s, body, force, {0, 0, 0}, cfg);
        RigidState expl = step_explicit(s, body, force, {0, 0, 0}, cfg);
        const double a = 2.0 / 0.5 - 9.81;
        CHECK(semi.p.z - expl.p.z == 1e-3 * (1e-3 * a));

        RigidState moving = state_at(0.3, {0.1, 0.0, -0.2});
        RigidState semi2 = step_semi_implicit(moving, body, force, {0, 0, 0}, cfg);
        RigidState expl2 = step_explicit(moving, body, force, {0, 0, 0}, cfg);
        const double diff = norm(semi2.p - expl2.p);
        CHECK(diff <= 1e-6 * std::abs(a) * (1.0 + 1e-12));
        CHECK(diff == Approx(1e-6 * std::abs(a)).epsilon(1e-9));
    }

    SECTION("zero angular velocity leaves orientation unchanged") {
        RigidState s = state_at(1.0);
        RigidState next = step_explicit(s, body, {0, 0, 0}, {0, 0, 0}, cfg);
        CHECK(next.q.w == 1.0);
        CHECK(next.q.x == 0.0);
    }
}

TEST_CASE("rollout: constant trajectory without forces") {
    BodyModel body = test_cube_body(0.2, 0.0, 0.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 100;
    cfg.gravity = {0, 0, 0};
    cfg.ground_height = -100.0;
    auto result = rollout(state_at(0.5), body, {}, cfg);
    REQUIRE_FALSE(result.diverged);
    REQUIRE(result.trajectory.samples.size() == 101);
    for (const auto& s : result.trajectory.samples) {
        CHECK(s.p.z == 0.5);
        CHECK(s.p.x == 0.0);
    }
    CHECK(result.trajectory.frame_rate == Approx(1000.0));
}

TEST_CASE("rollout: ballistic arc matches the closed form within 5e-3 m") {
    BodyModel body = test_cube_body(0.3, 0.0, 0.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 1000;
    cfg.ground_height = -100.0;
    const double v0 = 2.0;
    auto result = rollout(state_at(0.0, {0.0, 0.0, v0}), body, {}, cfg);
    REQUIRE_FALSE(result.diverged);
    double worst = 0.0;
    for (const auto& s : result.trajectory.samples) {
        const double exact = v0 * s.t - 0.5 * 9.81 * s.t * s.t;
        worst = std::max(worst, std::abs(s.p.z - exact));
    }
    CHECK(worst <= 5e-3);
}

TEST_CASE("rollout: semi-implicit free fall equals the telescoped sum") {
    BodyModel body = test_cube_body(0.3, 0.0, 0.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 1000;
    cfg.ground_height = -1000.0;
    const double z0 = 2.0;
    auto result = rollout(state_at(z0), body, {}, cfg);
    REQUIRE_FALSE(result.diverged);
    for (size_t n = 0; n <= 1000; n += 97) {
        const double tri = 0.5 * static_cast<double>(n) * static_cast<double>(n + 1);
        const double exact = z0 - 9.81 * 1e-6 * tri;
        CHECK(result.trajectory.samples[n].p.z == Approx(exact).epsilon(1e-12));
    }
}

TEST_CASE("rollout: momentum exactly conserved without gravity or contact") {
    BodyModel body = test_cube_body(0.7, 0.0, 0.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 1000;
    cfg.gravity = {0, 0, 0};
    cfg.ground_height = -1000.0;
    const Vec3 v0{0.3, -0.2, 0.11};
    auto run = rollout_states<double>(state_at(0.0, v0), body, body.mass, {}, cfg);
    REQUIRE_FALSE(run.diverged);
    for (const auto& s : run.states) {
        CHECK(s.v.x == v0.x);
        CHECK(s.v.y == v0.y);
        CHECK(s.v.z == v0.z);
    }
}

TEST_CASE("rollout: resting cube stays near its penalty equilibrium depth") {
    const double mass = 0.1;
    const double k_e = 1e4;
    const double k_d = 20.0;
    BodyModel body = test_cube_body(mass, k_e, k_d);
    const double c_star = mass * 9.81 / (k_e * 4.0);

    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 1000;
    cfg.ground_height = 0.0;
    auto result = rollout(state_at(0.05 - c_star), body, {}, cfg);
    REQUIRE_FALSE(result.diverged);
    for (const auto& s : result.trajectory.samples) {
        const double depth = -(s.p.z - 0.05);  // penetration of the bottom face
        CHECK(std::abs(depth - c_star) <= 2.0 * c_star);
    }
}

TEST_CASE("rollout: stiff contact with tiny mass diverges under explicit Euler") {
    BodyModel body = test_cube_body(0.002, 1e5, 0.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 500;
    cfg.ground_height = 0.0;
    ForceSchedule sched;
    sched.entries.push_back({0.0, 0.5, {0.0, 0.0, -300.0}, {0.0, 0.0, 0.0}});

    cfg.integrator = Integrator::Explicit;
    auto result = rollout(state_at(0.04), body, sched, cfg);
    CHECK(result.diverged);
    CHECK(result.divergence_step < 500);

    cfg.integrator = Integrator::SemiImplicit;
    auto semi = rollout(state_at(0.04), body, sched, cfg);
    CHECK_FALSE(semi.diverged);
}

TEST_CASE("rollout: deterministic bit-identical repetition") {
    BodyModel body = test_cube_body(0.15, 5e3, 8.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 300;
    cfg.ground_height = 0.0;
    ForceSchedule sched;
    sched.entries.push_back({0.05, 0.2, {0.1, 0.0, -1.0}, {0.02, 0.0, 0.0}});

    auto a = rollout(state_at(0.08), body, sched, cfg);
    auto b = rollout(state_at(0.08), body, sched, cfg);
    REQUIRE(a.trajectory.samples.size() == b.trajectory.samples.size());
    REQUIRE_FALSE(a.diverged);
    CHECK(std::memcmp(a.trajectory.samples.data(), b.trajectory.samples.data(),
                      a.trajectory.samples.size() * sizeof(Trajectory::Sample)) == 0);
}

TEST_CASE("scheduled force at an offset point induces the r cross F torque") {
    BodyModel body = test_cube_body(0.5, 0.0, 0.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 50;
    cfg.gravity = {0, 0, 0};
    cfg.ground_height = -100.0;
    ForceSchedule sched;
    sched.entries.push_back({0.0, 1.0, {0.0, 0.0, 1.0}, {0.05, 0.0, 0.0}});

    auto run = rollout_states<double>(state_at(0.0), body, body.mass, sched, cfg);
    REQUIRE_FALSE(run.diverged);
    // torque about y: r x F = (0.05,0,0) x (0,0,1) = (0,-0.05,0)
    CHECK(run.states.back().w.y < 0.0);
    CHECK(run.states.back().w.x == Approx(0.0).margin(1e-12));
    CHECK(run.states.back().w.z == Approx(0.0).margin(1e-12));
    CHECK(run.states.back().v.z > 0.0);
}

TEST_CASE("singular inertia: torque-free bodies step, torqued bodies error") {
    // four collinear particles along z: zero moment about z is fine, but the
    // inertia matrix is singular so any torque must be rejected
    MeshModel line;
    line.vertices = {{0, 0, -0.1}, {0, 0, -0.03}, {0, 0, 0.03}, {0, 0, 0.1}};
    line.faces = {{0, 1, 2}, {1, 2, 3}, {0, 2, 3}, {0, 1, 3}};
    BodyModel body = make_body(line, 0.1, 0.0, 0.0, 2, 0);

    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.steps = 1;
    cfg.gravity = {0, 0, 0};

    RigidState s = state_at(1.0);
    CHECK_NOTHROW(step_semi_implicit(s, body, {0, 0, 0}, {0, 0, 0}, cfg));
    CHECK_THROWS_AS(step_semi_implicit(s, body, {0, 0, 0}, {0, 0, 1e-3}, cfg),
                    std::domain_error);
}
