#pragma once

// Position-Based Dynamics for a particle set: semi-implicit prediction,
// Gauss-Seidel constraint projection with mass-weighted Lagrange
// multipliers, and the position-difference velocity update.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "diffsim/math.hpp"

namespace diffsim {

struct PbdParticleState {
    std::vector<Vec3> positions;
    std::vector<Vec3> prev_positions;
    std::vector<Vec3> velocities;
    std::vector<double> inv_masses;  // 0 pins the particle

    size_t size() const { return positions.size(); }
};

struct Constraint {
    enum class Kind { Distance, GroundPlane };
    Kind kind = Kind::Distance;
    int i = 0;
    int j = 0;           // Distance only
    double rest = 0.0;   // Distance: rest length; GroundPlane: height
    double stiffness = 1.0;

    static Constraint distance(int i, int j, double rest, double stiffness = 1.0) {
        if (i == j) throw std::invalid_argument("distance constraint needs distinct particles");
        if (rest < 0.0) throw std::invalid_argument("distance constraint needs rest >= 0");
        return Constraint{Kind::Distance, i, j, rest, stiffness};
    }
    static Constraint ground_plane(int i, double height, double stiffness = 1.0) {
        return Constraint{Kind::GroundPlane, i, 0, height, stiffness};
    }
};

// v' = v + dt f/m_i, x' = x + dt v'. Pinned particles are left untouched.
inline PbdParticleState pbd_predict(const PbdParticleState& state,
                                    std::span<const Vec3> force_per_particle, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("pbd_predict: dt must be positive");
    if (force_per_particle.size() != state.size())
        throw std::invalid_argument("pbd_predict: force list size mismatch");
    PbdParticleState out = state;
    out.prev_positions = state.positions;
    for (size_t i = 0; i < state.size(); ++i) {
        if (state.inv_masses[i] == 0.0) continue;
        out.velocities[i] = state.velocities[i] + force_per_particle[i] * (dt * state.inv_masses[i]);
        out.positions[i] = state.positions[i] + out.velocities[i] * dt;
    }
    return out;
}

inline PbdParticleState pbd_predict(const PbdParticleState& state, const Vec3& force, double dt) {
    std::vector<Vec3> forces(state.size(), force);
    return pbd_predict(state, forces, dt);
}

// Signed violation used by the projection; 0 when satisfied.
inline double constraint_value(const PbdParticleState& state, const Constraint& c) {
    if (c.kind == Constraint::Kind::Distance) {
        const Vec3 d = state.positions[static_cast<size_t>(c.i)] -
                       state.positions[static_cast<size_t>(c.j)];
        return norm(d) - c.rest;
    }
    const double gap = state.positions[static_cast<size_t>(c.i)].z - c.rest;
    return gap < 0.0 ? gap : 0.0;  // inequality: only penetration counts
}

inline double constraint_residual(const PbdParticleState& state, const Constraint& c) {
    return std::abs(constraint_value(state, c));
}

struct ProjectionResult {
    PbdParticleState state;
    bool unsatisfiable = false;
};

// dx_i = -lambda (1/m_i) grad_i C, lambda = C / sum_j (1/m_j)|grad_j C|^2,
// scaled by the constraint stiffness.
inline ProjectionResult project_constraint(const PbdParticleState& state, const Constraint& c) {
    ProjectionResult out{state, false};
    if (c.kind == Constraint::Kind::Distance) {
        const size_t i = static_cast<size_t>(c.i);
        const size_t j = static_cast<size_t>(c.j);
        if (i >= state.size() || j >= state.size())
            throw std::out_of_range("project_constraint: particle index out of range");
        const Vec3 d = state.positions[i] - state.positions[j];
        const double len = norm(d);
        const double violation = len - c.rest;
        if (violation == 0.0) return out;
        const double wi = state.inv_masses[i];
        const double wj = state.inv_masses[j];
        if (wi + wj == 0.0) {
            out.unsatisfiable = true;
            return out;
        }
        if (len < 1e-12) return out;  // coincident points: gradient undefined, leave as-is
        const Vec3 n = d / len;
        const double lambda = violation / (wi + wj);
        out.state.positions[i] -= n * (lambda * wi * c.stiffness);
        out.state.positions[j] += n * (lambda * wj * c.stiffness);
        return out;
    }

    const size_t i = static_cast<size_t>(c.i);
    if (i >= state.size()) throw std::out_of_range("project_constraint: particle index out of range");
    const double gap = state.positions[i].z - c.rest;
    if (gap >= 0.0) return out;
    const double wi = state.inv_masses[i];
    if (wi == 0.0) {
        out.unsatisfiable = true;
        return out;
    }
    // grad C = e_z, lambda = C / w_i, dx = -lambda w_i e_z = -C e_z
    out.state.positions[i].z -= gap * c.stiffness;
    return out;
}

// v = (x - x_prev) / dt
inline PbdParticleState pbd_velocity_update(const PbdParticleState& state, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("pbd_velocity_update: dt must be positive");
    PbdParticleState out = state;
    for (size_t i = 0; i < state.size(); ++i)
        out.velocities[i] = (state.positions[i] - state.prev_positions[i]) / dt;
    return out;
}

struct PbdStepResult {
    PbdParticleState state;
    int unsatisfiable_projections = 0;
};

// predict -> `iterations` Gauss-Seidel sweeps over constraints in list order
// -> velocity update.
inline PbdStepResult pbd_step(const PbdParticleState& state,
                              const std::vector<Constraint>& constraints,
                              std::span<const Vec3> force_per_particle, double dt, int iterations) {
    if (iterations < 1) throw std::invalid_argument("pbd_step: iterations must be >= 1");
    PbdStepResult out;
    out.state = pbd_predict(state, force_per_particle, dt);
    for (int it = 0; it < iterations; ++it) {
        for (const Constraint& c : constraints) {
            ProjectionResult proj = project_constraint(out.state, c);
            out.state = std::move(proj.state);
            if (proj.unsatisfiable) ++out.unsatisfiable_projections;
        }
    }
    out.state = pbd_velocity_update(out.state, dt);
    return out;
}

inline PbdStepResult pbd_step(const PbdParticleState& state,
                              const std::vector<Constraint>& constraints, const Vec3& force,
                              double dt, int iterations) {
    std::vector<Vec3> forces(state.size(), force);
    return pbd_step(state, constraints, forces, dt, iterations);
}

}  // namespace diffsim
