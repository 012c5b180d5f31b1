#pragma once

// Forward simulation of one free rigid body under gravity, scheduled pushes,
// and penalty ground contact. Stepping code is generic over the scalar type:
// instantiate with double for plain rollouts or with ad::Var to record a
// differentiation tape of the whole rollout.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "diffsim/autodiff.hpp"
#include "diffsim/geometry.hpp"
#include "diffsim/math.hpp"

namespace diffsim {

template <class T>
struct RigidStateT {
    Vec3T<T> p;          // COM position, world frame
    QuatT<T> q;          // orientation, unit
    Vec3T<T> v;          // linear velocity
    Vec3T<T> w;          // angular velocity, world frame
    double t = 0.0;
};

using RigidState = RigidStateT<double>;

struct BodyModel {
    MeshModel mesh;                    // vertices in body frame, COM at origin
    double mass = 0.0;                 // total mass (kg)
    Mat3 inertia_body;                 // body-frame inertia (kg m^2)
    std::vector<int> contact_vertices;
    double k_e = 0.0;                  // contact stiffness (N/m)
    double k_d = 0.0;                  // contact damping (N s/m)
    bool per_particle_full_mass = true;
};

enum class Integrator { SemiImplicit, Explicit };

struct SimConfig {
    double dt = 1e-3;
    Vec3 gravity{0.0, 0.0, -9.81};
    Integrator integrator = Integrator::SemiImplicit;
    double ground_height = 0.0;
    int steps = 1;
};

struct ForceEntry {
    double t_start = 0.0;
    double t_end = 0.0;
    Vec3 force;        // world frame (N)
    Vec3 point_body;   // application point, body frame (m)
};

struct ForceSchedule {
    std::vector<ForceEntry> entries;
};

template <class T>
struct ContactEventT {
    int vertex_index = -1;
    Vec3T<T> point_world;
    Vec3 normal;            // contact normal of the penalty model
    T penetration{};        // >= 0
    T penetration_rate{};   // d(penetration)/dt
    Vec3T<T> force;
    Vec3T<T> arm;           // point_world - COM, for torque aggregation
};

using ContactEvent = ContactEventT<double>;

struct Trajectory {
    struct Sample {
        double t;
        Vec3 p;
        Quat q;
    };
    std::vector<Sample> samples;
    double frame_rate = 0.0;
};

namespace detail {
template <class T> inline Vec3T<T> to_vec(const Vec3& v) { return {T(v.x), T(v.y), T(v.z)}; }
template <class T> inline Mat3T<T> to_mat(const Mat3& m) {
    Mat3T<T> out;
    for (int i = 0; i < 9; ++i) out.m[static_cast<size_t>(i)] = T(m.m[static_cast<size_t>(i)]);
    return out;
}
}  // namespace detail

// Penalty normal force -n (k_e C + k_d Cdot), clamped so it never becomes
// adhesive when damping dominates during separation.
template <class T>
inline Vec3T<T> contact_force(const T& penetration, const T& penetration_rate, const Vec3& normal,
                              double k_e, double k_d) {
    T magnitude = relu(k_e * penetration + k_d * penetration_rate);
    return {-normal.x * magnitude, -normal.y * magnitude, -normal.z * magnitude};
}

inline Vec3 contact_force(double penetration, double penetration_rate, const Vec3& normal,
                          double k_e, double k_d) {
    return contact_force<double>(penetration, penetration_rate, normal, k_e, k_d);
}

// One event per contact vertex at or below the ground plane. Penetration is
// measured along +z; the model normal points from the body into the ground.
template <class T>
inline std::vector<ContactEventT<T>> detect_ground_contacts_with(const RigidStateT<T>& state,
                                                                 const BodyModel& body,
                                                                 double ground_height,
                                                                 const Mat3T<T>& rot) {
    static const Vec3 kGroundNormal{0.0, 0.0, -1.0};
    std::vector<ContactEventT<T>> events;
    for (int ci : body.contact_vertices) {
        const Vec3T<T> r = rot * detail::to_vec<T>(body.mesh.vertices[static_cast<size_t>(ci)]);
        const Vec3T<T> x = state.p + r;
        if (value_of(x.z) <= ground_height) {
            ContactEventT<T> ev;
            ev.vertex_index = ci;
            ev.point_world = x;
            ev.normal = kGroundNormal;
            ev.penetration = ground_height - x.z;
            const Vec3T<T> v_vertex = state.v + cross(state.w, r);
            ev.penetration_rate = -v_vertex.z;
            ev.force = contact_force(ev.penetration, ev.penetration_rate, kGroundNormal,
                                     body.k_e, body.k_d);
            ev.arm = r;
            events.push_back(ev);
        }
    }
    return events;
}

template <class T>
inline std::vector<ContactEventT<T>> detect_ground_contacts(const RigidStateT<T>& state,
                                                            const BodyModel& body,
                                                            double ground_height) {
    return detect_ground_contacts_with(state, body, ground_height, quat_to_mat3(state.q));
}

namespace detail {

constexpr double kSingularInertiaDet = 1e-30;

// Angular velocity update omega' = omega + dt I^-1 (tau - omega x (I omega))
// with the world-frame inertia I = R I_body R^T.
template <class T>
inline Vec3T<T> angular_update(const RigidStateT<T>& state, const BodyModel& body,
                               const Vec3T<T>& torque, double dt, const Mat3T<T>& rot) {
    const Mat3T<T> inertia = rot * to_mat<T>(body.inertia_body) * transpose(rot);
    const Vec3T<T> momentum = inertia * state.w;
    const Vec3T<T> rhs = torque - cross(state.w, momentum);
    const T d = det(inertia);
    if (std::abs(value_of(d)) < kSingularInertiaDet) {
        if (value_of(norm2(rhs)) > 0.0)
            throw std::domain_error("angular update: singular inertia with nonzero torque");
        return state.w;
    }
    return state.w + (inverse(inertia, d) * rhs) * dt;
}

}  // namespace detail

// Semi-implicit (symplectic) Euler: velocity first, position advanced with
// the new velocity.
template <class T>
inline RigidStateT<T> step_semi_implicit(const RigidStateT<T>& state, const BodyModel& body,
                                         const T& mass, const Vec3T<T>& net_force,
                                         const Vec3T<T>& net_torque, const SimConfig& cfg) {
    const Mat3T<T> rot = quat_to_mat3(state.q);
    RigidStateT<T> next;
    const Vec3T<T> accel = net_force / mass + detail::to_vec<T>(cfg.gravity);
    next.v = state.v + accel * cfg.dt;
    next.p = state.p + next.v * cfg.dt;
    next.w = detail::angular_update(state, body, net_torque, cfg.dt, rot);
    next.q = quat_integrate(state.q, next.w, cfg.dt);
    next.t = state.t + cfg.dt;
    return next;
}

// Explicit Euler: position and orientation advanced with the old velocities.
template <class T>
inline RigidStateT<T> step_explicit(const RigidStateT<T>& state, const BodyModel& body,
                                    const T& mass, const Vec3T<T>& net_force,
                                    const Vec3T<T>& net_torque, const SimConfig& cfg) {
    const Mat3T<T> rot = quat_to_mat3(state.q);
    RigidStateT<T> next;
    next.p = state.p + state.v * cfg.dt;
    next.q = quat_integrate(state.q, state.w, cfg.dt);
    const Vec3T<T> accel = net_force / mass + detail::to_vec<T>(cfg.gravity);
    next.v = state.v + accel * cfg.dt;
    next.w = detail::angular_update(state, body, net_torque, cfg.dt, rot);
    next.t = state.t + cfg.dt;
    return next;
}

inline RigidState step_semi_implicit(const RigidState& state, const BodyModel& body,
                                     const Vec3& net_force, const Vec3& net_torque,
                                     const SimConfig& cfg) {
    return step_semi_implicit<double>(state, body, body.mass, net_force, net_torque, cfg);
}

inline RigidState step_explicit(const RigidState& state, const BodyModel& body,
                                const Vec3& net_force, const Vec3& net_torque,
                                const SimConfig& cfg) {
    return step_explicit<double>(state, body, body.mass, net_force, net_torque, cfg);
}

template <class T>
struct RolloutStates {
    std::vector<RigidStateT<T>> states;                // steps+1 entries unless diverged
    std::vector<std::vector<ContactEvent>> contacts;   // snapshot per executed step
    bool diverged = false;
    int divergence_step = -1;
};

namespace detail {

constexpr double kDivergenceLimit = 1e6;

template <class T>
inline bool state_finite(const RigidStateT<T>& s) {
    const double vals[] = {value_of(s.p.x), value_of(s.p.y), value_of(s.p.z),
                           value_of(s.v.x), value_of(s.v.y), value_of(s.v.z),
                           value_of(s.w.x), value_of(s.w.y), value_of(s.w.z),
                           value_of(s.q.w), value_of(s.q.x), value_of(s.q.y), value_of(s.q.z)};
    for (double v : vals)
        if (!std::isfinite(v) || std::abs(v) > kDivergenceLimit) return false;
    return true;
}

template <class T>
inline ContactEvent snapshot(const ContactEventT<T>& ev) {
    ContactEvent out;
    out.vertex_index = ev.vertex_index;
    out.point_world = {value_of(ev.point_world.x), value_of(ev.point_world.y), value_of(ev.point_world.z)};
    out.normal = ev.normal;
    out.penetration = value_of(ev.penetration);
    out.penetration_rate = value_of(ev.penetration_rate);
    out.force = {value_of(ev.force.x), value_of(ev.force.y), value_of(ev.force.z)};
    out.arm = {value_of(ev.arm.x), value_of(ev.arm.y), value_of(ev.arm.z)};
    return out;
}

}  // namespace detail

// Iterates the configured step function. Per step the aggregate wrench is
// gravity (applied as acceleration), scheduled entries active at the step
// start time, and penalty ground contacts; scheduled and contact forces
// contribute their induced torques about the COM.
template <class T>
inline RolloutStates<T> rollout_states(const RigidStateT<T>& init, const BodyModel& body,
                                       const T& mass, const ForceSchedule& sched,
                                       const SimConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("rollout: steps must be >= 1");
    RolloutStates<T> out;
    out.states.reserve(static_cast<size_t>(cfg.steps) + 1);
    out.contacts.reserve(static_cast<size_t>(cfg.steps));
    RigidStateT<T> state = init;
    state.t = 0.0;
    out.states.push_back(state);

    for (int k = 0; k < cfg.steps; ++k) {
        const double t_k = static_cast<double>(k) * cfg.dt;
        const Mat3T<T> rot = quat_to_mat3(state.q);

        Vec3T<T> force{};
        Vec3T<T> torque{};
        for (const ForceEntry& entry : sched.entries) {
            if (t_k >= entry.t_start && t_k < entry.t_end) {
                const Vec3T<T> f = detail::to_vec<T>(entry.force);
                force += f;
                torque += cross(rot * detail::to_vec<T>(entry.point_body), f);
            }
        }

        auto events = detect_ground_contacts_with(state, body, cfg.ground_height, rot);
        std::vector<ContactEvent> snap;
        snap.reserve(events.size());
        for (const auto& ev : events) {
            force += ev.force;
            torque += cross(ev.arm, ev.force);
            snap.push_back(detail::snapshot(ev));
        }
        out.contacts.push_back(std::move(snap));

        RigidStateT<T> next = cfg.integrator == Integrator::SemiImplicit
                                  ? step_semi_implicit(state, body, mass, force, torque, cfg)
                                  : step_explicit(state, body, mass, force, torque, cfg);
        next.t = static_cast<double>(k + 1) * cfg.dt;
        if (!detail::state_finite(next)) {
            out.diverged = true;
            out.divergence_step = k;
            return out;
        }
        state = next;
        out.states.push_back(state);
    }
    return out;
}

struct RolloutResult {
    Trajectory trajectory;
    std::vector<std::vector<ContactEvent>> contacts;
    bool diverged = false;
    int divergence_step = -1;
};

template <class T>
inline Trajectory trajectory_from_states(const std::vector<RigidStateT<T>>& states, double dt) {
    Trajectory traj;
    traj.frame_rate = 1.0 / dt;
    traj.samples.reserve(states.size());
    for (const auto& s : states) {
        traj.samples.push_back({s.t,
                                {value_of(s.p.x), value_of(s.p.y), value_of(s.p.z)},
                                {value_of(s.q.w), value_of(s.q.x), value_of(s.q.y), value_of(s.q.z)}});
    }
    return traj;
}

inline RolloutResult rollout(const RigidState& init, const BodyModel& body,
                             const ForceSchedule& sched, const SimConfig& cfg) {
    auto run = rollout_states<double>(init, body, body.mass, sched, cfg);
    RolloutResult out;
    out.trajectory = trajectory_from_states(run.states, cfg.dt);
    out.contacts = std::move(run.contacts);
    out.diverged = run.diverged;
    out.divergence_step = run.divergence_step;
    return out;
}

// Builds a simulation-ready body: vertices re-centered so the COM sits at the
// body-frame origin, inertia from a uniform mass split over the vertices,
// contact vertices sampled toward the lowest-z face.
inline BodyModel make_body(const MeshModel& mesh, double mass, double k_e, double k_d,
                           int contact_vertex_count, std::uint64_t sample_seed) {
    if (mesh.vertices.size() < 4)
        throw std::domain_error("make_body: volumetric body needs at least 4 vertices");
    if (!(mass > 0.0)) throw std::domain_error("make_body: mass must be positive");

    BodyModel body;
    body.mesh = mesh;
    body.mass = mass;
    body.k_e = k_e;
    body.k_d = k_d;

    const double per_particle = mass / static_cast<double>(mesh.vertices.size());
    ParticleSet ps{mesh.vertices,
                   std::vector<double>(mesh.vertices.size(), per_particle)};
    const Vec3 com = center_of_mass(ps);
    for (Vec3& v : body.mesh.vertices) v -= com;
    ps.positions = body.mesh.vertices;
    body.inertia_body = inertia_tensor(ps, Vec3{});

    body.contact_vertices = sample_contact_vertices(body.mesh, contact_vertex_count, sample_seed);
    return body;
}

}  // namespace diffsim
