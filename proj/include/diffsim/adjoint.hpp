#pragma once

// Reverse-mode differentiation of a rollout with respect to mass, its
// finite-difference verification oracle, and the push-down closed form
// (affine in 1/m) with the convex least-squares mass estimate.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "diffsim/autodiff.hpp"
#include "diffsim/dynamics.hpp"

namespace diffsim {

class DivergedRollout : public std::runtime_error {
  public:
    explicit DivergedRollout(int step)
        : std::runtime_error("rollout diverged at step " + std::to_string(step)), step_(step) {}
    int step() const { return step_; }

  private:
    int step_;
};

struct RecordedRollout {
    ad::Tape tape;
    std::int32_t mass_node = -1;
    Trajectory trajectory;
    // Tape node per pose scalar (p.x p.y p.z q.w q.x q.y q.z); -1 marks a
    // value that stayed constant and never reached the tape.
    std::vector<std::array<std::int32_t, 7>> pose_nodes;
    std::vector<std::vector<ContactEvent>> contacts;
    bool diverged = false;
    int divergence_step = -1;
};

// Runs the semi-implicit rollout on tape-recorded scalars. The returned
// trajectory is the plain rollout's, bit for bit: recording does not alter
// the arithmetic, it only remembers it.
inline RecordedRollout record_rollout(const RigidState& init, const BodyModel& body,
                                      const ForceSchedule& sched, const SimConfig& cfg,
                                      double mass) {
    if (cfg.integrator != Integrator::SemiImplicit)
        throw std::invalid_argument(
            "record_rollout: only semi-implicit tapes are supported; explicit Euler gradients "
            "must use finite differences");

    RecordedRollout rec;
    rec.tape.reserve(static_cast<size_t>(cfg.steps) * 256);
    ad::Var m = rec.tape.input(mass);

    RigidStateT<ad::Var> start;
    start.p = {ad::Var{init.p.x}, ad::Var{init.p.y}, ad::Var{init.p.z}};
    start.q = {ad::Var{init.q.w}, ad::Var{init.q.x}, ad::Var{init.q.y}, ad::Var{init.q.z}};
    start.v = {ad::Var{init.v.x}, ad::Var{init.v.y}, ad::Var{init.v.z}};
    start.w = {ad::Var{init.w.x}, ad::Var{init.w.y}, ad::Var{init.w.z}};
    start.t = init.t;

    auto run = rollout_states<ad::Var>(start, body, m, sched, cfg);
    rec.mass_node = m.id;
    rec.trajectory = trajectory_from_states(run.states, cfg.dt);
    rec.contacts = std::move(run.contacts);
    rec.diverged = run.diverged;
    rec.divergence_step = run.divergence_step;
    rec.pose_nodes.reserve(run.states.size());
    for (const auto& s : run.states)
        rec.pose_nodes.push_back({s.p.x.id, s.p.y.id, s.p.z.id, s.q.w.id, s.q.x.id, s.q.y.id,
                                  s.q.z.id});
    return rec;
}

// Forward re-execution of the tape; proves the tape is a faithful record.
inline Trajectory replay_trajectory(const RecordedRollout& rec) {
    const std::vector<double> values = rec.tape.replay();
    Trajectory out;
    out.frame_rate = rec.trajectory.frame_rate;
    out.samples.reserve(rec.trajectory.samples.size());
    for (size_t i = 0; i < rec.trajectory.samples.size(); ++i) {
        const auto& nodes = rec.pose_nodes[i];
        const auto& stored = rec.trajectory.samples[i];
        auto pick = [&](int slot, double fallback) {
            return nodes[static_cast<size_t>(slot)] >= 0
                       ? values[static_cast<size_t>(nodes[static_cast<size_t>(slot)])]
                       : fallback;
        };
        Trajectory::Sample s;
        s.t = stored.t;
        s.p = {pick(0, stored.p.x), pick(1, stored.p.y), pick(2, stored.p.z)};
        s.q = {pick(3, stored.q.w), pick(4, stored.q.x), pick(5, stored.q.y), pick(6, stored.q.z)};
        out.samples.push_back(s);
    }
    return out;
}

struct GradReport {
    double grad = 0.0;
    double loss = 0.0;
    std::optional<double> fd_grad;
    std::optional<double> rel_err;
};

namespace detail {

// Squared pose residual of one sample, with the observed quaternion flipped
// onto the simulated hemisphere. Shared by the taped and plain loss paths so
// both run the identical arithmetic.
template <class T>
inline T pose_residual_sq(const Vec3T<T>& p, const QuatT<T>& q, const Vec3& rp, const Quat& rq_in,
                          double quat_weight) {
    const double align = value_of(q.w) * rq_in.w + value_of(q.x) * rq_in.x +
                         value_of(q.y) * rq_in.y + value_of(q.z) * rq_in.z;
    const Quat rq = align < 0.0 ? Quat{-rq_in.w, -rq_in.x, -rq_in.y, -rq_in.z} : rq_in;
    T dx = p.x - rp.x;
    T dy = p.y - rp.y;
    T dz = p.z - rp.z;
    T dw = q.w - rq.w;
    T dqx = q.x - rq.x;
    T dqy = q.y - rq.y;
    T dqz = q.z - rq.z;
    T pos = dx * dx + dy * dy + dz * dz;
    T rot = dw * dw + dqx * dqx + dqy * dqy + dqz * dqz;
    return pos + quat_weight * rot;
}

inline void check_aligned(double t_sim, double t_real) {
    if (std::abs(t_sim - t_real) > 1e-9)
        throw std::invalid_argument("trajectory alignment error: timestamps differ");
}

}  // namespace detail

// Trajectory loss of a recorded rollout against observations covering sim
// samples [start, start + real.samples.size()), and its exact reverse-mode
// d(loss)/d(mass).
inline GradReport grad_mass_window(RecordedRollout& rec, const Trajectory& real,
                                   double quat_weight, size_t start) {
    if (rec.diverged) throw DivergedRollout(rec.divergence_step);
    if (start + real.samples.size() > rec.trajectory.samples.size())
        throw std::invalid_argument("trajectory alignment error: length mismatch");

    ad::Var loss{0.0};
    for (size_t i = 0; i < real.samples.size(); ++i) {
        const size_t k = start + i;
        const auto& sim = rec.trajectory.samples[k];
        const auto& obs = real.samples[i];
        detail::check_aligned(sim.t, obs.t);
        const auto& nodes = rec.pose_nodes[k];
        auto var = [&](int slot, double v) {
            const std::int32_t id = nodes[static_cast<size_t>(slot)];
            return id >= 0 ? ad::Var{&rec.tape, id, v} : ad::Var{v};
        };
        Vec3T<ad::Var> p{var(0, sim.p.x), var(1, sim.p.y), var(2, sim.p.z)};
        QuatT<ad::Var> q{var(3, sim.q.w), var(4, sim.q.x), var(5, sim.q.y), var(6, sim.q.z)};
        loss += detail::pose_residual_sq(p, q, obs.p, obs.q, quat_weight);
    }

    GradReport report;
    report.loss = loss.val();
    if (loss.tracked()) {
        const std::vector<double> adj = rec.tape.gradient(loss.id);
        report.grad = adj[static_cast<size_t>(rec.mass_node)];
    }
    return report;
}

inline GradReport grad_mass(RecordedRollout& rec, const Trajectory& real, double quat_weight = 1.0) {
    if (!rec.diverged && real.samples.size() != rec.trajectory.samples.size())
        throw std::invalid_argument("trajectory alignment error: length mismatch");
    return grad_mass_window(rec, real, quat_weight, 0);
}

// Plain-double counterpart of the taped loss; used by finite differences.
inline double trajectory_loss_window(const Trajectory& sim, const Trajectory& real,
                                     double quat_weight, size_t start) {
    if (start + real.samples.size() > sim.samples.size())
        throw std::invalid_argument("trajectory alignment error: length mismatch");
    double loss = 0.0;
    for (size_t i = 0; i < real.samples.size(); ++i) {
        const auto& s = sim.samples[start + i];
        const auto& o = real.samples[i];
        detail::check_aligned(s.t, o.t);
        loss += detail::pose_residual_sq<double>(s.p, s.q, o.p, o.q, quat_weight);
    }
    return loss;
}

// Central difference (L(m+h) - L(m-h)) / 2h over an arbitrary loss callable.
template <class LossFn>
inline double finite_diff(LossFn&& loss_of_mass, double m, double h) {
    if (!(m - h > 0.0)) throw std::domain_error("finite_diff: m - h must stay positive");
    const double up = loss_of_mass(m + h);
    const double down = loss_of_mass(m - h);
    return (up - down) / (2.0 * h);
}

// ---------------------------------------------------------------------------
// Push-down closed form: z(t) = alpha(t) + beta(t) / m, discretized with the
// same first-order quadrature the semi-implicit integrator induces.
// ---------------------------------------------------------------------------

struct PushdownModel {
    std::vector<double> alpha;  // per sample k = 0..steps
    std::vector<double> beta;
    double z0 = 0.0;
    double v0 = 0.0;
};

inline PushdownModel build_pushdown_model(const std::vector<double>& u_samples, double z0,
                                          double v0, double gravity_z, double dt) {
    const size_t n = u_samples.size();
    PushdownModel model;
    model.z0 = z0;
    model.v0 = v0;
    model.alpha.resize(n + 1);
    model.beta.resize(n + 1);
    double force_sum = 0.0;   // running sum of u_j
    double beta = 0.0;        // dt^2 * sum_j (k - j) u_j via incremental update
    for (size_t k = 0; k <= n; ++k) {
        const double t_k = static_cast<double>(k) * dt;
        const double tri = 0.5 * static_cast<double>(k) * static_cast<double>(k + 1);
        model.alpha[k] = z0 + v0 * t_k + gravity_z * dt * dt * tri;
        model.beta[k] = beta;
        if (k < n) {
            force_sum += u_samples[k];
            beta += dt * dt * force_sum;
        }
    }
    return model;
}

inline std::vector<double> pushdown_closed_form(const std::vector<double>& u_samples, double z0,
                                                double v0, double gravity_z, double m, double dt) {
    if (!(m > 0.0)) throw std::domain_error("pushdown_closed_form: mass must be positive");
    PushdownModel model = build_pushdown_model(u_samples, z0, v0, gravity_z, dt);
    std::vector<double> z(model.alpha.size());
    for (size_t k = 0; k < z.size(); ++k) z[k] = model.alpha[k] + model.beta[k] / m;
    return z;
}

// Net scheduled z-force at every step start; the u(t) samples of the
// push-down model.
inline std::vector<double> schedule_z_samples(const ForceSchedule& sched, double dt, int steps) {
    std::vector<double> u(static_cast<size_t>(steps), 0.0);
    for (int k = 0; k < steps; ++k) {
        const double t_k = static_cast<double>(k) * dt;
        for (const ForceEntry& e : sched.entries)
            if (t_k >= e.t_start && t_k < e.t_end) u[static_cast<size_t>(k)] += e.force.z;
    }
    return u;
}

struct PushdownFit {
    double m_hat = 0.0;
    double theta_hat = 0.0;  // 1/m
    double residual = 0.0;
};

// Least squares in theta = 1/m: theta = sum beta (z - alpha) / sum beta^2.
// Convex, so the stationary point is the global minimum.
inline PushdownFit pushdown_least_squares(const std::vector<double>& observed_z,
                                          const std::vector<double>& alpha,
                                          const std::vector<double>& beta) {
    if (observed_z.size() != alpha.size() || alpha.size() != beta.size())
        throw std::invalid_argument("pushdown_least_squares: length mismatch");
    double bb = 0.0;
    double bz = 0.0;
    for (size_t k = 0; k < beta.size(); ++k) {
        bb += beta[k] * beta[k];
        bz += beta[k] * (observed_z[k] - alpha[k]);
    }
    if (!(bb > 0.0))
        throw std::domain_error("pushdown_least_squares: mass unobservable (beta identically zero)");
    PushdownFit fit;
    fit.theta_hat = bz / bb;
    if (!(fit.theta_hat > 0.0))
        throw std::runtime_error("pushdown_least_squares: non-physical mass (theta <= 0)");
    fit.m_hat = 1.0 / fit.theta_hat;
    for (size_t k = 0; k < beta.size(); ++k) {
        const double r = alpha[k] + fit.theta_hat * beta[k] - observed_z[k];
        fit.residual += r * r;
    }
    return fit;
}

}  // namespace diffsim
