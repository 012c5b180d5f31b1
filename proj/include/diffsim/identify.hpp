#pragma once

// Mass identification: synthetic observation generation with a noise model,
// trajectory alignment, the gradient-descent loop with the adaptive
// learning-rate schedule, and the integrator ablation harness.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "diffsim/adjoint.hpp"
#include "diffsim/scenario.hpp"

namespace diffsim {

// ---------------------------------------------------------------------------
// Synthetic observations
// ---------------------------------------------------------------------------

inline Trajectory synthesize_real_trajectory(const Scenario& sc, double true_mass,
                                             const NoiseModel& noise) {
    if (!(true_mass > 0.0))
        throw std::domain_error("synthesize_real_trajectory: true mass must be positive");
    const BodyModel body = scenario_body(sc);
    const RigidState init = initial_state(sc, body);
    const SimConfig cfg = sim_config(sc);
    auto run = rollout_states<double>(init, body, true_mass, sc.schedule, cfg);
    if (run.diverged) throw DivergedRollout(run.divergence_step);
    Trajectory traj = trajectory_from_states(run.states, cfg.dt);

    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& s : traj.samples) {
        const double nx = gauss(rng), ny = gauss(rng), nz = gauss(rng);
        const double rx = gauss(rng), ry = gauss(rng), rz = gauss(rng);
        s.p.x += noise.pos_sigma * nx;
        s.p.y += noise.pos_sigma * ny;
        s.p.z += noise.pos_sigma * nz + noise.z_bias;
        if (noise.quat_sigma > 0.0) {
            const Quat dq = quat_from_rotvec({noise.quat_sigma * rx, noise.quat_sigma * ry,
                                              noise.quat_sigma * rz});
            s.q = normalized(dq * s.q);
        }
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

namespace detail {

inline Trajectory crop(const Trajectory& traj, int start, int end) {
    Trajectory out;
    out.frame_rate = traj.frame_rate;
    out.samples.assign(traj.samples.begin() + start, traj.samples.begin() + end);
    return out;
}

inline Trajectory resample(const Trajectory& traj, double rate) {
    if (traj.samples.size() < 2) return traj;
    const double t0 = traj.samples.front().t;
    const double t1 = traj.samples.back().t;
    const auto count = static_cast<size_t>(std::llround((t1 - t0) * rate)) + 1;
    Trajectory out;
    out.frame_rate = rate;
    out.samples.reserve(count);
    size_t hi = 1;
    for (size_t i = 0; i < count; ++i) {
        const double t = i + 1 == count ? t1 : t0 + static_cast<double>(i) / rate;
        while (hi + 1 < traj.samples.size() && traj.samples[hi].t < t) ++hi;
        const auto& a = traj.samples[hi - 1];
        const auto& b = traj.samples[hi];
        const double span = b.t - a.t;
        const double u = span > 0.0 ? std::clamp((t - a.t) / span, 0.0, 1.0) : 0.0;
        Trajectory::Sample s;
        s.t = t;
        s.p = a.p + (b.p - a.p) * u;
        s.q = nlerp(a.q, b.q, u);
        out.samples.push_back(s);
    }
    return out;
}

}  // namespace detail

// Crops both trajectories to the sync window, shifts observed positions by
// the canonical re-centering vector, and optionally resamples both to a
// common rate.
inline std::pair<Trajectory, Trajectory> align_trajectories(const Trajectory& real,
                                                            const Trajectory& sim_template,
                                                            const SyncSpec& sync) {
    const int start = sync.start_index;
    const int real_len = static_cast<int>(real.samples.size());
    const int sim_len = static_cast<int>(sim_template.samples.size());
    const int end = sync.end_index < 0 ? std::min(real_len, sim_len) : sync.end_index;
    if (start < 0 || start >= end || end > real_len || end > sim_len)
        throw std::out_of_range("align_trajectories: window outside trajectory range");

    Trajectory real_out = detail::crop(real, start, end);
    Trajectory sim_out = detail::crop(sim_template, start, end);
    for (auto& s : real_out.samples) s.p += sync.recenter;
    if (sync.resample_rate) {
        real_out = detail::resample(real_out, *sync.resample_rate);
        sim_out = detail::resample(sim_out, *sync.resample_rate);
    }
    return {real_out, sim_out};
}

// Full-trajectory pose loss (Eq. of the trajectory discrepancy): sum of
// squared position residuals plus weighted squared quaternion residuals with
// hemisphere alignment.
inline double trajectory_loss(const Trajectory& sim, const Trajectory& real,
                              double quat_weight = 1.0) {
    if (sim.samples.size() != real.samples.size())
        throw std::invalid_argument("trajectory alignment error: length mismatch");
    return trajectory_loss_window(sim, real, quat_weight, 0);
}

// ---------------------------------------------------------------------------
// Adaptive learning strategy
// ---------------------------------------------------------------------------

enum class Schedule { Fixed, Adaptive };

struct ScheduleParams {
    double lr = 0.0;
    int max_epochs = 0;
    std::optional<double> lr_decay;
};

inline constexpr double kLrHeavy = 1e-3;
inline constexpr double kLrMedium = 1e-5;

// Piecewise schedule over the expected mass scale: heavy objects get a high
// rate and a long budget, light objects get decay on plateau.
inline ScheduleParams adaptive_schedule(double m_scale_guess) {
    if (!(m_scale_guess > 0.0))
        throw std::domain_error("adaptive_schedule: mass guess must be positive");
    if (m_scale_guess >= 0.5) return {kLrHeavy, 2000, std::nullopt};
    if (m_scale_guess >= 0.05) return {kLrMedium, 200, std::nullopt};
    return {kLrMedium, 200, 0.95};
}

// ---------------------------------------------------------------------------
// Identification loop
// ---------------------------------------------------------------------------

struct IdentifyConfig {
    double m_init = 0.002;
    double lr = kLrMedium;
    int max_epochs = 200;
    double tol_loss = 0.0;    // 0 disables the loss stop
    double tol_grad = 1e-10;
    double lr_decay = 1.0;    // multiplicative, applied per plateaued epoch
    Schedule schedule = Schedule::Adaptive;
    double quat_weight = 1.0;
    double m_min = 1e-4;
    double m_max = 100.0;
};

inline IdentifyConfig config_from_schedule(const Scenario& sc, Schedule schedule) {
    const double guess = sc.true_mass > 0.0 ? sc.true_mass : sc.m_init;
    const ScheduleParams params = adaptive_schedule(guess);
    IdentifyConfig cfg;
    cfg.m_init = sc.m_init;
    cfg.lr = params.lr;
    cfg.max_epochs = params.max_epochs;
    cfg.lr_decay = params.lr_decay.value_or(1.0);
    cfg.schedule = schedule;
    cfg.quat_weight = sc.quat_weight;
    return cfg;
}

struct IdentifyReport {
    double m_hat = 0.0;
    std::vector<double> loss_curve;
    std::vector<double> m_curve;
    int epochs_run = 0;
    bool converged = false;
    double wall_clock_s = 0.0;
    int divergence_count = 0;
    bool aborted = false;
    std::string abort_reason;
    bool unobservable = false;
    double lr_final = 0.0;
    double sec_per_epoch = 0.0;
};

namespace detail {

struct GradEval {
    bool ok = false;
    double loss = 0.0;
    double grad = 0.0;
    int divergence_step = -1;
};

struct IdentifyProblem {
    BodyModel body;
    RigidState init;
    SimConfig cfg;
    const ForceSchedule* sched = nullptr;
    const Trajectory* real = nullptr;
    size_t window_start = 0;
    double quat_weight = 1.0;

    std::optional<double> loss_at(double m) const {
        auto run = rollout_states<double>(init, body, m, *sched, cfg);
        if (run.diverged) return std::nullopt;
        return trajectory_loss_window(trajectory_from_states(run.states, cfg.dt), *real,
                                      quat_weight, window_start);
    }

    GradEval grad_at(double m) const {
        GradEval out;
        if (cfg.integrator == Integrator::SemiImplicit) {
            RecordedRollout rec = record_rollout(init, body, *sched, cfg, m);
            if (rec.diverged) {
                out.divergence_step = rec.divergence_step;
                return out;
            }
            GradReport rep = grad_mass_window(rec, *real, quat_weight, window_start);
            out.ok = true;
            out.loss = rep.loss;
            out.grad = rep.grad;
            return out;
        }
        // Explicit integrator: taped gradients are refused, use central
        // finite differences on plain rollouts.
        const double h = 1e-5 * m;
        const auto center = loss_at(m);
        const auto up = loss_at(m + h);
        const auto down = loss_at(m - h);
        if (!center || !up || !down) return out;
        out.ok = true;
        out.loss = *center;
        out.grad = (*up - *down) / (2.0 * h);
        return out;
    }
};

constexpr double kTrustFactor = 3.0;   // max relative mass change per epoch
constexpr double kLrGrowth = 2.0;
constexpr int kMaxRetries = 10;

}  // namespace detail

// Gradient descent m <- clamp(m - lr grad, m_min, m_max). Under the adaptive
// schedule the learning rate backtracks on loss increases, trust-region
// violations, and divergent trial rollouts, and grows again after clean
// steps; the fixed schedule only halves on divergence, as a plain
// gradient-descent reference.
inline IdentifyReport identify_mass(const Scenario& sc, const Trajectory& real,
                                    const IdentifyConfig& cfg) {
    const auto t_begin = std::chrono::steady_clock::now();

    detail::IdentifyProblem problem;
    problem.body = scenario_body(sc);
    problem.init = initial_state(sc, problem.body);
    problem.cfg = sim_config(sc);
    problem.sched = &sc.schedule;
    problem.real = &real;
    problem.window_start = static_cast<size_t>(std::max(0, sc.sync.start_index));
    problem.quat_weight = cfg.quat_weight;

    const size_t window_end = sc.sync.end_index < 0 ? static_cast<size_t>(sc.steps) + 1
                                                    : static_cast<size_t>(sc.sync.end_index);
    if (real.samples.size() != window_end - problem.window_start)
        throw std::invalid_argument("identify_mass: observation length does not match sync window");

    IdentifyReport report;
    double m = std::clamp(cfg.m_init, cfg.m_min, cfg.m_max);
    double lr = cfg.lr;
    double best_loss = std::numeric_limits<double>::infinity();
    int plateau = 0;

    auto finish = [&](bool converged) {
        report.converged = converged;
        report.lr_final = lr;
        report.wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
        report.sec_per_epoch = report.epochs_run > 0 ? report.wall_clock_s / report.epochs_run : 0.0;
        return report;
    };

    double prev_m = m;
    double prev_grad = 0.0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        detail::GradEval eval = problem.grad_at(m);
        if (!eval.ok) {
            ++report.divergence_count;
            if (epoch == 0) {
                report.aborted = true;
                report.abort_reason = "rollout diverged at the initial mass";
                return finish(false);
            }
            bool recovered = false;
            for (int retry = 0; retry < detail::kMaxRetries; ++retry) {
                lr *= 0.5;
                m = std::clamp(prev_m - lr * prev_grad, cfg.m_min, cfg.m_max);
                eval = problem.grad_at(m);
                if (eval.ok) {
                    recovered = true;
                    break;
                }
                ++report.divergence_count;
            }
            if (!recovered) {
                report.aborted = true;
                report.abort_reason = "rollout divergence persisted through learning-rate halving";
                return finish(false);
            }
        }

        report.m_curve.push_back(m);
        report.loss_curve.push_back(eval.loss);
        report.epochs_run = epoch + 1;
        if (eval.loss < best_loss) {
            best_loss = eval.loss;
            report.m_hat = m;
            plateau = 0;
        } else {
            ++plateau;
        }

        if (epoch == 0 && std::abs(eval.grad) < cfg.tol_grad) {
            report.unobservable = true;
            report.m_hat = m;
            return finish(false);
        }
        if (cfg.tol_loss > 0.0 && eval.loss <= cfg.tol_loss) return finish(true);
        if (std::abs(eval.grad) <= cfg.tol_grad) return finish(true);

        if (cfg.lr_decay < 1.0 && plateau >= 10) lr *= cfg.lr_decay;

        prev_m = m;
        prev_grad = eval.grad;

        if (cfg.schedule == Schedule::Fixed) {
            for (int attempt = 0;; ++attempt) {
                const double trial = std::clamp(m - lr * eval.grad, cfg.m_min, cfg.m_max);
                if (problem.loss_at(trial)) {
                    m = trial;
                    break;
                }
                ++report.divergence_count;
                lr *= 0.5;
                if (attempt >= detail::kMaxRetries) {
                    report.aborted = true;
                    report.abort_reason = "step divergence persisted through learning-rate halving";
                    return finish(false);
                }
            }
            continue;
        }

        // Adaptive: backtracking step search. The first trial rate is capped
        // so one epoch never moves the mass by more than the trust factor.
        double trial_lr = lr;
        const double max_step = detail::kTrustFactor * m;
        if (std::abs(eval.grad) * trial_lr > max_step) trial_lr = max_step / std::abs(eval.grad);
        bool clean_first_try = false;
        std::optional<double> fallback_m;
        double fallback_loss = std::numeric_limits<double>::infinity();
        bool stepped = false;
        for (int attempt = 0; attempt <= detail::kMaxRetries + 2; ++attempt) {
            const double trial = std::clamp(m - trial_lr * eval.grad, cfg.m_min, cfg.m_max);
            const auto trial_loss = problem.loss_at(trial);
            if (!trial_loss) {
                ++report.divergence_count;
                trial_lr *= 0.5;
                continue;
            }
            if (*trial_loss <= eval.loss) {
                m = trial;
                lr = trial_lr;
                clean_first_try = attempt == 0;
                stepped = true;
                break;
            }
            if (*trial_loss < fallback_loss) {
                fallback_loss = *trial_loss;
                fallback_m = trial;
            }
            trial_lr *= 0.5;
        }
        if (!stepped) {
            if (fallback_m) {
                m = *fallback_m;
                lr = trial_lr;
            } else {
                report.aborted = true;
                report.abort_reason = "no finite step found";
                return finish(false);
            }
        }
        if (clean_first_try) lr *= detail::kLrGrowth;
    }
    return finish(false);
}

// Scenario-level finite-difference gradient of the windowed trajectory loss.
inline double finite_diff_grad(const Scenario& sc, const Trajectory& real, double m, double h) {
    detail::IdentifyProblem problem;
    problem.body = scenario_body(sc);
    problem.init = initial_state(sc, problem.body);
    problem.cfg = sim_config(sc);
    problem.sched = &sc.schedule;
    problem.real = &real;
    problem.window_start = static_cast<size_t>(std::max(0, sc.sync.start_index));
    problem.quat_weight = sc.quat_weight;
    return finite_diff(
        [&](double mass) {
            const auto loss = problem.loss_at(mass);
            if (!loss) throw DivergedRollout(-1);
            return *loss;
        },
        m, h);
}

// Push-down model sampled on the scenario's own grid, so its closed form
// matches the contact-free rollout exactly.
inline PushdownModel scenario_pushdown_model(const Scenario& sc) {
    const BodyModel body = scenario_body(sc);
    const RigidState init = initial_state(sc, body);
    const std::vector<double> u = schedule_z_samples(sc.schedule, sc.dt, sc.steps);
    return build_pushdown_model(u, init.p.z, init.v.z, sc.gravity.z, sc.dt);
}

// ---------------------------------------------------------------------------
// Integrator ablation
// ---------------------------------------------------------------------------

struct AblateResult {
    IdentifyReport semi;
    IdentifyReport explicit_euler;
};

// Runs the identification twice, semi-implicit with taped gradients and
// explicit Euler with finite-difference gradients. Divergence of the
// explicit arm is an expected outcome and is recorded, not fatal.
inline AblateResult ablate_integrators(const Scenario& sc, const Trajectory& real,
                                       const IdentifyConfig& cfg) {
    AblateResult out;
    Scenario semi_sc = sc;
    semi_sc.integrator = Integrator::SemiImplicit;
    out.semi = identify_mass(semi_sc, real, cfg);

    Scenario expl_sc = sc;
    expl_sc.integrator = Integrator::Explicit;
    out.explicit_euler = identify_mass(expl_sc, real, cfg);
    return out;
}

// ---------------------------------------------------------------------------
// Small parallel fan-out for independent seeds/trials
// ---------------------------------------------------------------------------

inline void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    const int workers = std::min(jobs, count);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

inline json identify_report_to_json(const IdentifyReport& r) {
    return json{{"m_hat", r.m_hat},
                {"loss_curve", r.loss_curve},
                {"m_curve", r.m_curve},
                {"epochs_run", r.epochs_run},
                {"converged", r.converged},
                {"wall_clock_s", r.wall_clock_s},
                {"divergence_count", r.divergence_count},
                {"aborted", r.aborted},
                {"abort_reason", r.abort_reason},
                {"unobservable", r.unobservable},
                {"lr_final", r.lr_final},
                {"sec_per_epoch", r.sec_per_epoch}};
}

}  // namespace diffsim
