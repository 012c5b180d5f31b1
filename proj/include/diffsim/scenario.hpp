#pragma once

// Scenario files describe one identification experiment end to end: mesh,
// masses, contact parameters, integration settings, the push schedule, the
// observation noise model, and the alignment window.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "diffsim/dynamics.hpp"
#include "diffsim/io.hpp"

namespace diffsim {

struct NoiseModel {
    double pos_sigma = 0.0;   // isotropic position noise (m)
    double z_bias = 0.0;      // constant z offset (m)
    double quat_sigma = 0.0;  // small-angle orientation noise (rad)
    std::uint64_t seed = 0;
};

struct SyncSpec {
    int start_index = 0;
    int end_index = -1;  // -1: run to the end
    Vec3 recenter{};
    std::optional<double> resample_rate;
};

struct Scenario {
    std::string name;
    std::string mesh_path;
    MeshModel mesh;
    double true_mass = 0.0;  // used only to synthesize observations
    double m_init = 0.002;
    double k_e = 0.0;
    double k_d = 0.0;
    double dt = 1e-3;
    int steps = 1;
    double ground_height = 0.0;
    Vec3 gravity{0.0, 0.0, -9.81};
    Integrator integrator = Integrator::SemiImplicit;
    int contact_vertex_count = 0;  // 0: min(8, vertex count)
    std::uint64_t sample_seed = 0;
    double init_clearance = 0.01;
    ForceSchedule schedule;
    NoiseModel noise;
    SyncSpec sync;
    double quat_weight = 1.0;
};

inline json scenario_to_json(const Scenario& sc) {
    json schedule = json::array();
    for (const ForceEntry& e : sc.schedule.entries)
        schedule.push_back({{"t0", e.t_start},
                            {"t1", e.t_end},
                            {"force", to_json(e.force)},
                            {"point", to_json(e.point_body)}});
    json j{{"name", sc.name},
           {"mesh", sc.mesh_path},
           {"true_mass_kg", sc.true_mass},
           {"m_init_kg", sc.m_init},
           {"k_e", sc.k_e},
           {"k_d", sc.k_d},
           {"dt", sc.dt},
           {"steps", sc.steps},
           {"ground_height", sc.ground_height},
           {"gravity", to_json(sc.gravity)},
           {"integrator", sc.integrator == Integrator::SemiImplicit ? "semi" : "explicit"},
           {"contact_vertices", sc.contact_vertex_count},
           {"sample_seed", sc.sample_seed},
           {"init_clearance", sc.init_clearance},
           {"schedule", schedule},
           {"noise",
            {{"pos_sigma", sc.noise.pos_sigma},
             {"z_bias", sc.noise.z_bias},
             {"quat_sigma", sc.noise.quat_sigma},
             {"seed", sc.noise.seed}}},
           {"sync",
            {{"start", sc.sync.start_index},
             {"end", sc.sync.end_index},
             {"recenter", to_json(sc.sync.recenter)}}},
           {"quat_weight", sc.quat_weight}};
    if (sc.sync.resample_rate) j["sync"]["resample_rate"] = *sc.sync.resample_rate;
    return j;
}

inline Scenario scenario_from_json(const json& j, const std::string& base_dir) {
    Scenario sc;
    sc.name = j.value("name", "");
    if (!j.contains("mesh")) throw std::runtime_error("scenario: missing \"mesh\"");
    sc.mesh_path = j["mesh"].get<std::string>();
    std::filesystem::path mesh_file(sc.mesh_path);
    if (mesh_file.is_relative() && !base_dir.empty())
        mesh_file = std::filesystem::path(base_dir) / mesh_file;
    sc.mesh = load_mesh_file(mesh_file.string());
    if (sc.name.empty()) sc.name = sc.mesh.name;

    sc.true_mass = j.value("true_mass_kg", 0.0);
    sc.m_init = j.value("m_init_kg", 0.002);
    sc.k_e = j.value("k_e", 0.0);
    sc.k_d = j.value("k_d", 0.0);
    sc.dt = j.value("dt", 1e-3);
    sc.steps = j.value("steps", 1);
    sc.ground_height = j.value("ground_height", 0.0);
    if (j.contains("gravity")) sc.gravity = vec3_from_json(j["gravity"]);
    const std::string integ = j.value("integrator", "semi");
    if (integ == "semi") sc.integrator = Integrator::SemiImplicit;
    else if (integ == "explicit") sc.integrator = Integrator::Explicit;
    else throw std::runtime_error("scenario: integrator must be \"semi\" or \"explicit\"");
    sc.contact_vertex_count = j.value("contact_vertices", 0);
    sc.sample_seed = j.value("sample_seed", std::uint64_t{0});
    sc.init_clearance = j.value("init_clearance", 0.01);

    if (j.contains("schedule")) {
        for (const json& e : j["schedule"]) {
            ForceEntry entry;
            entry.t_start = e.at("t0").get<double>();
            entry.t_end = e.at("t1").get<double>();
            entry.force = vec3_from_json(e.at("force"));
            if (e.contains("point")) entry.point_body = vec3_from_json(e["point"]);
            if (!(entry.t_start < entry.t_end))
                throw std::runtime_error("scenario: schedule entry needs t0 < t1");
            sc.schedule.entries.push_back(entry);
        }
    }
    if (j.contains("noise")) {
        const json& n = j["noise"];
        sc.noise.pos_sigma = n.value("pos_sigma", 0.0);
        sc.noise.z_bias = n.value("z_bias", 0.0);
        sc.noise.quat_sigma = n.value("quat_sigma", 0.0);
        sc.noise.seed = n.value("seed", std::uint64_t{0});
    }
    if (j.contains("sync")) {
        const json& s = j["sync"];
        sc.sync.start_index = s.value("start", 0);
        sc.sync.end_index = s.value("end", -1);
        if (s.contains("recenter")) sc.sync.recenter = vec3_from_json(s["recenter"]);
        if (s.contains("resample_rate")) sc.sync.resample_rate = s["resample_rate"].get<double>();
    }
    sc.quat_weight = j.value("quat_weight", 1.0);

    if (!(sc.m_init > 0.0)) throw std::runtime_error("scenario: m_init_kg must be positive");
    if (!(sc.dt > 0.0)) throw std::runtime_error("scenario: dt must be positive");
    if (sc.steps < 1) throw std::runtime_error("scenario: steps must be >= 1");
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    json j = json::parse(read_text_file(path));
    return scenario_from_json(j, std::filesystem::path(path).parent_path().string());
}

// Inertia is a fixed property of the scenario: it is computed once at the
// reference mass (the true mass when known, the initial guess otherwise) and
// held constant while the translational mass is optimized.
inline double reference_mass(const Scenario& sc) {
    return sc.true_mass > 0.0 ? sc.true_mass : sc.m_init;
}

inline BodyModel scenario_body(const Scenario& sc) {
    int k = sc.contact_vertex_count;
    if (k <= 0) k = static_cast<int>(std::min<size_t>(8, sc.mesh.vertices.size()));
    return make_body(sc.mesh, reference_mass(sc), sc.k_e, sc.k_d, k, sc.sample_seed);
}

// Placement convention: COM on the vertical through the origin, bottom of
// the body init_clearance above the ground plane (via the z half-extent).
inline RigidState initial_state(const Scenario& sc, const BodyModel& body) {
    Bounds b = bounding_box(body.mesh.vertices);
    RigidState s;
    s.p = {0.0, 0.0, sc.ground_height + 0.5 * b.extent().z + sc.init_clearance};
    s.q = Quat::identity();
    return s;
}

inline SimConfig sim_config(const Scenario& sc) {
    SimConfig cfg;
    cfg.dt = sc.dt;
    cfg.gravity = sc.gravity;
    cfg.integrator = sc.integrator;
    cfg.ground_height = sc.ground_height;
    cfg.steps = sc.steps;
    return cfg;
}

}  // namespace diffsim
