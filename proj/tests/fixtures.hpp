#pragma once

// Shared test fixtures: canonical meshes and scenario builders.

#include <string>

#include "diffsim/dynamics.hpp"
#include "diffsim/geometry.hpp"
#include "diffsim/scenario.hpp"

namespace fixtures {

using namespace diffsim;

// Axis-aligned cube of the given side, centered at the origin.
inline MeshModel cube_mesh(double side = 0.1) {
    const double h = side / 2.0;
    MeshModel m;
    m.name = "cube";
    m.vertices = {{-h, -h, -h}, {h, -h, -h}, {h, h, -h}, {-h, h, -h},
                  {-h, -h, h},  {h, -h, h},  {h, h, h},  {-h, h, h}};
    m.faces = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
               {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
    return m;
}

inline std::string tetra_obj_text() {
    return "v 0 0 0\n"
           "v 1 0 0\n"
           "v 0 1 0\n"
           "v 0 0 1\n"
           "f 1 2 3\n"
           "f 1 2 4\n"
           "f 1 3 4\n"
           "f 2 3 4\n";
}

inline std::string cube_obj_text() {
    return "# unit-ish cube with comments and blanks\n"
           "\n"
           "o cube\n" +
           serialize_mesh(cube_mesh(0.1)) +
           "# trailing comment\n";
}

// Contact-free push-down: the body starts well above a deep ground plane and
// receives a downward push window. Mass is observable from the z response.
inline Scenario pushdown_scenario(double true_mass, double push_newtons, int steps = 400) {
    Scenario sc;
    sc.name = "pushdown";
    sc.mesh = cube_mesh(0.1);
    sc.mesh_path = "cube.obj";
    sc.true_mass = true_mass;
    sc.m_init = 0.002;
    sc.k_e = 1000.0;
    sc.k_d = 5.0;
    sc.dt = 1e-3;
    sc.steps = steps;
    sc.ground_height = -10.0;
    sc.contact_vertex_count = 4;
    sc.init_clearance = 9.95;  // z0 = 0 ground offset: body COM starts at 0 height scale
    sc.schedule.entries.push_back({0.05, 0.25, {0.0, 0.0, -push_newtons}, {0.0, 0.0, 0.0}});
    return sc;
}

// Push scenario with ground contact: the body drops onto the plane, rests,
// and is pressed down during a window.
inline Scenario contact_scenario(double true_mass, double k_e, double k_d, double push_newtons,
                                 int steps = 500) {
    Scenario sc;
    sc.name = "contact_push";
    sc.mesh = cube_mesh(0.1);
    sc.mesh_path = "cube.obj";
    sc.true_mass = true_mass;
    sc.m_init = 0.02;
    sc.k_e = k_e;
    sc.k_d = k_d;
    sc.dt = 1e-3;
    sc.steps = steps;
    sc.ground_height = 0.0;
    sc.contact_vertex_count = 4;
    sc.init_clearance = 0.002;
    sc.schedule.entries.push_back({0.1, 0.3, {0.0, 0.0, -push_newtons}, {0.0, 0.0, 0.0}});
    return sc;
}

}  // namespace fixtures
