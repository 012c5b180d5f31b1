#pragma once

// Trajectory serialization: JSON Lines with a header record, shared by
// synthetic observations and simulation output. A per-particle variant
// serves particle-system states.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffsim/dynamics.hpp"

namespace diffsim {

using json = nlohmann::json;

inline json to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline json to_json(const Quat& q) { return json::array({q.w, q.x, q.y, q.z}); }

inline Vec3 vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected [x,y,z] array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Quat quat_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw std::runtime_error("expected [w,x,y,z] array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline std::string trajectory_to_jsonl(const Trajectory& traj, const std::string& body_name) {
    std::string out;
    json header{{"frame_rate", traj.frame_rate}, {"body", body_name}};
    out += header.dump();
    out += '\n';
    for (const auto& s : traj.samples) {
        json rec{{"t", s.t}, {"p", to_json(s.p)}, {"q", to_json(s.q)}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

struct NamedTrajectory {
    Trajectory trajectory;
    std::string body_name;
};

inline NamedTrajectory trajectory_from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    NamedTrajectory out;
    bool have_header = false;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, true);
        if (!have_header) {
            if (!j.contains("frame_rate"))
                throw std::runtime_error("trajectory header missing frame_rate");
            out.trajectory.frame_rate = j["frame_rate"].get<double>();
            out.body_name = j.value("body", "");
            have_header = true;
            continue;
        }
        if (!j.contains("t") || !j.contains("p") || !j.contains("q"))
            throw std::runtime_error("trajectory record " + std::to_string(line_no) +
                                     " missing t/p/q");
        out.trajectory.samples.push_back(
            {j["t"].get<double>(), vec3_from_json(j["p"]), quat_from_json(j["q"])});
    }
    if (!have_header) throw std::runtime_error("empty trajectory file");
    return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void save_trajectory(const std::string& path, const Trajectory& traj,
                            const std::string& body_name) {
    write_text_file(path, trajectory_to_jsonl(traj, body_name));
}

inline NamedTrajectory load_trajectory(const std::string& path) {
    return trajectory_from_jsonl(read_text_file(path));
}

// Per-particle variant: header, then {"t": ..., "particles": [[x,y,z], ...]}.
inline std::string particle_frames_to_jsonl(const std::vector<double>& times,
                                            const std::vector<std::vector<Vec3>>& frames,
                                            double frame_rate, const std::string& name) {
    if (times.size() != frames.size())
        throw std::invalid_argument("particle frames: time/frame count mismatch");
    std::string out;
    json header{{"frame_rate", frame_rate}, {"body", name}};
    out += header.dump();
    out += '\n';
    for (size_t k = 0; k < frames.size(); ++k) {
        json particles = json::array();
        for (const Vec3& p : frames[k]) particles.push_back(to_json(p));
        json rec{{"t", times[k]}, {"particles", particles}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

}  // namespace diffsim
