#pragma once

// Geometric and inertial primitives: particle mass properties, mesh
// ingestion (OBJ subset), and contact-vertex sampling.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "diffsim/math.hpp"

namespace diffsim {

struct MeshModel {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;  // 0-based after parsing
    std::string name;
};

struct ParticleSet {
    std::vector<Vec3> positions;
    std::vector<double> masses;
};

class ParseError : public std::runtime_error {
  public:
    ParseError(size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    size_t line() const { return line_; }

  private:
    size_t line_;
};

// COM = sum(m_i x_i) / sum(m_i)
inline Vec3 center_of_mass(const ParticleSet& ps) {
    if (ps.positions.empty() || ps.positions.size() != ps.masses.size())
        throw std::domain_error("center_of_mass: empty or mismatched particle set");
    Vec3 weighted{};
    double total = 0.0;
    for (size_t i = 0; i < ps.positions.size(); ++i) {
        weighted += ps.positions[i] * ps.masses[i];
        total += ps.masses[i];
    }
    if (!(total > 0.0)) throw std::domain_error("center_of_mass: total mass must be positive");
    return weighted / total;
}

// I = sum_i m_i (|r_i|^2 E - r_i r_i^T), r_i = x_i - com
inline Mat3 inertia_tensor(const ParticleSet& ps, const Vec3& com) {
    Mat3 inertia{};
    for (size_t i = 0; i < ps.positions.size(); ++i) {
        const Vec3 r = ps.positions[i] - com;
        const double r2 = norm2(r);
        Mat3 term = Mat3::identity() * r2 - outer(r, r);
        inertia = inertia + term * ps.masses[i];
    }
    return inertia;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

inline bool parse_double(std::string_view tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

inline bool parse_int(std::string_view tok, long& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

}  // namespace detail

// OBJ subset: `v x y z` and `f i j k` (1-based, triangles). Comments and
// blank lines are skipped; any other leading keyword is ignored.
inline MeshModel load_mesh(std::string_view text) {
    MeshModel mesh;
    std::vector<size_t> face_lines;
    size_t line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        auto toks = detail::split_ws(line);
        if (toks.empty() || toks[0].front() == '#') continue;
        if (toks[0] == "v") {
            if (toks.size() != 4)
                throw ParseError(line_no, "vertex line must have exactly 3 coordinates");
            Vec3 v;
            if (!detail::parse_double(toks[1], v.x) || !detail::parse_double(toks[2], v.y) ||
                !detail::parse_double(toks[3], v.z))
                throw ParseError(line_no, "malformed vertex coordinate");
            mesh.vertices.push_back(v);
        } else if (toks[0] == "f") {
            if (toks.size() != 4)
                throw ParseError(line_no, "face line must have exactly 3 indices (triangles only)");
            std::array<int, 3> face{};
            for (int k = 0; k < 3; ++k) {
                long idx = 0;
                if (!detail::parse_int(toks[static_cast<size_t>(k + 1)], idx))
                    throw ParseError(line_no, "malformed face index");
                if (idx < 1)
                    throw ParseError(line_no, "face index must be >= 1");
                face[static_cast<size_t>(k)] = static_cast<int>(idx - 1);
            }
            mesh.faces.push_back(face);
            face_lines.push_back(line_no);
        }
        // other keywords ignored
    }
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        for (int idx : mesh.faces[f]) {
            if (idx >= static_cast<int>(mesh.vertices.size()))
                throw ParseError(face_lines[f], "face index " + std::to_string(idx + 1) +
                                                    " out of range (have " +
                                                    std::to_string(mesh.vertices.size()) + " vertices)");
        }
    }
    return mesh;
}

inline MeshModel load_mesh_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open mesh file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    MeshModel mesh = load_mesh(ss.str());
    size_t slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    size_t dot = base.find_last_of('.');
    mesh.name = dot == std::string::npos ? base : base.substr(0, dot);
    return mesh;
}

namespace detail {
inline void append_double(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    out.append(buf, ptr);
}
}  // namespace detail

// Canonical serialization: shortest round-trip float formatting, vertices
// first, then faces. load(serialize(m)) reproduces m exactly.
inline std::string serialize_mesh(const MeshModel& mesh) {
    std::string out;
    for (const Vec3& v : mesh.vertices) {
        out += "v ";
        detail::append_double(out, v.x);
        out += ' ';
        detail::append_double(out, v.y);
        out += ' ';
        detail::append_double(out, v.z);
        out += '\n';
    }
    for (const auto& f : mesh.faces) {
        out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' +
               std::to_string(f[2] + 1) + '\n';
    }
    return out;
}

// Contact-vertex sampling, stratified toward the lowest-z face. The lowest
// stratum is taken deterministically: all vertices tied at or below the
// ceil(k/2)-th smallest z, truncated to k in (z, index) order. Any remainder
// is drawn uniformly without replacement from the rest, seeded.
inline std::vector<int> sample_contact_vertices(const MeshModel& mesh, int k, std::uint64_t seed) {
    const int n = static_cast<int>(mesh.vertices.size());
    if (k < 1 || k > n) throw std::domain_error("sample_contact_vertices: k out of range");

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double za = mesh.vertices[static_cast<size_t>(a)].z;
        double zb = mesh.vertices[static_cast<size_t>(b)].z;
        return za != zb ? za < zb : a < b;
    });

    const int base = (k + 1) / 2;
    const double z_cut = mesh.vertices[static_cast<size_t>(order[static_cast<size_t>(base - 1)])].z;
    int stratum = base;
    while (stratum < n &&
           mesh.vertices[static_cast<size_t>(order[static_cast<size_t>(stratum)])].z <= z_cut)
        ++stratum;
    stratum = std::min(stratum, k);

    std::vector<int> chosen(order.begin(), order.begin() + stratum);
    if (stratum < k) {
        std::vector<int> rest(order.begin() + stratum, order.end());
        std::mt19937_64 rng(seed);
        // partial Fisher-Yates, explicit draws for cross-platform determinism
        for (int i = 0; i < k - stratum; ++i) {
            const size_t span = rest.size() - static_cast<size_t>(i);
            const size_t j = static_cast<size_t>(i) + static_cast<size_t>(rng() % span);
            std::swap(rest[static_cast<size_t>(i)], rest[j]);
            chosen.push_back(rest[static_cast<size_t>(i)]);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

struct Bounds {
    Vec3 lo, hi;
    Vec3 extent() const { return hi - lo; }
};

inline Bounds bounding_box(const std::vector<Vec3>& vertices) {
    if (vertices.empty()) throw std::domain_error("bounding_box: empty vertex set");
    Bounds b{vertices[0], vertices[0]};
    for (const Vec3& v : vertices) {
        b.lo.x = std::min(b.lo.x, v.x); b.hi.x = std::max(b.hi.x, v.x);
        b.lo.y = std::min(b.lo.y, v.y); b.hi.y = std::max(b.hi.y, v.y);
        b.lo.z = std::min(b.lo.z, v.z); b.hi.z = std::max(b.hi.z, v.z);
    }
    return b;
}

}  // namespace diffsim
