#pragma once

// Scalar-generic 3D math: vectors, 3x3 matrices, quaternions.
// Every type is templated on the scalar so the same dynamics code runs on
// plain doubles and on tape-recorded autodiff scalars.

#include <array>
#include <cmath>
#include <cstdint>

namespace diffsim {

using std::sqrt;  // let unqualified sqrt() resolve for double and for ad::Var

// ---------------------------------------------------------------------------
// Vec3
// ---------------------------------------------------------------------------

template <class T>
struct Vec3T {
    T x{}, y{}, z{};

    Vec3T() = default;
    Vec3T(T xi, T yi, T zi) : x(std::move(xi)), y(std::move(yi)), z(std::move(zi)) {}
};

using Vec3 = Vec3T<double>;

template <class T> inline Vec3T<T> operator+(const Vec3T<T>& a, const Vec3T<T>& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
}
template <class T> inline Vec3T<T> operator-(const Vec3T<T>& a, const Vec3T<T>& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
}
template <class T> inline Vec3T<T> operator-(const Vec3T<T>& a) { return {-a.x, -a.y, -a.z}; }
template <class T, class S> inline Vec3T<T> operator*(const Vec3T<T>& v, const S& s) {
    return {v.x * s, v.y * s, v.z * s};
}
template <class T, class S> inline Vec3T<T> operator*(const S& s, const Vec3T<T>& v) {
    return {s * v.x, s * v.y, s * v.z};
}
template <class T, class S> inline Vec3T<T> operator/(const Vec3T<T>& v, const S& s) {
    return {v.x / s, v.y / s, v.z / s};
}
template <class T> inline Vec3T<T>& operator+=(Vec3T<T>& a, const Vec3T<T>& b) {
    a.x = a.x + b.x; a.y = a.y + b.y; a.z = a.z + b.z; return a;
}
template <class T> inline Vec3T<T>& operator-=(Vec3T<T>& a, const Vec3T<T>& b) {
    a.x = a.x - b.x; a.y = a.y - b.y; a.z = a.z - b.z; return a;
}

template <class T> inline T dot(const Vec3T<T>& a, const Vec3T<T>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <class T> inline Vec3T<T> cross(const Vec3T<T>& a, const Vec3T<T>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <class T> inline T norm2(const Vec3T<T>& v) { return dot(v, v); }
template <class T> inline T norm(const Vec3T<T>& v) { return sqrt(norm2(v)); }

inline bool finite(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// ---------------------------------------------------------------------------
// Mat3 (row-major)
// ---------------------------------------------------------------------------

template <class T>
struct Mat3T {
    std::array<T, 9> m{};

    T& operator()(int r, int c) { return m[static_cast<size_t>(3 * r + c)]; }
    const T& operator()(int r, int c) const { return m[static_cast<size_t>(3 * r + c)]; }

    static Mat3T identity() {
        Mat3T out;
        out.m[0] = T(1); out.m[4] = T(1); out.m[8] = T(1);
        return out;
    }
};

using Mat3 = Mat3T<double>;

template <class T> inline Mat3T<T> operator+(const Mat3T<T>& a, const Mat3T<T>& b) {
    Mat3T<T> out;
    for (int i = 0; i < 9; ++i) out.m[static_cast<size_t>(i)] = a.m[static_cast<size_t>(i)] + b.m[static_cast<size_t>(i)];
    return out;
}
template <class T> inline Mat3T<T> operator-(const Mat3T<T>& a, const Mat3T<T>& b) {
    Mat3T<T> out;
    for (int i = 0; i < 9; ++i) out.m[static_cast<size_t>(i)] = a.m[static_cast<size_t>(i)] - b.m[static_cast<size_t>(i)];
    return out;
}
template <class T, class S> inline Mat3T<T> operator*(const Mat3T<T>& a, const S& s) {
    Mat3T<T> out;
    for (int i = 0; i < 9; ++i) out.m[static_cast<size_t>(i)] = a.m[static_cast<size_t>(i)] * s;
    return out;
}

template <class T> inline Vec3T<T> operator*(const Mat3T<T>& a, const Vec3T<T>& v) {
    return {a.m[0] * v.x + a.m[1] * v.y + a.m[2] * v.z,
            a.m[3] * v.x + a.m[4] * v.y + a.m[5] * v.z,
            a.m[6] * v.x + a.m[7] * v.y + a.m[8] * v.z};
}

template <class T> inline Mat3T<T> operator*(const Mat3T<T>& a, const Mat3T<T>& b) {
    Mat3T<T> out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
    return out;
}

template <class T> inline Mat3T<T> transpose(const Mat3T<T>& a) {
    Mat3T<T> out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out(r, c) = a(c, r);
    return out;
}

template <class T> inline Mat3T<T> outer(const Vec3T<T>& a, const Vec3T<T>& b) {
    Mat3T<T> out;
    out.m = {a.x * b.x, a.x * b.y, a.x * b.z,
             a.y * b.x, a.y * b.y, a.y * b.z,
             a.z * b.x, a.z * b.y, a.z * b.z};
    return out;
}

template <class T> inline T det(const Mat3T<T>& a) {
    return a.m[0] * (a.m[4] * a.m[8] - a.m[5] * a.m[7])
         - a.m[1] * (a.m[3] * a.m[8] - a.m[5] * a.m[6])
         + a.m[2] * (a.m[3] * a.m[7] - a.m[4] * a.m[6]);
}

// Inverse via adjugate; caller is responsible for checking det() first when
// the matrix may be singular.
template <class T> inline Mat3T<T> inverse(const Mat3T<T>& a, const T& d) {
    Mat3T<T> out;
    out.m[0] = (a.m[4] * a.m[8] - a.m[5] * a.m[7]) / d;
    out.m[1] = (a.m[2] * a.m[7] - a.m[1] * a.m[8]) / d;
    out.m[2] = (a.m[1] * a.m[5] - a.m[2] * a.m[4]) / d;
    out.m[3] = (a.m[5] * a.m[6] - a.m[3] * a.m[8]) / d;
    out.m[4] = (a.m[0] * a.m[8] - a.m[2] * a.m[6]) / d;
    out.m[5] = (a.m[2] * a.m[3] - a.m[0] * a.m[5]) / d;
    out.m[6] = (a.m[3] * a.m[7] - a.m[4] * a.m[6]) / d;
    out.m[7] = (a.m[1] * a.m[6] - a.m[0] * a.m[7]) / d;
    out.m[8] = (a.m[0] * a.m[4] - a.m[1] * a.m[3]) / d;
    return out;
}

inline Mat3 skew(const Vec3& v) {
    Mat3 s;
    s.m = {0.0, -v.z, v.y,
           v.z, 0.0, -v.x,
           -v.y, v.x, 0.0};
    return s;
}

// ---------------------------------------------------------------------------
// Quaternion, storage order (w, x, y, z)
// ---------------------------------------------------------------------------

template <class T>
struct QuatT {
    T w{}, x{}, y{}, z{};

    QuatT() = default;
    QuatT(T wi, T xi, T yi, T zi)
        : w(std::move(wi)), x(std::move(xi)), y(std::move(yi)), z(std::move(zi)) {}

    static QuatT identity() { return {T(1), T(0), T(0), T(0)}; }
};

using Quat = QuatT<double>;

// Hamilton product a*b.
template <class T> inline QuatT<T> operator*(const QuatT<T>& a, const QuatT<T>& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

template <class T> inline T dot(const QuatT<T>& a, const QuatT<T>& b) {
    return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class T> inline T quat_norm(const QuatT<T>& q) { return sqrt(dot(q, q)); }

template <class T> inline QuatT<T> normalized(const QuatT<T>& q) {
    T n = quat_norm(q);
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

// Rotation matrix of a unit quaternion.
template <class T> inline Mat3T<T> quat_to_mat3(const QuatT<T>& q) {
    T xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
    T xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
    T wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
    Mat3T<T> r;
    r.m = {1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz),       2.0 * (xz + wy),
           2.0 * (xy + wz),       1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx),
           2.0 * (xz - wy),       2.0 * (yz + wx),       1.0 - 2.0 * (xx + yy)};
    return r;
}

inline Vec3 rotate(const Quat& q, const Vec3& v) { return quat_to_mat3(q) * v; }

// First-order quaternion update q + (dt/2) * (0, omega) ⊗ q, renormalized.
template <class T> inline QuatT<T> quat_integrate(const QuatT<T>& q, const Vec3T<T>& omega, double dt) {
    QuatT<T> omega_quat{T(0), omega.x, omega.y, omega.z};
    QuatT<T> dq = omega_quat * q;
    double half_dt = 0.5 * dt;
    QuatT<T> out{q.w + half_dt * dq.w, q.x + half_dt * dq.x,
                 q.y + half_dt * dq.y, q.z + half_dt * dq.z};
    return normalized(out);
}

// Exact exponential map: rotation vector -> unit quaternion.
inline Quat quat_from_rotvec(const Vec3& rv) {
    double angle = norm(rv);
    if (angle < 1e-12) return Quat::identity();
    double half = 0.5 * angle;
    double s = std::sin(half) / angle;
    return {std::cos(half), rv.x * s, rv.y * s, rv.z * s};
}

// Normalized linear interpolation between unit quaternions (sign-aligned).
inline Quat nlerp(const Quat& a, const Quat& b_in, double t) {
    Quat b = b_in;
    if (dot(a, b) < 0.0) b = {-b.w, -b.x, -b.y, -b.z};
    Quat out{a.w + t * (b.w - a.w), a.x + t * (b.x - a.x),
             a.y + t * (b.y - a.y), a.z + t * (b.z - a.z)};
    return normalized(out);
}

inline bool finite(const Quat& q) {
    return std::isfinite(q.w) && std::isfinite(q.x) && std::isfinite(q.y) && std::isfinite(q.z);
}

}  // namespace diffsim
