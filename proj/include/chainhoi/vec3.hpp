#pragma once

#include <cmath>

namespace chainhoi {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double xx, double yy, double zz) : x(xx), y(yy), z(zz) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    Vec3 normalized(double eps = 1e-300) const {
        double n = norm();
        return n > eps ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 0};
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Mat3 {
    // row-major
    double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return Mat3{}; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
                r.m[i * 3 + j] = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
        return r;
    }
};

inline Mat3 rot_y(double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    Mat3 r;
    r.m[0] = c;
    r.m[1] = 0;
    r.m[2] = s;
    r.m[3] = 0;
    r.m[4] = 1;
    r.m[5] = 0;
    r.m[6] = -s;
    r.m[7] = 0;
    r.m[8] = c;
    return r;
}

// Rodrigues: axis-angle vector (direction = axis, length = angle) to matrix.
inline Mat3 axis_angle_to_matrix(const Vec3& aa) {
    double angle = aa.norm();
    if (angle < 1e-12) return Mat3::identity();
    Vec3 u = aa * (1.0 / angle);
    double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    Mat3 r;
    r.m[0] = c + u.x * u.x * t;
    r.m[1] = u.x * u.y * t - u.z * s;
    r.m[2] = u.x * u.z * t + u.y * s;
    r.m[3] = u.y * u.x * t + u.z * s;
    r.m[4] = c + u.y * u.y * t;
    r.m[5] = u.y * u.z * t - u.x * s;
    r.m[6] = u.z * u.x * t - u.y * s;
    r.m[7] = u.z * u.y * t + u.x * s;
    r.m[8] = c + u.z * u.z * t;
    return r;
}

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

}  // namespace chainhoi
