#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "reflect/error.hpp"

namespace reflect {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline double norm(Point2 p) { return std::hypot(p.x, p.y); }

/// A correspondence: `from` in the source frame, `to` in the destination frame.
struct PointPair {
    Point2 from;
    Point2 to;
};

/// 3x3 projective transform normalized so m(2,2) = 1.
class Homography {
public:
    Homography() : m_(Eigen::Matrix3d::Identity()) {}

    explicit Homography(const Eigen::Matrix3d& m) : m_(m) {
        require(std::abs(m(2, 2)) > 1e-15, "singular-homography", "homography has zero m[2][2]");
        m_ /= m(2, 2);
        require(std::abs(m_.determinant()) > 1e-12, "singular-homography", "homography is singular");
    }

    static Homography identity() { return Homography(); }

    static Homography translation(double tx, double ty) {
        Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
        m(0, 2) = tx;
        m(1, 2) = ty;
        return Homography(m);
    }

    /// Row-major 9 values.
    static Homography from_array(const std::array<double, 9>& v) {
        Eigen::Matrix3d m;
        m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
        return Homography(m);
    }

    std::array<double, 9> to_array() const {
        return {m_(0, 0), m_(0, 1), m_(0, 2), m_(1, 0), m_(1, 1), m_(1, 2), m_(2, 0), m_(2, 1), m_(2, 2)};
    }

    const Eigen::Matrix3d& matrix() const { return m_; }

    Point2 apply(Point2 p) const {
        const double w = m_(2, 0) * p.x + m_(2, 1) * p.y + m_(2, 2);
        return {(m_(0, 0) * p.x + m_(0, 1) * p.y + m_(0, 2)) / w,
                (m_(1, 0) * p.x + m_(1, 1) * p.y + m_(1, 2)) / w};
    }

    Homography inverse() const { return Homography(m_.inverse()); }

    /// (*this) after `other`: maps p to this->apply(other.apply(p)).
    Homography operator*(const Homography& other) const { return Homography(m_ * other.m_); }

private:
    Eigen::Matrix3d m_;
};

}  // namespace reflect
