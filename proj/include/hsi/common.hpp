#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsi {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<int, 3>;

// All engine failures surface as hsi::Error; the CLI maps them to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Axis : int { X = 0, Y = 1, Z = 2 };

// Global up axis. Yaw rotations and vertical offsets are taken about/along it.
Axis up_axis();
void set_up_axis(Axis axis);
inline int up_index() { return static_cast<int>(up_axis()); }
inline Vec3 up_vector() { return Vec3::Unit(up_index()); }

// Semantic class bookkeeping shared by scenes and feature maps.
// Scene labels live in [0, N_o); feature-map classes shift by one so that 0 is "void".
inline constexpr int kVoidClass = 0;
inline int feature_class(int scene_label) { return scene_label + 1; }

inline std::vector<std::string> default_class_names()
{
    return {"floor", "wall", "chair", "sofa", "bed", "table", "shelf", "other"};
}

} // namespace hsi
