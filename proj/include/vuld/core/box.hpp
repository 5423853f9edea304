#pragma once

#include <array>
#include <string>

namespace vuld {

/// Axis-aligned box in voxel units; index 0/1/2 = x/y/z.
/// `lo` is the bottom-left-rear corner, `hi` the top-right-front one.
struct Box3D {
    std::array<double, 3> lo{0, 0, 0};
    std::array<double, 3> hi{0, 0, 0};

    double extent(int axis) const { return hi[axis] - lo[axis]; }
    double center(int axis) const { return 0.5 * (lo[axis] + hi[axis]); }
    double volume() const { return extent(0) * extent(1) * extent(2); }
    bool valid() const { return extent(0) > 0 && extent(1) > 0 && extent(2) > 0; }
    std::string str() const;
};

/// Ground-truth annotation: a lesion, or a hard negative (confuser).
struct GroundTruthBox {
    Box3D box;
    bool hard_negative = false;
};

}  // namespace vuld
