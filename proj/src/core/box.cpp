#include "vuld/core/box.hpp"

#include <cstdio>

namespace vuld {

std::string Box3D::str() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "[(%.3f, %.3f, %.3f), (%.3f, %.3f, %.3f)]", lo[0], lo[1], lo[2], hi[0], hi[1],
                  hi[2]);
    return buf;
}

}  // namespace vuld
