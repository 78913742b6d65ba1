#include "ifstab/common.hpp"

#include <cmath>
#include <cstdio>

namespace ifstab {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ParameterError(msg);
}

}  // namespace ifstab
