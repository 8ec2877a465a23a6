#pragma once

#include "nlqual/kkt.hpp"
#include "nlqual/penalty.hpp"
#include "nlqual/proxsolve.hpp"
#include "nlqual/qualify.hpp"
#include "nlqual/report.hpp"
#include "nlqual/subdiff.hpp"

namespace nlqual {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nlqual
