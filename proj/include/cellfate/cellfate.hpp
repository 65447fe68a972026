#pragma once

#include "cellfate/classify.hpp"
#include "cellfate/conditions.hpp"
#include "cellfate/errors.hpp"
#include "cellfate/integrator.hpp"
#include "cellfate/io.hpp"
#include "cellfate/kernels.hpp"
#include "cellfate/model.hpp"
#include "cellfate/parallel.hpp"
#include "cellfate/phase.hpp"
#include "cellfate/rng.hpp"
#include "cellfate/simulate.hpp"
#include "cellfate/spine.hpp"

namespace cellfate {
inline constexpr const char* kVersion = "0.1.0";
}
