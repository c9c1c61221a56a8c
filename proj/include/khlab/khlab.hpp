#pragma once

// Everything except the lab layer, which needs nlohmann_json.

#include "khlab/common.hpp"
#include "khlab/geometry.hpp"
#include "khlab/hessian_solver.hpp"
#include "khlab/interp.hpp"
#include "khlab/levelset_analysis.hpp"
#include "khlab/profiles.hpp"
#include "khlab/quadrature.hpp"
#include "khlab/stencil.hpp"
#include "khlab/symcore.hpp"
