#pragma once

#include "epioc/analysis.hpp"
#include "epioc/core.hpp"
#include "epioc/integrators.hpp"
#include "epioc/log.hpp"
#include "epioc/models.hpp"
#include "epioc/ocp_direct.hpp"
#include "epioc/ocp_indirect.hpp"
#include "epioc/strategies.hpp"
#include "epioc/types.hpp"
