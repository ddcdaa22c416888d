#pragma once

#include "collapse/core.hpp"
#include "collapse/error.hpp"
#include "collapse/experiment.hpp"
#include "collapse/integrators.hpp"
#include "collapse/master_eq.hpp"
#include "collapse/models.hpp"
#include "collapse/noise.hpp"
#include "collapse/rng.hpp"
