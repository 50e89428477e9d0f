#pragma once

#include "uscsim/errors.hpp"
#include "uscsim/tensor_core.hpp"
#include "uscsim/models.hpp"
#include "uscsim/dynamics.hpp"
#include "uscsim/measurement.hpp"
#include "uscsim/metrics.hpp"
#include "uscsim/analysis.hpp"
#include "uscsim/scenarios.hpp"
