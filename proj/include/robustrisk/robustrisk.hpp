#pragma once

#include "robustrisk/calibration.hpp"
#include "robustrisk/divergence.hpp"
#include "robustrisk/error.hpp"
#include "robustrisk/loss.hpp"
#include "robustrisk/numeric.hpp"
#include "robustrisk/pde.hpp"
#include "robustrisk/process.hpp"
#include "robustrisk/random.hpp"
#include "robustrisk/regression.hpp"
#include "robustrisk/sample.hpp"
#include "robustrisk/terminal.hpp"
#include "robustrisk/timegrid.hpp"
#include "robustrisk/version.hpp"
