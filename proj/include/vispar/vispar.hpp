#pragma once

#include "vispar/error.hpp"
#include "vispar/core.hpp"
#include "vispar/parallel.hpp"
#include "vispar/operators.hpp"
#include "vispar/scheme.hpp"
#include "vispar/solver.hpp"
#include "vispar/estimates.hpp"
#include "vispar/regularity.hpp"
#include "vispar/config.hpp"
