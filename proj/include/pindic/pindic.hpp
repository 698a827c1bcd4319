#pragma once

#include "pindic/baseline.hpp"
#include "pindic/error.hpp"
#include "pindic/grid.hpp"
#include "pindic/interp.hpp"
#include "pindic/io.hpp"
#include "pindic/network.hpp"
#include "pindic/objective.hpp"
#include "pindic/optim.hpp"
#include "pindic/parallel.hpp"
#include "pindic/rng.hpp"
#include "pindic/simulate.hpp"
#include "pindic/solver.hpp"
