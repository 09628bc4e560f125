#pragma once

// Umbrella header for the mixed-intelligence highway traffic laboratory.

#include "traffic/cli.hpp"
#include "traffic/dqn.hpp"
#include "traffic/errors.hpp"
#include "traffic/expconfig.hpp"
#include "traffic/fitness.hpp"
#include "traffic/hyperopt.hpp"
#include "traffic/model_io.hpp"
#include "traffic/net.hpp"
#include "traffic/patterns.hpp"
#include "traffic/replay.hpp"
#include "traffic/rng.hpp"
#include "traffic/sim.hpp"
#include "traffic/strategies.hpp"
#include "traffic/trajectory.hpp"
#include "traffic/util.hpp"
