#pragma once

#include "lqfs/error.hpp"
#include "lqfs/model.hpp"
#include "lqfs/spp.hpp"
#include "lqfs/linstab.hpp"
#include "lqfs/fluid.hpp"
#include "lqfs/rng.hpp"
#include "lqfs/stats.hpp"
#include "lqfs/sim.hpp"
#include "lqfs/sweep.hpp"
#include "lqfs/registry.hpp"
#include "lqfs/io.hpp"
