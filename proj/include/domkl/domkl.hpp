#pragma once

#include "domkl/data.hpp"
#include "domkl/error.hpp"
#include "domkl/experiment.hpp"
#include "domkl/kernels.hpp"
#include "domkl/learner.hpp"
#include "domkl/losses.hpp"
#include "domkl/metrics.hpp"
#include "domkl/random.hpp"
#include "domkl/simulator.hpp"
#include "domkl/topology.hpp"
