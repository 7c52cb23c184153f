#pragma once

// Umbrella header: pulls in the complete public API.

#include <stochpc/chance.hpp>
#include <stochpc/controllers.hpp>
#include <stochpc/datadriven.hpp>
#include <stochpc/estimation.hpp>
#include <stochpc/harness.hpp>
#include <stochpc/numerics.hpp>
#include <stochpc/plant.hpp>
#include <stochpc/rng.hpp>
#include <stochpc/types.hpp>
#include <stochpc/validation.hpp>
