#pragma once

#include "bdec/random.hpp"
#include "bdec/parallel.hpp"
#include "bdec/gaussian.hpp"
#include "bdec/target.hpp"
#include "bdec/bfgs.hpp"
#include "bdec/mode_registry.hpp"
#include "bdec/samplers.hpp"
#include "bdec/diagnostics.hpp"
#include "bdec/config.hpp"
#include "bdec/experiment.hpp"
