#pragma once

// Umbrella header: estimation of shared low-dimensional parameter subspaces
// across many under-determined linear systems, plus the experiment harness.

#include "ssr/datagen.hpp"
#include "ssr/estimator.hpp"
#include "ssr/harness.hpp"
#include "ssr/metrics.hpp"
#include "ssr/random.hpp"
#include "ssr/types.hpp"
#include "ssr/validation.hpp"
