#pragma once

// Umbrella header for the whole library.

#include "wiser/backend_config.hpp"
#include "wiser/backends.hpp"
#include "wiser/core.hpp"
#include "wiser/eval.hpp"
#include "wiser/fusion.hpp"
#include "wiser/http_backends.hpp"
#include "wiser/index.hpp"
#include "wiser/pipeline.hpp"
#include "wiser/refine.hpp"
#include "wiser/rng.hpp"
#include "wiser/synth.hpp"
