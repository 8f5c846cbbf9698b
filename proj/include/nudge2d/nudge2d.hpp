#pragma once

#include "nudge2d/spectral.hpp"
#include "nudge2d/observables.hpp"
#include "nudge2d/dynamics.hpp"
#include "nudge2d/forcing.hpp"
#include "nudge2d/diagnostics.hpp"
#include "nudge2d/config.hpp"
#include "nudge2d/checkpoint.hpp"
#include "nudge2d/harness.hpp"
