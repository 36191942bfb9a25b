#pragma once

// Umbrella include for the whole toolkit.

#include "hydrocal/dates.hpp"
#include "hydrocal/errors.hpp"
#include "hydrocal/forcing.hpp"
#include "hydrocal/grid.hpp"
#include "hydrocal/hydromodel.hpp"
#include "hydrocal/metrics.hpp"
#include "hydrocal/mlp.hpp"
#include "hydrocal/multiscale.hpp"
#include "hydrocal/paramest.hpp"
#include "hydrocal/pipeline.hpp"
#include "hydrocal/series.hpp"
#include "hydrocal/synth.hpp"
#include "hydrocal/terrain.hpp"
