#pragma once

#include "bistoch/bistochastic.hpp"
#include "bistoch/census.hpp"
#include "bistoch/error.hpp"
#include "bistoch/export.hpp"
#include "bistoch/flow_matrix.hpp"
#include "bistoch/graph.hpp"
#include "bistoch/hierarchy.hpp"
#include "bistoch/io.hpp"
#include "bistoch/pipeline.hpp"
#include "bistoch/spectral.hpp"
