#pragma once

#include "error.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "raster.hpp"
#include "geometry.hpp"
#include "compositor.hpp"
#include "features.hpp"
#include "sampling.hpp"
#include "models.hpp"
#include "evaluation.hpp"
#include "mapping.hpp"
#include "pipeline.hpp"
#include "synth.hpp"
