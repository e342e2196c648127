#pragma once

#include "geonet/error.hpp"
#include "geonet/parallel.hpp"
#include "geonet/spaces.hpp"
#include "geonet/corr.hpp"
#include "geonet/generator.hpp"
#include "geonet/convstruct.hpp"
#include "geonet/data.hpp"
#include "geonet/engine.hpp"
#include "geonet/presets.hpp"
#include "geonet/tda.hpp"
#include "geonet/mapper.hpp"
#include "geonet/features.hpp"
#include "geonet/weights.hpp"
#include "geonet/spec_file.hpp"
#include "geonet/snapshot.hpp"
