#pragma once

#include "crosspers/crossripsnet.hpp"
#include "crosspers/filtration.hpp"
#include "crosspers/geometry.hpp"
#include "crosspers/io.hpp"
#include "crosspers/parallel.hpp"
#include "crosspers/persistence.hpp"
#include "crosspers/rng.hpp"
#include "crosspers/stats.hpp"
#include "crosspers/summaries.hpp"
#include "crosspers/synthetic.hpp"
#include "crosspers/topgen.hpp"
#include "crosspers/version.hpp"
