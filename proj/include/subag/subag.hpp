#pragma once

#include "subag/criterion.hpp"
#include "subag/data.hpp"
#include "subag/ensemble.hpp"
#include "subag/error.hpp"
#include "subag/format.hpp"
#include "subag/oracle.hpp"
#include "subag/parallel.hpp"
#include "subag/rng.hpp"
#include "subag/simlab.hpp"
#include "subag/stats.hpp"
#include "subag/table.hpp"
#include "subag/tree.hpp"
#include "subag/version.hpp"
