#pragma once

#include "tds/errors.hpp"
#include "tds/rng.hpp"
#include "tds/data.hpp"
#include "tds/multi_index.hpp"
#include "tds/concepts.hpp"
#include "tds/distributions.hpp"
#include "tds/moments.hpp"
#include "tds/estimates.hpp"
#include "tds/lp.hpp"
#include "tds/training.hpp"
#include "tds/outcome.hpp"
#include "tds/chow_tester.hpp"
#include "tds/grid_tester.hpp"
#include "tds/boundary_tester.hpp"
#include "tds/sandwiching.hpp"
#include "tds/experiment.hpp"
