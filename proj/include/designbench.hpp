#pragma once

#include "designbench/errors.hpp"
#include "designbench/linalg.hpp"
#include "designbench/random.hpp"
#include "designbench/population.hpp"
#include "designbench/estimators.hpp"
#include "designbench/variance.hpp"
#include "designbench/theory.hpp"
#include "designbench/stratified.hpp"
#include "designbench/moments.hpp"
#include "designbench/simulation.hpp"
#include "designbench/report.hpp"
