#pragma once

#include "fracstep/analysis.hpp"
#include "fracstep/caputo_kernel.hpp"
#include "fracstep/errors.hpp"
#include "fracstep/experiment.hpp"
#include "fracstep/mesh.hpp"
#include "fracstep/problem.hpp"
#include "fracstep/quadrature.hpp"
#include "fracstep/recurrence.hpp"
#include "fracstep/solver.hpp"
#include "fracstep/spatial.hpp"
