#pragma once

#include "curvcheck/certify.hpp"
#include "curvcheck/cli.hpp"
#include "curvcheck/errors.hpp"
#include "curvcheck/expr.hpp"
#include "curvcheck/geometry.hpp"
#include "curvcheck/implicit.hpp"
#include "curvcheck/jet.hpp"
#include "curvcheck/optimality.hpp"
#include "curvcheck/problem.hpp"
#include "curvcheck/reduced.hpp"
#include "curvcheck/report.hpp"
