#pragma once

#include "delaydp/grid.hpp"
#include "delaydp/model.hpp"
#include "delaydp/dde.hpp"
#include "delaydp/structural.hpp"
#include "delaydp/convex.hpp"
#include "delaydp/value.hpp"
#include "delaydp/hjb.hpp"
