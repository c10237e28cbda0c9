#pragma once

#include "rhmc/common.hpp"
#include "rhmc/costeval.hpp"
#include "rhmc/experiment.hpp"
#include "rhmc/lowdisc.hpp"
#include "rhmc/market.hpp"
#include "rhmc/matfun.hpp"
#include "rhmc/oracle.hpp"
#include "rhmc/strategies.hpp"
