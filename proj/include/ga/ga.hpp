#pragma once

#include "ga/anchor.hpp"
#include "ga/carrier.hpp"
#include "ga/gauge.hpp"
#include "ga/lowrank.hpp"
#include "ga/operator.hpp"
#include "ga/score.hpp"
#include "ga/staged.hpp"
#include "ga/types.hpp"
