#pragma once

#include "dqn/error.hpp"
#include "dqn/random.hpp"
#include "dqn/parallel.hpp"
#include "dqn/schedule.hpp"
#include "dqn/qdc.hpp"
#include "dqn/des_oracle.hpp"
#include "dqn/check.hpp"
#include "dqn/counts.hpp"
#include "dqn/airport.hpp"
#include "dqn/network.hpp"
#include "dqn/mmd.hpp"
#include "dqn/sabc.hpp"
#include "dqn/inference.hpp"
#include "dqn/perf.hpp"
#include "dqn/io.hpp"
#include "dqn/scenario.hpp"
#include "dqn/service.hpp"
