#pragma once

#include "hustat/blocking.hpp"
#include "hustat/bounds.hpp"
#include "hustat/cli.hpp"
#include "hustat/config.hpp"
#include "hustat/experiments.hpp"
#include "hustat/hilbert.hpp"
#include "hustat/kernels.hpp"
#include "hustat/processes.hpp"
#include "hustat/rng.hpp"
#include "hustat/stats.hpp"
#include "hustat/ustat.hpp"
