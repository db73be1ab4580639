#pragma once

#include "multiproc/errors.hpp"
#include "multiproc/partition.hpp"
#include "multiproc/rk4.hpp"
#include "multiproc/system.hpp"
#include "multiproc/pmp.hpp"
#include "multiproc/parallel.hpp"
#include "multiproc/investment.hpp"
#include "multiproc/tanks.hpp"
#include "multiproc/serialize.hpp"
#include "multiproc/csv.hpp"
#include "multiproc/cli.hpp"
