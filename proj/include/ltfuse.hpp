#pragma once

#include "ltfuse/core.hpp"
#include "ltfuse/data_model.hpp"
#include "ltfuse/binary_exact.hpp"
#include "ltfuse/ols.hpp"
#include "ltfuse/linear_cf.hpp"
#include "ltfuse/nuisance.hpp"
#include "ltfuse/general.hpp"
#include "ltfuse/oracle.hpp"
#include "ltfuse/simulation.hpp"
#include "ltfuse/diagnostics.hpp"
#include "ltfuse/bootstrap.hpp"
