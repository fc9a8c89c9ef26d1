#pragma once

#include "prunelens/arch.hpp"
#include "prunelens/arch_json.hpp"
#include "prunelens/connectivity.hpp"
#include "prunelens/effprune.hpp"
#include "prunelens/error.hpp"
#include "prunelens/lsq.hpp"
#include "prunelens/methods.hpp"
#include "prunelens/oracle.hpp"
#include "prunelens/plts.hpp"
#include "prunelens/pruners.hpp"
#include "prunelens/random.hpp"
#include "prunelens/report_io.hpp"
#include "prunelens/svg.hpp"
#include "prunelens/sweep.hpp"
#include "prunelens/synflow.hpp"
#include "prunelens/tensors.hpp"
#include "prunelens/zoo.hpp"
