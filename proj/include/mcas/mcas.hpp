#pragma once

#include "mcas/core.hpp"
#include "mcas/harris.hpp"
#include "mcas/persistent.hpp"
#include "mcas/reclamation.hpp"
#include "mcas/sim_pmem.hpp"
