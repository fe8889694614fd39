#pragma once

/// Umbrella header for the nsp-ope library: efficient off-policy evaluation
/// of natural stochastic policies (tilting and modified-treatment) on
/// tabular decision processes.

#include "nsp_ope/bounds.hpp"
#include "nsp_ope/common.hpp"
#include "nsp_ope/crossfit.hpp"
#include "nsp_ope/dp.hpp"
#include "nsp_ope/enumeration.hpp"
#include "nsp_ope/estimators.hpp"
#include "nsp_ope/experiments.hpp"
#include "nsp_ope/io.hpp"
#include "nsp_ope/mdp.hpp"
#include "nsp_ope/nmdp.hpp"
#include "nsp_ope/nuisance.hpp"
#include "nsp_ope/policies.hpp"
#include "nsp_ope/random_instances.hpp"
#include "nsp_ope/selftest.hpp"
#include "nsp_ope/simulate.hpp"
#include "nsp_ope/taxi.hpp"
