#pragma once

#include "vprm/charpoly.hpp"
#include "vprm/core.hpp"
#include "vprm/experiments.hpp"
#include "vprm/fredholm.hpp"
#include "vprm/kernel.hpp"
#include "vprm/limit.hpp"
#include "vprm/noise.hpp"
#include "vprm/parallel.hpp"
#include "vprm/permanent.hpp"
#include "vprm/profile.hpp"
#include "vprm/profile_spec.hpp"
#include "vprm/rng.hpp"
#include "vprm/sampler.hpp"
#include "vprm/spectra.hpp"
#include "vprm/stats.hpp"
