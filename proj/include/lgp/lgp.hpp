#pragma once

#include "lgp/dataset.hpp"
#include "lgp/diagnostics.hpp"
#include "lgp/formula.hpp"
#include "lgp/inference.hpp"
#include "lgp/kernels.hpp"
#include "lgp/likelihoods.hpp"
#include "lgp/linalg.hpp"
#include "lgp/model.hpp"
#include "lgp/numerics.hpp"
#include "lgp/nuts.hpp"
#include "lgp/priors.hpp"
#include "lgp/relevance.hpp"
#include "lgp/rng.hpp"
#include "lgp/serialize.hpp"
#include "lgp/simulate.hpp"
#include "lgp/version.hpp"
