#pragma once

#include "battx/dataset.hpp"
#include "battx/errors.hpp"
#include "battx/fit_types.hpp"
#include "battx/identify.hpp"
#include "battx/io.hpp"
#include "battx/ladder.hpp"
#include "battx/model.hpp"
#include "battx/nls.hpp"
#include "battx/params.hpp"
#include "battx/profile.hpp"
#include "battx/rng.hpp"
#include "battx/simulate.hpp"
#include "battx/synth.hpp"
