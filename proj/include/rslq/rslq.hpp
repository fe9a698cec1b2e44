#pragma once

#include "rslq/error.hpp"
#include "rslq/random.hpp"
#include "rslq/chain.hpp"
#include "rslq/model.hpp"
#include "rslq/riccati.hpp"
#include "rslq/simulate.hpp"
#include "rslq/verify.hpp"
#include "rslq/meanvar.hpp"
#include "rslq/bsde.hpp"
#include "rslq/io.hpp"
