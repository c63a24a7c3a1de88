#pragma once

#include "cln/baselines.hpp"
#include "cln/checkpoint.hpp"
#include "cln/commands.hpp"
#include "cln/config.hpp"
#include "cln/errors.hpp"
#include "cln/io.hpp"
#include "cln/metrics.hpp"
#include "cln/model.hpp"
#include "cln/numerics.hpp"
#include "cln/relgraph.hpp"
#include "cln/training.hpp"
