#pragma once

#include "errors.hpp"
#include "rng.hpp"
#include "parallel.hpp"
#include "search_space.hpp"
#include "metrics.hpp"
#include "windows.hpp"
#include "data_prep.hpp"
#include "nnet.hpp"
#include "evaluator.hpp"
#include "tpe.hpp"
#include "hyperband.hpp"
#include "reinforce.hpp"
#include "study.hpp"
