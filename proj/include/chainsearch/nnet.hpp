#pragma once

#include "nnet/checkpoint_io.hpp"
#include "nnet/model_spec.hpp"
#include "nnet/network.hpp"
#include "nnet/training.hpp"
