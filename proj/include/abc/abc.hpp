#pragma once

// Umbrella header for the whole library.

#include "abc/activations.hpp"
#include "abc/batchnorm.hpp"
#include "abc/codes.hpp"
#include "abc/config.hpp"
#include "abc/dataset.hpp"
#include "abc/errors.hpp"
#include "abc/evaluation.hpp"
#include "abc/gradcheck.hpp"
#include "abc/graph.hpp"
#include "abc/losses.hpp"
#include "abc/network.hpp"
#include "abc/ops.hpp"
#include "abc/optimizer.hpp"
#include "abc/random.hpp"
#include "abc/retrieval.hpp"
#include "abc/schedules.hpp"
#include "abc/tensor.hpp"
#include "abc/trainer.hpp"
