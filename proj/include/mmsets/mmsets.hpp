#pragma once

#include "mmsets/checkpoint.hpp"
#include "mmsets/config.hpp"
#include "mmsets/data.hpp"
#include "mmsets/error.hpp"
#include "mmsets/evaluation.hpp"
#include "mmsets/fusion.hpp"
#include "mmsets/init.hpp"
#include "mmsets/metrics.hpp"
#include "mmsets/sample.hpp"
#include "mmsets/tensor.hpp"
#include "mmsets/training.hpp"
