#pragma once

#include "skewt_estim/baselines.hpp"
#include "skewt_estim/errors.hpp"
#include "skewt_estim/filter.hpp"
#include "skewt_estim/linalg.hpp"
#include "skewt_estim/model.hpp"
#include "skewt_estim/skewt.hpp"
#include "skewt_estim/smoother.hpp"
#include "skewt_estim/truncnorm.hpp"
