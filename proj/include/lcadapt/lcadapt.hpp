#pragma once

// Umbrella header: the whole engine in one include.

#include "lcadapt/checkpoint.hpp"
#include "lcadapt/common.hpp"
#include "lcadapt/config.hpp"
#include "lcadapt/dpa.hpp"
#include "lcadapt/labelmap.hpp"
#include "lcadapt/losses.hpp"
#include "lcadapt/metrics.hpp"
#include "lcadapt/ops.hpp"
#include "lcadapt/optim.hpp"
#include "lcadapt/png.hpp"
#include "lcadapt/raster.hpp"
#include "lcadapt/run.hpp"
#include "lcadapt/synth.hpp"
#include "lcadapt/tensor.hpp"
#include "lcadapt/tiling.hpp"
#include "lcadapt/trainer.hpp"
#include "lcadapt/unet.hpp"
