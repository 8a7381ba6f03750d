#pragma once

// Umbrella header for the whole library.

#include "harmonize/adam.hpp"
#include "harmonize/bradley_terry.hpp"
#include "harmonize/checkpoint.hpp"
#include "harmonize/conv.hpp"
#include "harmonize/dataset.hpp"
#include "harmonize/errors.hpp"
#include "harmonize/extractor.hpp"
#include "harmonize/generator.hpp"
#include "harmonize/grad_check.hpp"
#include "harmonize/image.hpp"
#include "harmonize/layers.hpp"
#include "harmonize/losses.hpp"
#include "harmonize/metrics.hpp"
#include "harmonize/norm.hpp"
#include "harmonize/ops.hpp"
#include "harmonize/parallel.hpp"
#include "harmonize/rng.hpp"
#include "harmonize/synth.hpp"
#include "harmonize/tensor.hpp"
#include "harmonize/trainer.hpp"
