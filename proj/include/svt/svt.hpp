#pragma once

#include "svt/attention.hpp"
#include "svt/checkpoint.hpp"
#include "svt/config.hpp"
#include "svt/encoder.hpp"
#include "svt/error.hpp"
#include "svt/eval.hpp"
#include "svt/features.hpp"
#include "svt/flops.hpp"
#include "svt/grad_check.hpp"
#include "svt/manifest.hpp"
#include "svt/metrics.hpp"
#include "svt/model.hpp"
#include "svt/patch_embed.hpp"
#include "svt/rng.hpp"
#include "svt/semantic_head.hpp"
#include "svt/semantic_space.hpp"
#include "svt/synthetic.hpp"
#include "svt/tensor.hpp"
#include "svt/tensor_io.hpp"
#include "svt/video.hpp"
