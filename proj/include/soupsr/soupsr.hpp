#pragma once

// Umbrella header for the whole toolkit.

#include "soupsr/checkpoint.hpp"
#include "soupsr/dataset.hpp"
#include "soupsr/degrade.hpp"
#include "soupsr/errors.hpp"
#include "soupsr/losses.hpp"
#include "soupsr/metrics.hpp"
#include "soupsr/nifti.hpp"
#include "soupsr/nn/adam.hpp"
#include "soupsr/nn/discriminator.hpp"
#include "soupsr/nn/feature_extractor.hpp"
#include "soupsr/nn/generator.hpp"
#include "soupsr/nn/ops.hpp"
#include "soupsr/nn/params.hpp"
#include "soupsr/nn/tensor_archive.hpp"
#include "soupsr/rng.hpp"
#include "soupsr/sha256.hpp"
#include "soupsr/spline.hpp"
#include "soupsr/synth.hpp"
#include "soupsr/tensor.hpp"
#include "soupsr/trainer.hpp"
#include "soupsr/volume.hpp"
#include "soupsr/volume_io.hpp"
#include "soupsr/zip.hpp"

namespace soupsr {

inline constexpr const char* kVersion = "0.1.0";

} // namespace soupsr
