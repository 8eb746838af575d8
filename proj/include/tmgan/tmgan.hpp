#pragma once

#include "tmgan/audio.hpp"
#include "tmgan/checkpoint.hpp"
#include "tmgan/common.hpp"
#include "tmgan/discriminators.hpp"
#include "tmgan/eval.hpp"
#include "tmgan/framing.hpp"
#include "tmgan/generator.hpp"
#include "tmgan/gvq.hpp"
#include "tmgan/losses.hpp"
#include "tmgan/nn.hpp"
#include "tmgan/optim.hpp"
#include "tmgan/stft.hpp"
#include "tmgan/tensor.hpp"
#include "tmgan/tfilm.hpp"
#include "tmgan/trace.hpp"
#include "tmgan/trainer.hpp"
