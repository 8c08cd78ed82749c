#pragma once

#include "cfg_decoder.hpp"
#include "codec_layout.hpp"
#include "config.hpp"
#include "core.hpp"
#include "cycle_eval.hpp"
#include "dedup.hpp"
#include "judge.hpp"
#include "manifest.hpp"
#include "mixture.hpp"
#include "packing.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "quality_fusion.hpp"
#include "resampler.hpp"
#include "segment.hpp"
#include "sft.hpp"
#include "synth.hpp"
#include "text_rules.hpp"
