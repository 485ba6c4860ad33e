#pragma once

// Everything in one include.

#include "tagstrain/baseline.hpp"
#include "tagstrain/config.hpp"
#include "tagstrain/dataset.hpp"
#include "tagstrain/eval.hpp"
#include "tagstrain/geometry.hpp"
#include "tagstrain/image.hpp"
#include "tagstrain/io.hpp"
#include "tagstrain/models/checkpoint.hpp"
#include "tagstrain/models/pipeline.hpp"
#include "tagstrain/models/training.hpp"
#include "tagstrain/phantom.hpp"
#include "tagstrain/preprocess.hpp"
#include "tagstrain/stats.hpp"
#include "tagstrain/strain.hpp"
