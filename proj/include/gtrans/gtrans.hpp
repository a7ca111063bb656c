#pragma once

// Semi-supervised graph-to-graph translation: dual per-domain embedding
// spaces connected by an explicit translator, trained on a mix of paired and
// unpaired graphs with a mutual-information alignment signal.

#include "gtrans/adam.hpp"
#include "gtrans/checkpoint.hpp"
#include "gtrans/config.hpp"
#include "gtrans/dataset.hpp"
#include "gtrans/decoder.hpp"
#include "gtrans/encoder.hpp"
#include "gtrans/experiments.hpp"
#include "gtrans/graph.hpp"
#include "gtrans/metrics.hpp"
#include "gtrans/model.hpp"
#include "gtrans/rng.hpp"
#include "gtrans/tensor.hpp"
#include "gtrans/train.hpp"
#include "gtrans/translator.hpp"
