#pragma once

#include "mdr/common.hpp"
#include "mdr/rng.hpp"
#include "mdr/digest.hpp"
#include "mdr/corpus.hpp"
#include "mdr/vocabulary.hpp"
#include "mdr/mixture.hpp"
#include "mdr/encoder.hpp"
#include "mdr/evaluation.hpp"
#include "mdr/analysis.hpp"
#include "mdr/synth.hpp"
#include "mdr/harness.hpp"
