#pragma once

#include "goodd/autodiff.hpp"
#include "goodd/checkpoint.hpp"
#include "goodd/config.hpp"
#include "goodd/contrast.hpp"
#include "goodd/encoder.hpp"
#include "goodd/error.hpp"
#include "goodd/experiment.hpp"
#include "goodd/gradcheck.hpp"
#include "goodd/gradcheck_suite.hpp"
#include "goodd/graph.hpp"
#include "goodd/matrix.hpp"
#include "goodd/scoring.hpp"
#include "goodd/split.hpp"
#include "goodd/structenc.hpp"
#include "goodd/synthetic.hpp"
#include "goodd/trainer.hpp"
#include "goodd/tu_format.hpp"
