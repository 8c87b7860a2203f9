#pragma once

#include "binsight/dataset.hpp"
#include "binsight/error.hpp"
#include "binsight/eval.hpp"
#include "binsight/featurize.hpp"
#include "binsight/forest.hpp"
#include "binsight/parallel.hpp"
#include "binsight/rng.hpp"
