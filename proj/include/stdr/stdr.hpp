#pragma once

#include "stdr/alignment.hpp"
#include "stdr/error.hpp"
#include "stdr/experiment.hpp"
#include "stdr/genmodel.hpp"
#include "stdr/linalg.hpp"
#include "stdr/matrix.hpp"
#include "stdr/merging.hpp"
#include "stdr/partition.hpp"
#include "stdr/recovery.hpp"
#include "stdr/similarity.hpp"
#include "stdr/theory.hpp"
#include "stdr/trees.hpp"
#include "stdr/validation.hpp"
