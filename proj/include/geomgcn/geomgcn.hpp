#pragma once

#include "geomgcn/autograd.hpp"
#include "geomgcn/embedding.hpp"
#include "geomgcn/graph.hpp"
#include "geomgcn/harness.hpp"
#include "geomgcn/isomap.hpp"
#include "geomgcn/model.hpp"
#include "geomgcn/neighborhood.hpp"
#include "geomgcn/poincare.hpp"
#include "geomgcn/rng.hpp"
#include "geomgcn/struc2vec.hpp"
#include "geomgcn/synthetic.hpp"
#include "geomgcn/tensor.hpp"
