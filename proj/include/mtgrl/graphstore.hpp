#pragma once

#include "mtgrl/graphstore/edge_split.hpp"
#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/graphstore/graph_io.hpp"
#include "mtgrl/graphstore/partition.hpp"
#include "mtgrl/graphstore/sampling.hpp"
#include "mtgrl/graphstore/sbm.hpp"
