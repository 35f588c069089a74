#pragma once

// Umbrella header.

#include "robform/barrier.hpp"
#include "robform/certifier.hpp"
#include "robform/io.hpp"
#include "robform/pipeline.hpp"
#include "robform/netgraph.hpp"
#include "robform/parallel.hpp"
#include "robform/polynomial.hpp"
#include "robform/runlog.hpp"
#include "robform/sdp.hpp"
#include "robform/simulate.hpp"
#include "robform/smr.hpp"
#include "robform/svg_plot.hpp"
