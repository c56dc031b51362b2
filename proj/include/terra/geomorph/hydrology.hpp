#pragma once

#include "terra/core/stats.hpp"
#include "terra/geomorph/grid.hpp"

namespace terra::geomorph {

inline constexpr double kFillEpsilon = 1e-5;

/// Priority-Flood with an epsilon gradient. Border cells are outlets and keep
/// their elevation; every interior cell ends at max(h, lowest neighbour + eps),
/// which is the smallest surface where each interior cell drains.
ElevationGrid fill_depressions(const ElevationGrid& h, double epsilon = kFillEpsilon);

struct FlowResult {
  Grid<Direction> direction;
  Grid<int64_t> accumulation;
};

/// Steepest descent to one of the 8 neighbours (diagonals at distance sqrt 2).
/// Cells with no strictly lower neighbour get kNone. Throws NumericError if
/// the flow graph has a cycle.
FlowResult flow_accumulation_d8(const ElevationGrid& filled);

using terra::percentile;

enum class ChannelMode { kValley, kRidge };

struct ChannelResult {
  Mask mask;
  double threshold = 0.0;   // accumulation value at the percentile
  bool degenerate = false;  // constant input; mask is empty
};

/// Valley mode runs fill + D8 on h, ridge mode on max(h) - h; the mask keeps
/// cells whose accumulation reaches the given percentile.
ChannelResult extract_channels(const ElevationGrid& h, ChannelMode mode, double percentile_threshold = 98.0,
                               double epsilon = kFillEpsilon);

}  // namespace terra::geomorph
