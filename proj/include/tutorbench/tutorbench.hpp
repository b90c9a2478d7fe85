#pragma once

// Umbrella header for the tutorbench library.

#include "tutorbench/agents.hpp"
#include "tutorbench/baselines.hpp"
#include "tutorbench/dialogue.hpp"
#include "tutorbench/diarize.hpp"
#include "tutorbench/judging.hpp"
#include "tutorbench/metrics.hpp"
#include "tutorbench/simulate.hpp"
#include "tutorbench/stats.hpp"

namespace tutorbench {
inline constexpr const char* version = "0.1.0";
}
