#pragma once

// Channels shipped with the tool.

#include <string>
#include <string_view>
#include <vector>

#include "zec/fsm.hpp"

namespace zec {

struct BundledChannel {
  std::string file;  // e.g. "fig3_no_consecutive.json"
  NoiseFsm fsm;
};

/// No-consecutive-errors (q=2), the three-state tribonacci graph (q=3), the
/// pentagon (q=5), Gilbert-Elliott equivalent (q=5), sliding window (3,1)
/// (q=2), then the noiseless and q=3 no-consecutive extras.
const std::vector<BundledChannel>& bundled_channels();

/// Lookup by file name with or without the ".json" suffix.
const NoiseFsm& bundled_channel(std::string_view name);

}  // namespace zec
