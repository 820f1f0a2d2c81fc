#pragma once

namespace berth::harness {

// Sets the spdlog level from BERTH_LOG (trace, debug, info, warn, error,
// critical, off). Unset or unknown values leave the level at info.
void init_logging();

}  // namespace berth::harness
