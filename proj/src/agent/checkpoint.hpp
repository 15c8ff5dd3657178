#pragma once

#include <cstdint>
#include <string>

#include "agent/model.hpp"

namespace plab {

// Binary checkpoint: fixed header (format version, config, seeds, the run
// config hash of the producing pipeline) followed by every parameter block in
// declaration order. Writing is byte-deterministic; load(save(p)) == p
// bit-for-bit.
void save_checkpoint(const std::string& path, const AgentParams& params,
                     std::uint64_t run_config_hash);

AgentParams load_checkpoint(const std::string& path, std::uint64_t* run_config_hash = nullptr);

}  // namespace plab
