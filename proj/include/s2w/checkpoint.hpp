#pragma once

#include "s2w/io.hpp"
#include "s2w/network.hpp"

#include <filesystem>
#include <iosfwd>

namespace s2w
{

// S2WC checkpoints: "S2WC", u16 LE version, then until end of file, per
// entry u32 name length, name bytes, u32 rank, u32 dims, float32 LE values.
// The first entry, "meta.config", stores the model configuration.

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& os, S2WMambaModel& model);
S2WMambaModel load_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, S2WMambaModel& model);
S2WMambaModel load_checkpoint(const std::filesystem::path& path);

} // namespace s2w
