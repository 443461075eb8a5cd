#pragma once

#include <filesystem>
#include <iosfwd>

#include "mkgcn/nn.hpp"

namespace mkgcn {

/// JSON container: architecture descriptor (modules with their branch orders,
/// widths, aggregator and activation; head; input width; classes) plus every
/// parameter tensor by name. Doubles are written in shortest round-trip form,
/// so a reloaded network reproduces scores bit for bit.
void save_checkpoint(std::ostream& out, const Network& net);
Network load_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Network& net);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace mkgcn
