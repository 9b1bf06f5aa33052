#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bpp {

struct Model;

enum class Axis { out_channels, in_channels };

struct SiteMember {
    std::string layer;  // layer name, e.g. "block0.conv1"
    Axis axis;
};

// A group of channel positions that must be pruned together. Site 0 is the
// residual-tied trunk; the rest are block interiors in graph order.
struct PruneSite {
    std::size_t id = 0;
    std::vector<SiteMember> members;
    std::size_t width = 0;
};

struct PruneMask {
    std::size_t site_id = 0;
    std::vector<std::size_t> drop;  // sorted, unique

    bool operator==(const PruneMask&) const = default;
};

std::vector<PruneSite> enumerate_sites(const Model& model);

// Checks index bounds, non-emptiness and that at least one channel survives.
void validate_mask(const PruneMask& mask, const std::vector<PruneSite>& sites);

// Merges masks addressed to the same site; result ordered by site id.
std::vector<PruneMask> merge_masks(const std::vector<PruneMask>& masks, const std::vector<PruneSite>& sites);

}  // namespace bpp
