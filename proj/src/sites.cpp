#include "bpp/sites.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "bpp/errors.hpp"
#include "bpp/model.hpp"

namespace bpp {

std::vector<PruneSite> enumerate_sites(const Model& model) {
    const ModelConfig& c = model.config;
    std::vector<PruneSite> sites;

    PruneSite trunk;
    trunk.id = 0;
    trunk.width = c.ch;
    trunk.members.push_back({"ds", Axis::out_channels});
    for (std::size_t r = 0; r < c.R; ++r) {
        trunk.members.push_back({block_conv_name(r, 0), Axis::in_channels});
        trunk.members.push_back({block_conv_name(r, c.m - 1), Axis::out_channels});
    }
    trunk.members.push_back({"tail", Axis::in_channels});
    sites.push_back(std::move(trunk));

    for (std::size_t r = 0; r < c.R; ++r) {
        for (std::size_t i = 0; i + 1 < c.m; ++i) {
            PruneSite s;
            s.id = sites.size();
            s.width = c.inner_width(r, i);
            s.members.push_back({block_conv_name(r, i), Axis::out_channels});
            s.members.push_back({block_conv_name(r, i + 1), Axis::in_channels});
            sites.push_back(std::move(s));
        }
    }
    return sites;
}

void validate_mask(const PruneMask& mask, const std::vector<PruneSite>& sites) {
    if (mask.site_id >= sites.size())
        throw ConfigError("mask references unknown site " + std::to_string(mask.site_id));
    const std::size_t width = sites[mask.site_id].width;
    if (mask.drop.empty()) throw ConfigError("mask for site " + std::to_string(mask.site_id) + " drops nothing");
    if (!std::is_sorted(mask.drop.begin(), mask.drop.end()) ||
        std::adjacent_find(mask.drop.begin(), mask.drop.end()) != mask.drop.end())
        throw ConfigError("mask drop indices must be sorted and unique");
    if (mask.drop.back() >= width)
        throw ConfigError("mask drops channel " + std::to_string(mask.drop.back()) + " of a width-" +
                          std::to_string(width) + " site");
    if (mask.drop.size() >= width)
        throw ConfigError("mask leaves site " + std::to_string(mask.site_id) + " with width below 1");
}

std::vector<PruneMask> merge_masks(const std::vector<PruneMask>& masks, const std::vector<PruneSite>& sites) {
    std::map<std::size_t, std::set<std::size_t>> by_site;
    for (const auto& m : masks) {
        validate_mask(m, sites);
        by_site[m.site_id].insert(m.drop.begin(), m.drop.end());
    }
    std::vector<PruneMask> out;
    for (auto& [site, drop] : by_site) {
        PruneMask pm{site, std::vector<std::size_t>(drop.begin(), drop.end())};
        validate_mask(pm, sites);
        out.push_back(std::move(pm));
    }
    return out;
}

}  // namespace bpp
