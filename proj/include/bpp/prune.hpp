#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "bpp/datapipe.hpp"
#include "bpp/evaluate.hpp"
#include "bpp/model.hpp"
#include "bpp/sites.hpp"

namespace bpp {

struct CandidateScore {
    PruneMask mask;
    double psnr_val = 0;
};

// One single-channel mask per channel of the site.
std::vector<PruneMask> candidate_masks(const PruneSite& site);

// Validation PSNR(Y) of the model with `accepted` plus each candidate masked.
// No parameter is updated.
std::vector<CandidateScore> evaluate_candidates(const Model& model, const PruneSite& site,
                                                std::span<const ImagePair> valset,
                                                const std::vector<PruneMask>& accepted = {},
                                                const EvalOptions& eval = {});

// Union of the drop_count single-channel candidates with the highest PSNR;
// ties go to the lower channel index.
PruneMask select_mask(std::span<const CandidateScore> scores, std::size_t drop_count);

enum class SelectionRule {
    top_k_union,  // rank singletons, merge the best k
    joint,        // evaluate every k-subset directly (O(C^k) evaluations)
};

struct PruneOptions {
    SelectionRule rule = SelectionRule::top_k_union;
    bool keep_previous = true;  // evaluate later sites with earlier masks applied
    EvalOptions eval{};
};

struct SiteReport {
    std::size_t site_id = 0;
    std::size_t width = 0;
    std::vector<CandidateScore> candidates;  // singletons, or subsets for the joint rule
    PruneMask selected;
    double psnr_after = 0;  // all masks accepted so far applied
};

struct PruneResult {
    std::vector<PruneMask> masks;
    Model model;  // compacted
    double psnr_before = 0;
    double psnr_after = 0;
    std::vector<SiteReport> sites;
};

// Drops (ch - target_ch) channels from every site, site by site, then compacts.
PruneResult prune_pipeline(const Model& model, std::span<const ImagePair> valset, std::size_t target_ch,
                           const PruneOptions& opts = {});

nlohmann::json prune_report_json(const PruneResult& r);

}  // namespace bpp
