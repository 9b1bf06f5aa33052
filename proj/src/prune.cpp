#include "bpp/prune.hpp"

#include <algorithm>
#include <numeric>

namespace bpp {

std::vector<PruneMask> candidate_masks(const PruneSite& site) {
    if (site.width < 2)
        throw ConfigError("site " + std::to_string(site.id) + " has width " + std::to_string(site.width) +
                          "; pruning it would leave no channel");
    std::vector<PruneMask> out;
    for (std::size_t c = 0; c < site.width; ++c) out.push_back({site.id, {c}});
    return out;
}

namespace {

std::vector<CandidateScore> score_masks(const Model& model, const std::vector<PruneMask>& candidates,
                                        std::span<const ImagePair> valset, const std::vector<PruneMask>& accepted,
                                        const EvalOptions& eval) {
    if (valset.empty()) throw ConfigError("candidate evaluation needs a non-empty validation set");
    std::vector<CandidateScore> out;
    out.reserve(candidates.size());
    for (const auto& cand : candidates) {
        std::vector<PruneMask> masks = accepted;
        masks.push_back(cand);
        out.push_back({cand, mean_psnr_y(apply_mask(model, masks), valset, eval)});
    }
    return out;
}

// All k-subsets of [0, n) in lexicographic order.
std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
        out.push_back(idx);
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
        if (i == 0) break;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    return out;
}

}  // namespace

std::vector<CandidateScore> evaluate_candidates(const Model& model, const PruneSite& site,
                                                std::span<const ImagePair> valset,
                                                const std::vector<PruneMask>& accepted, const EvalOptions& eval) {
    return score_masks(model, candidate_masks(site), valset, accepted, eval);
}

PruneMask select_mask(std::span<const CandidateScore> scores, std::size_t drop_count) {
    if (drop_count == 0) throw ConfigError("select_mask: drop_count must be at least 1");
    if (drop_count >= scores.size())
        throw ConfigError("select_mask: cannot drop " + std::to_string(drop_count) + " of " +
                          std::to_string(scores.size()) + " channels");
    std::vector<const CandidateScore*> ranked;
    for (const auto& s : scores) {
        if (s.mask.drop.size() != 1) throw ConfigError("select_mask expects single-channel candidates");
        ranked.push_back(&s);
    }
    std::sort(ranked.begin(), ranked.end(), [](const CandidateScore* a, const CandidateScore* b) {
        if (a->psnr_val != b->psnr_val) return a->psnr_val > b->psnr_val;
        return a->mask.drop[0] < b->mask.drop[0];
    });
    PruneMask out{ranked.front()->mask.site_id, {}};
    for (std::size_t i = 0; i < drop_count; ++i) out.drop.push_back(ranked[i]->mask.drop[0]);
    std::sort(out.drop.begin(), out.drop.end());
    return out;
}

PruneResult prune_pipeline(const Model& model, std::span<const ImagePair> valset, std::size_t target_ch,
                           const PruneOptions& opts) {
    const std::size_t ch = model.config.ch;
    if (target_ch == 0 || target_ch > ch)
        throw ConfigError("prune target " + std::to_string(target_ch) + " must lie in [1, " + std::to_string(ch) + "]");
    if (valset.empty()) throw ConfigError("pruning needs a non-empty validation set");

    PruneResult r;
    r.psnr_before = mean_psnr_y(model, valset, opts.eval);
    const std::size_t drop = ch - target_ch;
    if (drop == 0) {
        r.model = model;
        r.psnr_after = r.psnr_before;
        return r;
    }

    for (const auto& site : enumerate_sites(model)) {
        if (drop >= site.width)
            throw ConfigError("site " + std::to_string(site.id) + " of width " + std::to_string(site.width) +
                              " cannot lose " + std::to_string(drop) + " channels");
        const std::vector<PruneMask> prior = opts.keep_previous ? r.masks : std::vector<PruneMask>{};
        SiteReport rep;
        rep.site_id = site.id;
        rep.width = site.width;
        if (opts.rule == SelectionRule::top_k_union) {
            rep.candidates = evaluate_candidates(model, site, valset, prior, opts.eval);
            rep.selected = select_mask(rep.candidates, drop);
        } else {
            std::vector<PruneMask> cands;
            for (auto& s : subsets(site.width, drop)) cands.push_back({site.id, std::move(s)});
            rep.candidates = score_masks(model, cands, valset, prior, opts.eval);
            const auto best = std::max_element(rep.candidates.begin(), rep.candidates.end(),
                                               [](const CandidateScore& a, const CandidateScore& b) {
                                                   return a.psnr_val < b.psnr_val;  // first maximum wins
                                               });
            rep.selected = best->mask;
        }
        r.masks.push_back(rep.selected);
        rep.psnr_after = mean_psnr_y(apply_mask(model, r.masks), valset, opts.eval);
        r.sites.push_back(std::move(rep));
    }
    r.psnr_after = r.sites.back().psnr_after;
    r.model = compact(model, r.masks);
    return r;
}

nlohmann::json prune_report_json(const PruneResult& r) {
    nlohmann::json sites = nlohmann::json::array();
    for (const auto& s : r.sites) {
        nlohmann::json table = nlohmann::json::array();
        for (const auto& c : s.candidates)
            table.push_back({{"drop", c.mask.drop}, {"psnr_val", c.psnr_val}, {"psnr_drop", r.psnr_before - c.psnr_val}});
        sites.push_back({{"site_id", s.site_id},
                         {"width", s.width},
                         {"dropped_channels", s.selected.drop},
                         {"psnr_after", s.psnr_after},
                         {"candidates", table}});
    }
    return {{"psnr_before", r.psnr_before}, {"psnr_after", r.psnr_after}, {"ch_after", r.model.config.ch}, {"sites", sites}};
}

}  // namespace bpp
