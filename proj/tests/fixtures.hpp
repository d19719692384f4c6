// In-memory offline pipeline on a generated corpus, shared by the unit tests
// and the acceptance runner.
#pragma once

#include <optional>
#include <vector>

#include "xrank/corpus.hpp"
#include "xrank/factorize.hpp"
#include "xrank/features.hpp"
#include "xrank/index.hpp"
#include "xrank/prelim.hpp"

namespace fixture {

struct Offline {
    xrank::GeneratedCorpus gc;
    xrank::ExpertiseTensor tensor;
    xrank::SparseExpertise ei;
    xrank::NormalizedMatrix e;
    xrank::FactorHyperParams hp;
    xrank::FactorModel model;
    xrank::DenseExpertise ef;
    std::optional<xrank::InvertedIndex> index;
};

inline std::vector<xrank::FactorHyperParams> cv_grid(std::uint64_t seed) {
    std::vector<xrank::FactorHyperParams> grid;
    for (std::size_t k : {2, 4, 6, 8})
        for (double l : {0.1, 1.0}) {
            xrank::FactorHyperParams hp;
            hp.k = k;
            hp.lambda_reg = l;
            hp.seed = seed;
            grid.push_back(hp);
        }
    return grid;
}

// Generation through E_i and its normalized form.
inline Offline scored(const xrank::GenConfig& g) {
    Offline o;
    o.gc = xrank::generate_corpus(g);
    o.tensor = xrank::compute_features(o.gc.corpus, 0.5);
    const xrank::FeatureExtractor extractor(o.gc.corpus);
    xrank::PairConfig pc;
    pc.seed = g.seed;
    const auto cal = xrank::calibrate_prelim(o.gc.corpus, o.tensor, extractor, {pc}, {1e-3, 1e-2, 1e-1});
    o.ei = xrank::score_tensor(cal.fit.model, o.tensor);
    o.e = xrank::normalize(o.ei, g.m, g.s);
    return o;
}

// Full offline chain: cross-validated ALS, gated reconstruction, index.
inline Offline offline(const xrank::GenConfig& g, bool cv = true) {
    Offline o = scored(g);
    o.hp.k = g.k_true;
    o.hp.seed = g.seed;
    if (cv) o.hp = xrank::cross_validate(o.e, cv_grid(g.seed), g.seed).best;
    o.model = xrank::als_fit(o.e, o.hp);
    o.ef = xrank::reconstruct(o.model, xrank::relevance_gate(o.gc.corpus.taxonomy, o.ei));
    o.index = xrank::InvertedIndex::build(o.ef, g.m, g.s);
    return o;
}

}  // namespace fixture
