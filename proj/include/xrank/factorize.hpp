#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "xrank/prelim.hpp"

namespace xrank {

// Standard normal CDF and its inverse (Wichura's AS241, ~1e-16 relative).
double normal_cdf(double x);
double normal_quantile(double p);

// Rankit transform: mu + sigma * Phi^-1((r - 0.5) / n) with average ranks for
// ties, clamped at 0. Throws DataError on an empty input.
std::vector<double> rank_inverse_normal(std::span<const double> scores, double mu = 3.0, double sigma = 1.0);

// Known cells of E_i after the rankit transform. Values are >= 0.
struct NormalizedMatrix {
    std::size_t members = 0;
    std::size_t skills = 0;
    std::vector<SparseEntry> entries;  // sorted by (member, skill)
    double mu = 3.0;
    double sigma = 1.0;
};

NormalizedMatrix normalize(const SparseExpertise& ei, std::size_t members, std::size_t skills, double mu = 3.0,
                           double sigma = 1.0);

// c_ms: alpha for a positive known score, 1 otherwise.
inline double confidence(double s_norm, double alpha) { return s_norm > 0.0 ? alpha : 1.0; }

struct FactorHyperParams {
    std::size_t k = 8;
    double lambda_reg = 0.1;
    double alpha = 40.0;
    std::size_t sweeps = 15;
    std::uint64_t seed = 1;

    void validate() const;
};

Json to_json(const FactorHyperParams& hp);
FactorHyperParams factor_params_from_json(const Json& j);

struct FactorModel {
    Matrix x;  // members x k
    Matrix y;  // skills x k

    std::size_t k() const { return static_cast<std::size_t>(x.cols()); }
    std::span<const double> member_vector(MemberId m) const;
    std::span<const double> skill_vector(SkillId s) const;
    double score(MemberId m, SkillId s) const { return x.row(m).dot(y.row(s)); }
};

void save_factors(const FactorModel& model, const std::filesystem::path& path);
FactorModel load_factors(const std::filesystem::path& path);

// Weighted loss over every (member, skill) cell: known cells carry their
// normalized score with confidence c_ms, unknown cells a zero target with
// confidence 1, plus lambda * (|X|^2 + |Y|^2).
double objective(const NormalizedMatrix& e, const FactorModel& model, const FactorHyperParams& hp);

struct AlsReport {
    std::vector<double> objective_trace;  // [initial, after sweep 1, ...]
    std::size_t ridge_retries = 0;
};

// Alternating least squares. Each row solve is the exact ridge minimizer
//   x_m = (Y'Y + Y'(C_m - I)Y + lambda I)^-1 Y'C_m s_m
// using the shared Gram matrix so a sweep is O(nnz k^2 + (m+s) k^3).
FactorModel als_fit(const NormalizedMatrix& e, const FactorHyperParams& hp, AlsReport* report = nullptr);

using DenseExpertise = SparseExpertise;
using CellList = std::vector<std::pair<MemberId, SkillId>>;

// E_i keys plus, for each member, every skill sharing a co-occurrence group
// with one of their E_i skills. Sorted, unique.
CellList relevance_gate(const SkillTaxonomy& taxonomy, const SparseExpertise& ei);

DenseExpertise reconstruct(const FactorModel& model, const CellList& gate);

// Sum of per-skill inner products, x.y1 + x.y2 + ..., the same summation the
// index performs over payloads.
double multi_skill_score(std::span<const double> member, const std::vector<std::span<const double>>& skills);
// x . (y1 + y2 + ...), the query-projection form.
double projected_query_score(std::span<const double> member, const std::vector<std::span<const double>>& skills);

struct CvPoint {
    FactorHyperParams hp;
    double heldout_spearman = 0.0;
};

struct CvResult {
    FactorHyperParams best;
    std::size_t best_index = 0;
    std::vector<CvPoint> points;
};

// Holds out holdout_fraction of the known cells, fits each grid point on the
// rest and keeps the one with the highest held-out Spearman correlation.
CvResult cross_validate(const NormalizedMatrix& e, const std::vector<FactorHyperParams>& grid,
                        std::uint64_t seed = 1, double holdout_fraction = 0.2);

}  // namespace xrank
