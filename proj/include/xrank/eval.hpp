#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xrank/logs.hpp"

namespace xrank {

// Members counted as relevant to each skill: explicit or inferred presence in
// E_f. Sorted by member id.
struct SkillHolders {
    std::vector<std::vector<MemberId>> by_skill;
};

SkillHolders relevant_members(const DenseExpertise& ef, std::size_t skills);

using ExpertiseScorer = std::function<double(MemberId, std::span<const SkillId>)>;

struct CohortAucConfig {
    std::size_t trials = 500;
    std::size_t k_max = 250;
    std::size_t pool = 1000;
    std::size_t query_skills = 1;
    std::uint64_t seed = 3;
};

struct RankCdfCurve {
    std::vector<double> points;  // points[K-1] = P(seed rank <= K)
    std::size_t trials = 0;      // trials that produced a rank
    std::size_t skipped = 0;
    double mean_pool = 0.0;
    double auc = 0.0;            // mean of points
    double uniform_auc = 0.0;    // expectation for a random scorer on the same pools
};

// Seed members are drawn uniformly from the cohort; the query is their
// highest-relevance listed skill(s) present in E_f. The seed is ranked among
// up to `pool` other holders of the query, ties placed uniformly at random.
RankCdfCurve cohort_auc(const Corpus& corpus, const SkillHolders& holders, const ExpertiseScorer& scorer,
                        Cohort cohort, const CohortAucConfig& cfg);

// (1/K_max) * sum_K min(K, P + 1) / (P + 1).
double uniform_rank_auc(std::size_t pool, std::size_t k_max);

// Published AUC@250 per cohort, keyed by cohort name plus "random".
const std::map<std::string, double>& published_cohort_auc();

struct MetricsReport {
    double ctr_at_1 = 0.0;
    double ctr_at_10 = 0.0;
    double mrr = 0.0;
    double messages_per_search = 0.0;
    std::size_t searches = 0;
};

MetricsReport session_metrics(const std::vector<SearchImpression>& sessions, std::size_t k = 10);

struct AbQuery {
    std::uint64_t query_id = 0;  // position in the stream
    MemberId searcher = 0;
    std::vector<SkillId> skills;
};

// Skills drawn uniformly; a second same-group skill is added with
// probability two_skill_fraction when the ALL intersection stays at least
// min_results long.
std::vector<AbQuery> make_query_stream(const Corpus& corpus, const InvertedIndex& index, std::size_t searches,
                                       std::uint64_t seed, double two_skill_fraction = 0.3,
                                       std::size_t min_results = 20);

using Ranker = std::function<std::vector<MemberId>(const AbQuery&)>;

struct AbConfig {
    std::size_t page_size = 10;
    std::size_t metric_k = 10;
    std::size_t bootstrap = 1000;
    std::uint64_t seed = 5;
    ExamineCurve curve = ExamineCurve::harmonic(10);
    ClickModel clicks;
};

struct MetricLift {
    std::string metric;
    double control = 0.0;
    double treatment = 0.0;
    std::optional<double> lift;  // unset when control is zero
    double ci_low = 0.0;
    double ci_high = 0.0;

    bool significant_positive() const { return lift && ci_low > 0.0; }
};

struct AbReport {
    MetricsReport control;
    MetricsReport treatment;
    std::vector<MetricLift> lifts;  // ctr_at_1, ctr_at_10, mrr, messages_per_search

    const MetricLift& lift(const std::string& metric) const;
};

// Both arms see the same query stream and the same per-search seed; the
// 95% interval comes from a paired bootstrap over searches.
AbReport ab_compare(const Ranker& control, const Ranker& treatment, const std::vector<AbQuery>& queries,
                    const UtilityFn& utility, const AbConfig& cfg);

// Simulated user preference: planted expertise on the query skills plus
// locality, social closeness, title match and a spam penalty.
struct UserModelWeights {
    double bias = -2.5;
    double expertise = 1.0;
    double geo = 0.8;
    double social = 1.2;
    double title = 0.5;
    double spam = -4.0;
};

class PlantedUserModel {
public:
    PlantedUserModel(const RankingContext& context, const PlantedTruth& truth, UserModelWeights w = {});

    // Not thread-safe: the searcher view of the last call is cached.
    double utility(const SearchImpression& impression, MemberId member) const;

private:
    const RankingContext* context_;
    const PlantedTruth* truth_;
    UserModelWeights w_;
    mutable std::optional<QueryContext> cached_;
};

}  // namespace xrank
