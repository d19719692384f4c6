#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xrank/corpus.hpp"
#include "xrank/index.hpp"

namespace xrank {

enum class RankingFeatureId : std::size_t {
    expertise_sum,
    text_title_match,
    text_profile_match,
    geo_proximity,
    social_common_connections,
    social_graph_distance_inv,
    spam_free,
};

inline constexpr std::size_t kRankingFeatureCount = 7;
inline constexpr std::size_t kMaxHops = 3;

const std::array<std::string_view, kRankingFeatureCount>& ranking_feature_names();

using RankingFeatures = std::vector<double>;

// Hop distances from one searcher, capped at kMaxHops.
struct SearcherView {
    MemberId searcher = 0;
    std::vector<std::uint8_t> hops;  // 0 self, kMaxHops + 1 when farther
};

// Query-side state shared by every candidate of one search.
struct QueryContext {
    std::vector<SkillId> skills;
    std::vector<std::uint32_t> tokens;  // interned, sorted; unknown words dropped
    std::size_t token_count = 0;        // including unknown words
    SearcherView searcher;
};

class RankingContext {
public:
    RankingContext(const Corpus& corpus, const InvertedIndex& index);

    const Corpus& corpus() const { return *corpus_; }
    const InvertedIndex& index() const { return *index_; }

    SearcherView view(MemberId searcher) const;
    QueryContext prepare(std::span<const SkillId> query, MemberId searcher) const;
    // expertise_sum comes from retrieval; the other six are computed here.
    RankingFeatures compute(const QueryContext& q, MemberId member, double expertise_sum) const;
    // Standalone form: expertise_sum from payload lookups.
    RankingFeatures compute(std::span<const SkillId> query, MemberId searcher, MemberId member) const;
    double expertise_sum(std::span<const SkillId> query, MemberId member) const;

private:
    const Corpus* corpus_;
    const InvertedIndex* index_;
    std::unordered_map<std::string, std::uint32_t> vocab_;
    std::vector<std::vector<std::uint32_t>> title_tokens_;    // sorted, unique
    std::vector<std::vector<std::uint32_t>> profile_tokens_;  // title plus listed-skill tokens
};

// 1 in the same cell, else 1 / (1 + ring distance).
double geo_proximity(std::uint32_t a, std::uint32_t b, std::uint32_t cells);

struct SimplexWeights {
    std::vector<double> lambda;

    std::size_t size() const { return lambda.size(); }
};

// lambda_i = w_i / sum(w). Throws DataError on negative, non-finite or
// all-zero input.
SimplexWeights to_simplex(std::span<const double> w);

double score(const SimplexWeights& weights, std::span<const double> features);

// Row order by score descending, member ascending.
std::vector<std::size_t> rank_order(std::span<const double> scores, std::span<const MemberId> members);

// Gain 2^g - 1, discount log2(i + 1). Zero when every grade is zero.
double ndcg_at_k(std::span<const int> ranked_grades, std::size_t k);

struct LabeledExample {
    std::uint64_t query_id = 0;
    MemberId searcher = 0;
    MemberId member = 0;
    RankingFeatures features;
    int grade = 0;  // 2 message, 1 click, 0 skip or easy negative
};

struct QueryGroup {
    std::uint64_t query_id = 0;
    MemberId searcher = 0;
    std::vector<SkillId> query_skills;
    std::vector<LabeledExample> rows;
};

struct TrainSet {
    std::vector<QueryGroup> groups;

    std::size_t feature_count() const;
    std::size_t row_count() const;
};

using GroupScorer = std::function<std::vector<double>(const QueryGroup&)>;

// Mean NDCG@k after re-ranking each group by the scorer.
double mean_ndcg(const TrainSet& set, const GroupScorer& scorer, std::size_t k);
double evaluate(const SimplexWeights& weights, const TrainSet& heldout, std::size_t k);

struct CoordinateAscentConfig {
    std::size_t k = 10;
    std::size_t restarts = 8;
    std::vector<double> multipliers{0.25, 0.5, 0.9, 1.1, 2.0, 4.0};
    // Absolute weights tried before renormalizing; lets a zero weight revive.
    std::vector<double> probes{0.0, 0.001, 0.01, 0.1};
    double tol = 1e-6;
    std::size_t max_cycles = 100;
    std::uint64_t seed = 1;
    std::vector<bool> active;  // empty: every feature; inactive ones stay at 0
};

struct CoordinateAscentResult {
    SimplexWeights weights;
    double objective = 0.0;
    std::size_t best_restart = 0;
    std::vector<double> trace;  // accepted-step objectives of the best restart
    std::vector<double> start_objectives;
    std::vector<double> restart_objectives;
};

CoordinateAscentResult coordinate_ascent(const TrainSet& train, const CoordinateAscentConfig& cfg);

Json model_to_json(const SimplexWeights& weights);
SimplexWeights model_from_json(const Json& j);
void save_model(const SimplexWeights& weights, const std::filesystem::path& path);
SimplexWeights load_model(const std::filesystem::path& path);

}  // namespace xrank
