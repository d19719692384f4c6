#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "xrank/ltr.hpp"

namespace xrank {

enum class Action : std::uint8_t { message, click, skip, unobserved };

std::string_view to_string(Action a);
Action action_from_string(std::string_view s);

struct SearchImpression {
    std::uint64_t query_id = 0;
    MemberId searcher = 0;
    std::vector<SkillId> query_skills;
    std::vector<MemberId> ranked;  // as shown
    std::vector<Action> actions;   // one per position

    bool operator==(const SearchImpression&) const = default;
};

struct RandomizationConfig {
    std::size_t top_n = 10;
    std::uint64_t salt = 0x9e3779b97f4a7c15ULL;

    void validate() const;
};

std::uint64_t splitmix64(std::uint64_t x);

// Reorders the first min(top_n, len) members ascending by
// splitmix64(member ^ salt); the rest is left in place.
std::vector<MemberId> rerank_top_n_hash(std::vector<MemberId> ranking, const RandomizationConfig& cfg);

// Examine probability per position (1-based index i at [i-1]); positions past
// the end are never examined.
struct ExamineCurve {
    std::vector<double> probs;

    static ExamineCurve harmonic(std::size_t positions, double decay = 0.35);
    void validate() const;
    double at(std::size_t index) const { return index < probs.size() ? probs[index] : 0.0; }
};

// P(act | examined) = sigmoid(u); P(message | act) = sigmoid(u - message_offset).
struct ClickModel {
    double message_offset = 2.0;

    double act_probability(double utility) const;
    double message_probability(double utility) const;
};

using UtilityFn = std::function<double(const SearchImpression&, MemberId)>;

// Cascade scan: position i is examined with probability probs[i] overall,
// each step conditioned on the previous one. Everything after the first
// unexamined position is unobserved.
SearchImpression simulate_session(SearchImpression impression, const UtilityFn& utility, const ExamineCurve& curve,
                                  const ClickModel& clicks, std::uint64_t seed);

// (1-based position, grade) for every position up to the last click or
// message; empty when there was no interaction.
std::vector<std::pair<std::size_t, int>> extract_labels(std::span<const Action> actions);
inline std::vector<std::pair<std::size_t, int>> extract_labels(const SearchImpression& s) {
    return extract_labels(s.actions);
}

// Uniform sample without replacement from the last tail_fraction of the
// ranking, never from the first top_n positions.
std::vector<MemberId> sample_easy_negatives(std::span<const MemberId> ranking, std::size_t count,
                                            double tail_fraction, std::size_t top_n, std::uint64_t seed);

struct EasyNegativeConfig {
    std::size_t count = 3;
    double tail_fraction = 0.2;
    std::size_t top_n = 10;
    std::uint64_t seed = 11;
};

using RankingFn = std::function<std::vector<MemberId>(const SearchImpression&)>;
using FeaturizeFn = std::function<RankingFeatures(const SearchImpression&, MemberId)>;

// One group per impression with at least one click or message: labeled
// prefix plus easy negatives drawn from the full retrieved ranking.
TrainSet mine_training_set(const std::vector<SearchImpression>& log, const EasyNegativeConfig& cfg,
                           const RankingFn& full_ranking, const FeaturizeFn& featurize);

void save_sessions(const std::vector<SearchImpression>& log, const std::filesystem::path& path);
std::vector<SearchImpression> load_sessions(const std::filesystem::path& path);

void save_train_set(const TrainSet& set, const std::filesystem::path& path);
TrainSet load_train_set(const std::filesystem::path& path);

}  // namespace xrank
