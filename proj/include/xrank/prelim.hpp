#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xrank/features.hpp"

namespace xrank {

enum class PairSource : std::uint8_t {
    cohort_positive,
    random_skill_negative,
    mild_relevance_negative,
    spam_negative,
};

std::string_view to_string(PairSource s);

struct LabeledPair {
    MemberId member = 0;
    SkillId skill = 0;
    int label = 0;  // 1 expert, 0 non-expert
    PairSource source = PairSource::cohort_positive;
    std::vector<double> features;  // scaled, same map as E_o
};

struct PairConfig {
    double positive_threshold = 0.5;
    std::size_t max_positive_skills = 5;
    // Negative counts per positive, by source.
    double random_negative_ratio = 1.0;
    double mild_negative_ratio = 0.5;
    double spam_negative_ratio = 0.5;
    double spam_probability = 0.8;
    double train_fraction = 0.70;
    double test_fraction = 0.15;
    std::uint64_t seed = 7;
};

struct TrainingPairs {
    std::vector<LabeledPair> train;
    std::vector<LabeledPair> test;
    std::vector<LabeledPair> validation;
    std::vector<std::string> warnings;
};

TrainingPairs build_training_pairs(const Corpus& corpus, const ExpertiseTensor& tensor,
                                   const FeatureExtractor& extractor, const PairConfig& cfg);

struct LogRegModel {
    std::vector<double> weights;
    double bias = 0.0;
    double l2 = 0.0;

    double logit(std::span<const double> v) const;
    double score(std::span<const double> v) const;
};

// Mean log-loss plus (l2/2)*|w|^2 (bias unpenalized), and its gradient laid
// out as [dw..., db].
double logreg_loss(const std::vector<LabeledPair>& pairs, const LogRegModel& model);
std::vector<double> logreg_gradient(const std::vector<LabeledPair>& pairs, const LogRegModel& model);

struct LogRegFit {
    LogRegModel model;
    double test_auc = 0.0;
    std::vector<double> loss_trace;  // training objective after each epoch
};

// Full-batch gradient descent. Each step is capped by the curvature bound of
// its block (weights vs bias), so the objective never increases. Throws
// DataError if the training pairs hold a single class.
LogRegFit train_logreg(const std::vector<LabeledPair>& train, const std::vector<LabeledPair>& test, double l2,
                       double learning_rate = 1.0, std::size_t epochs = 300);

struct CalibrationPoint {
    double l2 = 0.0;
    std::size_t mix_index = 0;
    double test_auc = 0.0;
};

struct Calibration {
    PairConfig pair_config;
    LogRegFit fit;
    TrainingPairs pairs;
    std::vector<CalibrationPoint> table;
};

// Grid search over (l2, negative mix) on the test split.
Calibration calibrate_prelim(const Corpus& corpus, const ExpertiseTensor& tensor, const FeatureExtractor& extractor,
                             const std::vector<PairConfig>& mixes, const std::vector<double>& l2_grid,
                             double learning_rate = 1.0, std::size_t epochs = 300);

struct SparseEntry {
    MemberId member = 0;
    SkillId skill = 0;
    double score = 0.0;

    bool operator==(const SparseEntry&) const = default;
};

// E_i (and E_f, which shares the layout): entries sorted by (member, skill).
struct SparseExpertise {
    std::vector<SparseEntry> entries;

    std::size_t size() const { return entries.size(); }
    const SparseEntry* find(MemberId m, SkillId s) const;
};

SparseExpertise score_tensor(const LogRegModel& model, const ExpertiseTensor& tensor);

void save_sparse(const SparseExpertise& e, const std::filesystem::path& path);
SparseExpertise load_sparse(const std::filesystem::path& path);

Json to_json(const LogRegModel& model);
LogRegModel logreg_from_json(const Json& j);

}  // namespace xrank
