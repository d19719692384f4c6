#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xrank/eval.hpp"
#include "xrank/factorize.hpp"

namespace xrank {

enum class Stage {
    generate,
    features,
    prelim,
    factorize,
    build_index,
    simulate_logs,
    mine,
    train_ltr,
    evaluate,
    cohort_auc,
    ab,
};

const std::vector<Stage>& all_stages();
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

// Every artifact lives under work_dir under its fixed file name.
struct ArtifactPaths {
    std::filesystem::path work_dir = "artifacts";

    std::filesystem::path operator()(std::string_view name) const { return work_dir / name; }
    std::filesystem::path stamp(Stage s) const;
};

struct PrelimSettings {
    std::vector<double> l2_grid{1e-3, 1e-2, 1e-1};
    std::vector<PairConfig> mixes;  // empty: a single default mix
    double learning_rate = 1.0;
    std::size_t epochs = 300;
};

struct FactorizeSettings {
    FactorHyperParams hp;
    // Cross-validation grid; empty disables it and hp is used as given.
    std::vector<std::size_t> cv_k;
    std::vector<double> cv_lambda;
    double holdout_fraction = 0.2;
};

struct LogSettings {
    std::size_t searches = 6000;
    std::size_t page_size = 10;
    double examine_decay = 0.35;
    double two_skill_fraction = 0.3;
    ClickModel clicks;
    UserModelWeights user;
    EasyNegativeConfig easy_negatives;
};

struct LtrSettings {
    CoordinateAscentConfig ca;
    std::string preset = "homepage";
    double holdout_fraction = 0.2;
};

struct EvalSettings {
    CohortAucConfig cohort;
    std::size_t ab_searches = 5000;
    std::size_t bootstrap = 1000;
};

struct PipelineConfig {
    ArtifactPaths paths;
    std::uint64_t seed = 1;
    GenConfig gen;
    double threshold = 0.5;
    PrelimSettings prelim;
    FactorizeSettings factorize;
    RandomizationConfig randomization;
    LogSettings logs;
    LtrSettings ltr;
    EvalSettings eval;
    std::map<std::string, std::size_t> metric_k{{"homepage", 10}, {"recruiter", 25}};
    std::string host = "127.0.0.1";
    int port = 8080;
    Json source;  // the parsed document, used for stage digests

    std::size_t k_for(const std::string& preset) const;
    // Stage-specific seeds derived from the master seed.
    std::uint64_t stage_seed(Stage s) const;
    void validate() const;
};

// Throws ConfigError on unknown keys or invalid values.
PipelineConfig pipeline_config_from_json(const Json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = {});

// Hand-tuned weights without the expertise feature, standing in for the
// ranker that generated historical logs.
SimplexWeights legacy_weights();

struct Scored {
    MemberId member = 0;
    double score = 0.0;
    RankingFeatures features;
};

// Retrieval followed by linear scoring of every match; score descending,
// member ascending. The single ranking routine shared by offline stages and
// the service.
std::vector<Scored> rank_query(const RankingContext& context, const SimplexWeights& weights,
                               std::span<const SkillId> skills, MemberId searcher, MatchMode mode = MatchMode::all);

// Logging policy: weights ranking with the top-N hash rerank applied.
std::vector<MemberId> logged_ranking(const RankingContext& context, const SimplexWeights& weights,
                                     const RandomizationConfig& randomization, std::span<const SkillId> skills,
                                     MemberId searcher);

struct StageOutcome {
    bool skipped = false;  // inputs and outputs matched the previous stamp
    std::vector<std::filesystem::path> outputs;
};

// Runs one stage. Missing inputs raise MissingArtifact naming the first
// absent file. Outputs are written atomically and stamped with digests.
StageOutcome run_stage(Stage stage, const PipelineConfig& cfg);
void run_all(const PipelineConfig& cfg);

}  // namespace xrank
