#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xrank/io.hpp"

namespace xrank {

using MemberId = std::uint32_t;
using SkillId = std::uint32_t;

enum class Cohort : std::uint8_t { influencer, very_senior, in_demand, strata, apache, spam, regular };

inline constexpr std::size_t kCohortCount = 7;
inline constexpr std::size_t kMaxExplicitSkills = 50;

std::string_view to_string(Cohort c);
Cohort cohort_from_string(std::string_view name);
// Cohorts whose members serve as expert seeds (everything but spam/regular).
bool is_expert_cohort(Cohort c);

struct Skill {
    SkillId id = 0;
    std::string name;

    bool operator==(const Skill&) const = default;
};

class SkillTaxonomy {
public:
    SkillTaxonomy() = default;
    SkillTaxonomy(std::vector<Skill> skills, std::vector<std::vector<SkillId>> groups);

    std::size_t size() const { return skills_.size(); }
    const std::vector<Skill>& skills() const { return skills_; }
    const std::vector<std::vector<SkillId>>& groups() const { return groups_; }
    const Skill& skill(SkillId id) const { return skills_.at(id); }
    // Indices into groups() that contain the skill.
    const std::vector<std::uint32_t>& groups_of(SkillId id) const { return membership_.at(id); }
    std::optional<SkillId> find(std::string_view name) const;
    // Name split on '_' (the query-side token set used by text features).
    std::vector<std::string> tokens(SkillId id) const;

    bool operator==(const SkillTaxonomy& o) const {
        return skills_ == o.skills_ && groups_ == o.groups_;
    }

private:
    std::vector<Skill> skills_;
    std::vector<std::vector<SkillId>> groups_;
    std::vector<std::vector<std::uint32_t>> membership_;
    std::unordered_map<std::string, SkillId> by_name_;
};

struct ExplicitSkill {
    SkillId skill = 0;
    double relevance = 0.0;

    bool operator==(const ExplicitSkill&) const = default;
};

struct MemberProfile {
    MemberId member_id = 0;
    std::vector<std::string> title_tokens;
    double seniority_years = 0.0;
    int authority_level = 0;
    std::uint32_t geo_cell = 0;
    std::vector<MemberId> connections;  // sorted, symmetric across the corpus
    std::vector<ExplicitSkill> explicit_skills;
    Cohort cohort = Cohort::regular;
    std::uint32_t inbound_contacts = 0;
    std::uint32_t content_engagement = 0;

    bool operator==(const MemberProfile&) const = default;
};

struct Endorsement {
    MemberId endorser = 0;
    MemberId endorsee = 0;
    SkillId skill = 0;

    bool operator==(const Endorsement&) const = default;
};

struct EndorsementGraph {
    std::vector<Endorsement> edges;

    bool operator==(const EndorsementGraph&) const = default;
};

struct Corpus {
    SkillTaxonomy taxonomy;
    std::vector<MemberProfile> members;
    EndorsementGraph endorsements;
    std::uint32_t geo_cells = 1;  // regions form a ring of this size

    std::size_t member_count() const { return members.size(); }
    std::size_t skill_count() const { return taxonomy.size(); }
    const MemberProfile& member(MemberId id) const { return members.at(id); }

    bool operator==(const Corpus&) const = default;
};

// Latent expertise planted by the generator. Skill group g is driven by
// latent dimension g, so a member's home group is the argmax of their row.
struct PlantedTruth {
    Matrix x_true;  // m x k_true
    Matrix y_true;  // s x k_true

    std::size_t k_true() const { return static_cast<std::size_t>(x_true.cols()); }
    double expertise(MemberId m, SkillId s) const { return x_true.row(m).dot(y_true.row(s)); }
    std::uint32_t home_group(MemberId m) const;
};

struct GenConfig {
    std::size_t m = 1000;
    std::size_t s = 60;
    std::size_t k_true = 4;
    std::uint64_t seed = 1;
    // Indexed by Cohort.
    std::array<double, kCohortCount> cohort_mix{0.03, 0.04, 0.05, 0.03, 0.03, 0.05, 0.77};
    double explicit_skill_rate = 0.6;
    double endorsement_rate = 2.0;
    std::uint32_t geo_cells = 16;
    double mean_connections = 12.0;

    // Throws ConfigError.
    void validate() const;
};

Json to_json(const GenConfig& cfg);
GenConfig gen_config_from_json(const Json& j);

struct GeneratedCorpus {
    Corpus corpus;
    PlantedTruth truth;
};

GeneratedCorpus generate_corpus(const GenConfig& cfg);

// members.jsonl, skills.jsonl, endorsements.jsonl under dir.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

void save_truth(const PlantedTruth& truth, const std::filesystem::path& path);
PlantedTruth load_truth(const std::filesystem::path& path);

}  // namespace xrank
