#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "xrank/corpus.hpp"

namespace xrank {

enum class FeatureId : std::size_t {
    seniority,
    popularity_pagerank,
    popularity_endorse_count,
    influence,
    authority,
    desirability,
    relevance,
};

inline constexpr std::size_t kFeatureCount = 7;
const std::array<std::string_view, kFeatureCount>& feature_names();

// Power iteration over endorser -> endorsee edges (parallel edges add weight).
// Dangling mass and teleport are spread uniformly. Throws DataError when the
// graph has no nodes or no edges.
std::vector<double> pagerank(const EndorsementGraph& graph, std::size_t num_nodes, double damping = 0.85,
                             int max_iters = 100, double tol = 1e-12);

struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t dim() const { return mean.size(); }
    void apply(std::vector<double>& values) const;
};

// Raw (unscaled) per-pair attributes; usable on any (member, skill) pair,
// listed or not, so that negatives built later share the same feature map.
class FeatureExtractor {
public:
    explicit FeatureExtractor(const Corpus& corpus);

    std::vector<double> raw(MemberId m, SkillId s) const;
    // Relevance of s on m's profile, or nullopt when not listed.
    std::optional<double> relevance(MemberId m, SkillId s) const;
    const std::vector<double>& pagerank_scores() const { return pagerank_; }
    std::uint32_t endorsement_count(MemberId m, SkillId s) const;

private:
    const Corpus* corpus_;
    std::vector<double> pagerank_;
    std::vector<std::vector<std::pair<SkillId, std::uint32_t>>> endorse_counts_;  // sorted by skill
};

struct TensorEntry {
    MemberId member = 0;
    SkillId skill = 0;
    std::vector<double> values;

    bool operator==(const TensorEntry&) const = default;
};

// E_o: one scaled feature vector per listed pair above the relevance threshold.
struct ExpertiseTensor {
    std::size_t dim = kFeatureCount;
    std::vector<TensorEntry> entries;  // sorted by (member, skill)
    FeatureScaler scaler;

    const TensorEntry* find(MemberId m, SkillId s) const;
};

ExpertiseTensor compute_features(const Corpus& corpus, double threshold = 0.5);

// Scaled vector for an arbitrary pair using the tensor's fitted scaler.
std::vector<double> featurize(const FeatureExtractor& extractor, const FeatureScaler& scaler, MemberId m,
                              SkillId s);

void save_tensor(const ExpertiseTensor& tensor, const std::filesystem::path& tensor_path,
                 const std::filesystem::path& scaler_path);
ExpertiseTensor load_tensor(const std::filesystem::path& tensor_path, const std::filesystem::path& scaler_path);

}  // namespace xrank
