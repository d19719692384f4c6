#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xrank/factorize.hpp"

namespace xrank {

struct Posting {
    MemberId member = 0;
    std::int16_t payload = 0;

    bool operator==(const Posting&) const = default;
};

// Skill-term postings with fixed-point expertise payloads. Members are
// documents, skills are terms. Immutable once built or opened.
//
// File layout (little-endian):
//   "XIDX" | u32 version | f64 scale | u32 m | u32 s      (24 bytes)
//   u64 offset[s]            first posting index of each skill's list
//   { u32 member_id, i16 payload } * total
// List i spans [offset[i], offset[i+1]) with offset[s] implied by the total.
class InvertedIndex {
public:
    static constexpr std::uint32_t kVersion = 1;
    static constexpr std::size_t kHeaderBytes = 24;
    static constexpr std::size_t kPostingBytes = 6;
    static constexpr double kMaxPayload = 32767.0;

    // Throws DataError on NaN/Inf scores or ids outside m x s.
    static InvertedIndex build(const DenseExpertise& ef, std::size_t members, std::size_t skills);
    // Validates magic, version and the offsets table.
    static InvertedIndex deserialize(std::string_view bytes, const std::string& name = "index");

    std::string serialize() const;

    double scale() const { return scale_; }
    double quantization_eps() const { return 0.5 * scale_; }
    std::size_t member_count() const { return members_; }
    std::size_t skill_count() const { return offsets_.size(); }
    std::size_t posting_count() const { return postings_.size(); }

    std::span<const Posting> postings(SkillId s) const;
    double decode(std::int16_t payload) const { return payload * scale_; }
    std::optional<std::int16_t> lookup(SkillId s, MemberId m) const;

    bool operator==(const InvertedIndex&) const = default;

private:
    double scale_ = 1.0;
    std::size_t members_ = 0;
    std::vector<std::uint64_t> offsets_;
    std::vector<Posting> postings_;
};

void save_index(const InvertedIndex& index, const std::filesystem::path& path);
InvertedIndex open_index(const std::filesystem::path& path);

enum class MatchMode { all, any };

MatchMode match_mode_from_string(std::string_view s);
std::string_view to_string(MatchMode m);

struct Hit {
    MemberId member = 0;
    double score = 0.0;

    bool operator==(const Hit&) const = default;
};

struct RetrievalStats {
    std::size_t shortest_list = 0;
    std::size_t comparisons = 0;  // posting-id comparisons during intersection
};

// ALL intersects the lists (galloping from the shortest), ANY takes their
// union. Score is the sum of decoded payloads over matched skills. Sorted by
// score descending, member ascending. Throws DataError on an empty skill list
// or an unknown skill id.
std::vector<Hit> retrieve(const InvertedIndex& index, std::span<const SkillId> skills, MatchMode mode = MatchMode::all,
                          RetrievalStats* stats = nullptr);

}  // namespace xrank
