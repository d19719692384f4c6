#include "xrank/index.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "xrank/error.hpp"

namespace xrank {

InvertedIndex InvertedIndex::build(const DenseExpertise& ef, std::size_t members, std::size_t skills) {
    if (ef.entries.empty()) throw DataError("build_index: empty expertise matrix");
    double max_abs = 0.0;
    for (const auto& e : ef.entries) {
        if (!std::isfinite(e.score)) throw DataError("build_index: non-finite expertise score");
        if (e.member >= members || e.skill >= skills) throw DataError("build_index: entry outside m x s");
        max_abs = std::max(max_abs, std::abs(e.score));
    }

    InvertedIndex idx;
    idx.members_ = members;
    idx.scale_ = max_abs > 0.0 ? max_abs / kMaxPayload : 1.0;

    std::vector<std::vector<Posting>> lists(skills);
    for (const auto& e : ef.entries) {
        const double q = std::round(e.score / idx.scale_);
        if (std::abs(q) > kMaxPayload) throw DataError("build_index: payload overflow");
        lists[e.skill].push_back({e.member, static_cast<std::int16_t>(q)});
    }
    idx.offsets_.reserve(skills);
    for (auto& list : lists) {
        std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.member < b.member; });
        for (std::size_t i = 1; i < list.size(); ++i)
            if (list[i].member == list[i - 1].member) throw DataError("build_index: duplicate (member, skill) pair");
        idx.offsets_.push_back(idx.postings_.size());
        idx.postings_.insert(idx.postings_.end(), list.begin(), list.end());
    }
    return idx;
}

std::string InvertedIndex::serialize() const {
    std::string out;
    out.reserve(kHeaderBytes + 8 * offsets_.size() + kPostingBytes * postings_.size());
    out.append("XIDX", 4);
    io::put_u32(out, kVersion);
    io::put_f64(out, scale_);
    io::put_u32(out, static_cast<std::uint32_t>(members_));
    io::put_u32(out, static_cast<std::uint32_t>(offsets_.size()));
    for (auto o : offsets_) io::put_u64(out, o);
    for (const auto& p : postings_) {
        io::put_u32(out, p.member);
        io::put_i16(out, p.payload);
    }
    return out;
}

InvertedIndex InvertedIndex::deserialize(std::string_view bytes, const std::string& name) {
    if (bytes.size() < kHeaderBytes) throw DataError(name + ": truncated index header");
    if (bytes.substr(0, 4) != "XIDX") throw DataError(name + ": bad index magic");
    if (io::get_u32(bytes, 4) != kVersion) throw DataError(name + ": unsupported index version");
    InvertedIndex idx;
    idx.scale_ = io::get_f64(bytes, 8);
    idx.members_ = io::get_u32(bytes, 16);
    const std::size_t skills = io::get_u32(bytes, 20);
    if (!(std::isfinite(idx.scale_) && idx.scale_ > 0.0)) throw DataError(name + ": invalid payload scale");

    const std::size_t table_end = kHeaderBytes + 8 * skills;
    if (bytes.size() < table_end) throw DataError(name + ": truncated offsets table");
    const std::size_t body = bytes.size() - table_end;
    if (body % kPostingBytes != 0) throw DataError(name + ": postings section has a partial record");
    const std::uint64_t total = body / kPostingBytes;

    idx.offsets_.resize(skills);
    std::uint64_t prev = 0;
    for (std::size_t i = 0; i < skills; ++i) {
        const auto o = io::get_u64(bytes, kHeaderBytes + 8 * i);
        if (o < prev || o > total || (i == 0 && o != 0)) throw DataError(name + ": corrupted offsets table");
        idx.offsets_[i] = prev = o;
    }
    if (skills == 0 && total != 0) throw DataError(name + ": postings without an offsets table");

    idx.postings_.resize(total);
    for (std::uint64_t i = 0; i < total; ++i) {
        const std::size_t pos = table_end + kPostingBytes * i;
        idx.postings_[i] = {io::get_u32(bytes, pos), io::get_i16(bytes, pos + 4)};
        if (idx.postings_[i].member >= idx.members_) throw DataError(name + ": posting references unknown member");
    }
    for (std::size_t s = 0; s < skills; ++s) {
        const auto list = idx.postings(static_cast<SkillId>(s));
        for (std::size_t i = 1; i < list.size(); ++i)
            if (list[i].member <= list[i - 1].member) throw DataError(name + ": postings list out of order");
    }
    return idx;
}

std::span<const Posting> InvertedIndex::postings(SkillId s) const {
    if (s >= offsets_.size()) throw DataError("unknown skill id " + std::to_string(s));
    const auto begin = offsets_[s];
    const auto end = s + 1 < offsets_.size() ? offsets_[s + 1] : postings_.size();
    return {postings_.data() + begin, static_cast<std::size_t>(end - begin)};
}

std::optional<std::int16_t> InvertedIndex::lookup(SkillId s, MemberId m) const {
    const auto list = postings(s);
    auto it = std::lower_bound(list.begin(), list.end(), m,
                               [](const Posting& p, MemberId id) { return p.member < id; });
    if (it == list.end() || it->member != m) return std::nullopt;
    return it->payload;
}

void save_index(const InvertedIndex& index, const std::filesystem::path& path) {
    io::atomic_write(path, index.serialize());
}

InvertedIndex open_index(const std::filesystem::path& path) {
    return InvertedIndex::deserialize(io::read_file(path), path.string());
}

MatchMode match_mode_from_string(std::string_view s) {
    if (s == "ALL" || s == "all") return MatchMode::all;
    if (s == "ANY" || s == "any") return MatchMode::any;
    throw DataError("unknown match mode: " + std::string(s));
}

std::string_view to_string(MatchMode m) { return m == MatchMode::all ? "ALL" : "ANY"; }

namespace {

// Smallest index >= from whose member is >= target, by exponential then
// binary search. Counts comparisons.
std::size_t gallop(std::span<const Posting> list, std::size_t from, MemberId target, std::size_t& comparisons) {
    std::size_t step = 1, lo = from, hi = from;
    while (hi < list.size()) {
        ++comparisons;
        if (list[hi].member >= target) break;
        lo = hi + 1;
        hi = from + step;
        step <<= 1;
    }
    hi = std::min(hi, list.size());
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        ++comparisons;
        if (list[mid].member < target)
            lo = mid + 1;
        else
            hi = mid;
    }
    return lo;
}

void sort_hits(std::vector<Hit>& hits) {
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        return a.score != b.score ? a.score > b.score : a.member < b.member;
    });
}

}  // namespace

std::vector<Hit> retrieve(const InvertedIndex& index, std::span<const SkillId> skills, MatchMode mode,
                          RetrievalStats* stats) {
    if (skills.empty()) throw DataError("retrieve: empty skill list");
    std::vector<std::span<const Posting>> lists;
    for (SkillId s : skills) lists.push_back(index.postings(s));

    std::vector<Hit> hits;
    RetrievalStats local;
    if (mode == MatchMode::all) {
        std::vector<std::size_t> order(lists.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return lists[a].size() < lists[b].size(); });
        const auto shortest = lists[order[0]];
        local.shortest_list = shortest.size();
        std::vector<std::size_t> cursor(lists.size(), 0);
        for (const auto& p : shortest) {
            std::int64_t sum = p.payload;
            bool matched = true;
            for (std::size_t oi = 1; oi < order.size(); ++oi) {
                const auto& list = lists[order[oi]];
                auto& c = cursor[order[oi]];
                c = gallop(list, c, p.member, local.comparisons);
                if (c == list.size()) {
                    matched = false;
                    break;
                }
                ++local.comparisons;
                if (list[c].member != p.member) {
                    matched = false;
                    break;
                }
                sum += list[c].payload;
            }
            if (matched) hits.push_back({p.member, static_cast<double>(sum) * index.scale()});
            if (!matched && std::any_of(order.begin() + 1, order.end(),
                                        [&](std::size_t i) { return cursor[i] == lists[i].size(); }))
                break;
        }
    } else {
        std::map<MemberId, std::int64_t> sums;
        for (const auto& list : lists)
            for (const auto& p : list) sums[p.member] += p.payload;
        hits.reserve(sums.size());
        for (const auto& [m, sum] : sums) hits.push_back({m, static_cast<double>(sum) * index.scale()});
    }
    sort_hits(hits);
    if (stats) *stats = local;
    return hits;
}

}  // namespace xrank
