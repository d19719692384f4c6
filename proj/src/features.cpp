#include "xrank/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "xrank/error.hpp"

namespace xrank {

const std::array<std::string_view, kFeatureCount>& feature_names() {
    static const std::array<std::string_view, kFeatureCount> names{
        "seniority", "popularity_pagerank", "popularity_endorse_count", "influence",
        "authority", "desirability",        "relevance"};
    return names;
}

std::vector<double> pagerank(const EndorsementGraph& graph, std::size_t num_nodes, double damping,
                             int max_iters, double tol) {
    if (num_nodes == 0 || graph.edges.empty()) throw DataError("pagerank: empty graph");
    if (!(damping > 0.0 && damping < 1.0)) throw ConfigError("pagerank: damping must be in (0,1)");

    // Collapse parallel edges into weights, CSR by source.
    std::map<std::pair<MemberId, MemberId>, double> weights;
    for (const auto& e : graph.edges) {
        if (e.endorser >= num_nodes || e.endorsee >= num_nodes)
            throw DataError("pagerank: edge endpoint out of range");
        weights[{e.endorser, e.endorsee}] += 1.0;
    }
    std::vector<double> out_weight(num_nodes, 0.0);
    for (const auto& [key, w] : weights) out_weight[key.first] += w;

    const double n = static_cast<double>(num_nodes);
    std::vector<double> rank(num_nodes, 1.0 / n), next(num_nodes);
    for (int it = 0; it < max_iters; ++it) {
        double dangling = 0.0;
        for (std::size_t u = 0; u < num_nodes; ++u)
            if (out_weight[u] == 0.0) dangling += rank[u];
        std::fill(next.begin(), next.end(), (1.0 - damping) / n + damping * dangling / n);
        for (const auto& [key, w] : weights)
            next[key.second] += damping * rank[key.first] * w / out_weight[key.first];

        double total = 0.0;
        for (double v : next) total += v;
        double delta = 0.0;
        for (std::size_t u = 0; u < num_nodes; ++u) {
            next[u] /= total;
            delta += std::abs(next[u] - rank[u]);
        }
        rank.swap(next);
        if (delta < tol) break;
    }
    return rank;
}

void FeatureScaler::apply(std::vector<double>& values) const {
    if (values.size() != mean.size()) throw DataError("feature dimension mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = (values[i] - mean[i]) / stddev[i];
}

FeatureExtractor::FeatureExtractor(const Corpus& corpus)
    : corpus_(&corpus), endorse_counts_(corpus.member_count()) {
    if (!corpus.endorsements.edges.empty())
        pagerank_ = pagerank(corpus.endorsements, corpus.member_count());
    else
        pagerank_.assign(corpus.member_count(), 1.0 / static_cast<double>(corpus.member_count()));

    std::map<std::pair<MemberId, SkillId>, std::uint32_t> counts;
    for (const auto& e : corpus.endorsements.edges) ++counts[{e.endorsee, e.skill}];
    for (const auto& [key, c] : counts) endorse_counts_[key.first].emplace_back(key.second, c);
}

std::optional<double> FeatureExtractor::relevance(MemberId m, SkillId s) const {
    for (const auto& es : corpus_->member(m).explicit_skills)
        if (es.skill == s) return es.relevance;
    return std::nullopt;
}

std::uint32_t FeatureExtractor::endorsement_count(MemberId m, SkillId s) const {
    const auto& row = endorse_counts_.at(m);
    auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(s, std::uint32_t{0}));
    return it != row.end() && it->first == s ? it->second : 0;
}

std::vector<double> FeatureExtractor::raw(MemberId m, SkillId s) const {
    const auto& p = corpus_->member(m);
    const double n = static_cast<double>(corpus_->member_count());
    std::vector<double> v(kFeatureCount);
    v[static_cast<std::size_t>(FeatureId::seniority)] = p.seniority_years;
    v[static_cast<std::size_t>(FeatureId::popularity_pagerank)] = std::log(pagerank_[m] * n);
    v[static_cast<std::size_t>(FeatureId::popularity_endorse_count)] = std::log1p(endorsement_count(m, s));
    v[static_cast<std::size_t>(FeatureId::influence)] = std::log1p(p.content_engagement);
    v[static_cast<std::size_t>(FeatureId::authority)] = p.authority_level;
    v[static_cast<std::size_t>(FeatureId::desirability)] = std::log1p(p.inbound_contacts);
    v[static_cast<std::size_t>(FeatureId::relevance)] = relevance(m, s).value_or(0.0);
    return v;
}

const TensorEntry* ExpertiseTensor::find(MemberId m, SkillId s) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), std::make_pair(m, s),
                               [](const TensorEntry& e, const std::pair<MemberId, SkillId>& key) {
                                   return std::make_pair(e.member, e.skill) < key;
                               });
    return it != entries.end() && it->member == m && it->skill == s ? &*it : nullptr;
}

ExpertiseTensor compute_features(const Corpus& corpus, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("relevance threshold must be in [0,1]");
    FeatureExtractor extractor(corpus);
    ExpertiseTensor tensor;
    for (const auto& p : corpus.members) {
        auto skills = p.explicit_skills;
        std::sort(skills.begin(), skills.end(),
                  [](const ExplicitSkill& a, const ExplicitSkill& b) { return a.skill < b.skill; });
        for (const auto& es : skills)
            if (es.relevance >= threshold)
                tensor.entries.push_back({p.member_id, es.skill, extractor.raw(p.member_id, es.skill)});
    }

    // Population moments, so the emitted columns have exactly unit variance.
    const std::size_t f = kFeatureCount;
    tensor.scaler.mean.assign(f, 0.0);
    tensor.scaler.stddev.assign(f, 1.0);
    const double n = static_cast<double>(tensor.entries.size());
    if (tensor.entries.empty()) return tensor;
    for (std::size_t i = 0; i < f; ++i) {
        double sum = 0.0;
        for (const auto& e : tensor.entries) sum += e.values[i];
        const double mu = sum / n;
        double ss = 0.0;
        for (const auto& e : tensor.entries) ss += (e.values[i] - mu) * (e.values[i] - mu);
        const double sd = std::sqrt(ss / n);
        tensor.scaler.mean[i] = mu;
        tensor.scaler.stddev[i] = sd > 1e-12 ? sd : 1.0;
    }
    for (auto& e : tensor.entries) tensor.scaler.apply(e.values);
    return tensor;
}

std::vector<double> featurize(const FeatureExtractor& extractor, const FeatureScaler& scaler, MemberId m,
                              SkillId s) {
    auto v = extractor.raw(m, s);
    scaler.apply(v);
    return v;
}

void save_tensor(const ExpertiseTensor& tensor, const std::filesystem::path& tensor_path,
                 const std::filesystem::path& scaler_path) {
    std::string out;
    for (const auto& e : tensor.entries) {
        out += Json{{"member", e.member}, {"skill", e.skill}, {"values", e.values}}.dump();
        out += '\n';
    }
    io::atomic_write(tensor_path, out);
    Json names = Json::array();
    for (auto n : feature_names()) names.push_back(std::string(n));
    io::atomic_write(scaler_path,
                     Json{{"feature_names", names}, {"mean", tensor.scaler.mean}, {"stddev", tensor.scaler.stddev}}
                         .dump(2));
}

ExpertiseTensor load_tensor(const std::filesystem::path& tensor_path, const std::filesystem::path& scaler_path) {
    ExpertiseTensor tensor;
    Json scaler;
    try {
        scaler = Json::parse(io::read_file(scaler_path));
        tensor.scaler.mean = scaler.at("mean").get<std::vector<double>>();
        tensor.scaler.stddev = scaler.at("stddev").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw DataError(scaler_path.string() + ": " + e.what());
    }
    tensor.dim = tensor.scaler.dim();
    io::for_each_jsonl(tensor_path, [&](std::size_t line, const Json& j) {
        TensorEntry e{j.at("member").get<MemberId>(), j.at("skill").get<SkillId>(),
                      j.at("values").get<std::vector<double>>()};
        if (e.values.size() != tensor.dim) throw ParseError(tensor_path.string(), line, "feature dimension mismatch");
        if (!tensor.entries.empty() && std::make_pair(tensor.entries.back().member, tensor.entries.back().skill) >=
                                           std::make_pair(e.member, e.skill))
            throw ParseError(tensor_path.string(), line, "entries must be sorted by (member, skill)");
        tensor.entries.push_back(std::move(e));
    });
    return tensor;
}

}  // namespace xrank
