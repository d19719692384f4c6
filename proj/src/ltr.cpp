#include "xrank/ltr.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include "xrank/error.hpp"

namespace xrank {

const std::array<std::string_view, kRankingFeatureCount>& ranking_feature_names() {
    static const std::array<std::string_view, kRankingFeatureCount> names{
        "expertise_sum",           "text_title_match",          "text_profile_match", "geo_proximity",
        "social_common_connections", "social_graph_distance_inv", "spam_free",
    };
    return names;
}

namespace {

template <class T>
std::vector<T> sorted_unique(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

template <class T>
std::size_t common_count(const std::vector<T>& a, const std::vector<T>& b) {
    std::size_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j)
            ++i;
        else if (*j < *i)
            ++j;
        else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

}  // namespace

RankingContext::RankingContext(const Corpus& corpus, const InvertedIndex& index) : corpus_(&corpus), index_(&index) {
    if (index.member_count() != corpus.member_count() || index.skill_count() != corpus.skill_count())
        throw DataError("ranking context: index shape does not match the corpus");
    auto intern = [&](const std::vector<std::string>& words) {
        std::vector<std::uint32_t> ids;
        for (const auto& w : words)
            ids.push_back(vocab_.try_emplace(w, static_cast<std::uint32_t>(vocab_.size())).first->second);
        return ids;
    };
    std::vector<std::vector<std::uint32_t>> skill_tokens;
    for (SkillId s = 0; s < corpus.skill_count(); ++s) skill_tokens.push_back(intern(corpus.taxonomy.tokens(s)));
    title_tokens_.reserve(corpus.member_count());
    profile_tokens_.reserve(corpus.member_count());
    for (const auto& p : corpus.members) {
        auto title = intern(p.title_tokens);
        auto profile = title;
        for (const auto& e : p.explicit_skills)
            profile.insert(profile.end(), skill_tokens[e.skill].begin(), skill_tokens[e.skill].end());
        title_tokens_.push_back(sorted_unique(std::move(title)));
        profile_tokens_.push_back(sorted_unique(std::move(profile)));
    }
}

SearcherView RankingContext::view(MemberId searcher) const {
    if (searcher >= corpus_->member_count()) throw DataError("unknown searcher id " + std::to_string(searcher));
    SearcherView v;
    v.searcher = searcher;
    v.hops.assign(corpus_->member_count(), static_cast<std::uint8_t>(kMaxHops + 1));
    v.hops[searcher] = 0;
    std::deque<MemberId> frontier{searcher};
    while (!frontier.empty()) {
        const MemberId u = frontier.front();
        frontier.pop_front();
        if (v.hops[u] == kMaxHops) continue;
        for (MemberId w : corpus_->members[u].connections) {
            if (v.hops[w] <= kMaxHops) continue;
            v.hops[w] = static_cast<std::uint8_t>(v.hops[u] + 1);
            frontier.push_back(w);
        }
    }
    return v;
}

double geo_proximity(std::uint32_t a, std::uint32_t b, std::uint32_t cells) {
    if (a == b) return 1.0;
    const std::uint32_t diff = a > b ? a - b : b - a;
    const std::uint32_t d = cells > 0 ? std::min(diff, cells - diff) : diff;
    return 1.0 / (1.0 + d);
}

QueryContext RankingContext::prepare(std::span<const SkillId> query, MemberId searcher) const {
    QueryContext q;
    q.skills.assign(query.begin(), query.end());
    std::vector<std::string> words;
    for (SkillId s : query) {
        if (s >= corpus_->skill_count()) throw DataError("unknown skill id " + std::to_string(s));
        auto t = corpus_->taxonomy.tokens(s);
        words.insert(words.end(), t.begin(), t.end());
    }
    words = sorted_unique(std::move(words));
    q.token_count = words.size();
    for (const auto& w : words)
        if (auto it = vocab_.find(w); it != vocab_.end()) q.tokens.push_back(it->second);
    std::sort(q.tokens.begin(), q.tokens.end());
    q.searcher = view(searcher);
    return q;
}

RankingFeatures RankingContext::compute(const QueryContext& q, MemberId member, double expertise_sum) const {
    if (member >= corpus_->member_count()) throw DataError("unknown member id " + std::to_string(member));
    const auto& sp = corpus_->members[q.searcher.searcher];
    const auto& mp = corpus_->members[member];
    RankingFeatures f(kRankingFeatureCount, 0.0);
    f[0] = expertise_sum;
    if (q.token_count > 0) {
        f[1] = static_cast<double>(common_count(q.tokens, title_tokens_[member])) / q.token_count;
        f[2] = static_cast<double>(common_count(q.tokens, profile_tokens_[member])) / q.token_count;
    }
    f[3] = geo_proximity(sp.geo_cell, mp.geo_cell, corpus_->geo_cells);
    if (!sp.connections.empty() && !mp.connections.empty())
        f[4] = common_count(sp.connections, mp.connections) /
               std::sqrt(static_cast<double>(sp.connections.size()) * mp.connections.size());
    const auto h = q.searcher.hops[member];
    f[5] = h == 0 ? 1.0 : (h <= kMaxHops ? 1.0 / h : 0.0);
    f[6] = mp.cohort == Cohort::spam ? 0.0 : 1.0;
    return f;
}

double RankingContext::expertise_sum(std::span<const SkillId> query, MemberId member) const {
    std::int64_t sum = 0;
    for (SkillId s : query)
        if (auto p = index_->lookup(s, member)) sum += *p;
    return static_cast<double>(sum) * index_->scale();
}

RankingFeatures RankingContext::compute(std::span<const SkillId> query, MemberId searcher, MemberId member) const {
    return compute(prepare(query, searcher), member, expertise_sum(query, member));
}

SimplexWeights to_simplex(std::span<const double> w) {
    double total = 0.0;
    for (double v : w) {
        if (!std::isfinite(v) || v < 0.0) throw DataError("to_simplex: weights must be finite and non-negative");
        total += v;
    }
    if (!(total > 0.0)) throw DataError("to_simplex: all-zero weights");
    SimplexWeights out;
    out.lambda.reserve(w.size());
    for (double v : w) out.lambda.push_back(v / total);
    return out;
}

double score(const SimplexWeights& weights, std::span<const double> features) {
    if (weights.size() != features.size())
        throw DataError("score: " + std::to_string(features.size()) + " features for " +
                        std::to_string(weights.size()) + " weights");
    double s = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) s += weights.lambda[i] * features[i];
    return s;
}

std::vector<std::size_t> rank_order(std::span<const double> scores, std::span<const MemberId> members) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : members[a] < members[b];
    });
    return order;
}

namespace {

double dcg(std::span<const int> grades, std::size_t k) {
    double d = 0.0;
    for (std::size_t i = 0; i < std::min(k, grades.size()); ++i)
        d += (std::exp2(grades[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    return d;
}

double ideal_dcg(std::vector<int> grades, std::size_t k) {
    std::sort(grades.begin(), grades.end(), std::greater<>());
    return dcg(grades, k);
}

// A group flattened for repeated scoring.
struct PreparedGroup {
    std::size_t rows = 0;
    std::vector<double> features;  // rows x dim
    std::vector<int> grades;
    std::vector<MemberId> members;
    double idcg = 0.0;
};

std::vector<PreparedGroup> prepare(const TrainSet& set, std::size_t dim, std::size_t k) {
    std::vector<PreparedGroup> out;
    out.reserve(set.groups.size());
    for (const auto& g : set.groups) {
        if (g.rows.empty()) throw DataError("query group " + std::to_string(g.query_id) + " has no rows");
        PreparedGroup p;
        p.rows = g.rows.size();
        for (const auto& r : g.rows) {
            if (r.features.size() != dim) throw DataError("inconsistent feature dimension in training rows");
            p.features.insert(p.features.end(), r.features.begin(), r.features.end());
            p.grades.push_back(r.grade);
            p.members.push_back(r.member);
        }
        p.idcg = ideal_dcg(p.grades, k);
        out.push_back(std::move(p));
    }
    return out;
}

double group_ndcg(const PreparedGroup& g, const std::vector<double>& lambda, std::size_t k,
                  std::vector<double>& scores, std::vector<int>& ranked) {
    if (g.idcg <= 0.0) return 0.0;
    const std::size_t dim = lambda.size();
    scores.assign(g.rows, 0.0);
    for (std::size_t r = 0; r < g.rows; ++r) {
        double s = 0.0;
        const double* f = &g.features[r * dim];
        for (std::size_t j = 0; j < dim; ++j) s += lambda[j] * f[j];
        scores[r] = s;
    }
    const auto order = rank_order(scores, g.members);
    ranked.resize(g.rows);
    for (std::size_t i = 0; i < g.rows; ++i) ranked[i] = g.grades[order[i]];
    return dcg(ranked, k) / g.idcg;
}

double mean_objective(const std::vector<PreparedGroup>& groups, const std::vector<double>& lambda, std::size_t k) {
    std::vector<double> scores;
    std::vector<int> ranked;
    double total = 0.0;
    for (const auto& g : groups) total += group_ndcg(g, lambda, k, scores, ranked);
    return total / static_cast<double>(groups.size());
}

}  // namespace

double ndcg_at_k(std::span<const int> ranked_grades, std::size_t k) {
    if (k == 0) throw DataError("ndcg_at_k: K must be at least 1");
    const double ideal = ideal_dcg({ranked_grades.begin(), ranked_grades.end()}, k);
    return ideal > 0.0 ? dcg(ranked_grades, k) / ideal : 0.0;
}

std::size_t TrainSet::feature_count() const {
    for (const auto& g : groups)
        if (!g.rows.empty()) return g.rows.front().features.size();
    return 0;
}

std::size_t TrainSet::row_count() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.rows.size();
    return n;
}

double mean_ndcg(const TrainSet& set, const GroupScorer& scorer, std::size_t k) {
    if (set.groups.empty()) throw DataError("mean_ndcg: empty evaluation set");
    double total = 0.0;
    for (const auto& g : set.groups) {
        const auto scores = scorer(g);
        if (scores.size() != g.rows.size()) throw DataError("mean_ndcg: scorer returned a wrong-sized vector");
        std::vector<MemberId> members;
        for (const auto& r : g.rows) members.push_back(r.member);
        const auto order = rank_order(scores, members);
        std::vector<int> ranked;
        for (auto i : order) ranked.push_back(g.rows[i].grade);
        total += ndcg_at_k(ranked, k);
    }
    return total / static_cast<double>(set.groups.size());
}

double evaluate(const SimplexWeights& weights, const TrainSet& heldout, std::size_t k) {
    return mean_ndcg(
        heldout,
        [&](const QueryGroup& g) {
            std::vector<double> s;
            s.reserve(g.rows.size());
            for (const auto& r : g.rows) s.push_back(score(weights, r.features));
            return s;
        },
        k);
}

CoordinateAscentResult coordinate_ascent(const TrainSet& train, const CoordinateAscentConfig& cfg) {
    if (train.groups.empty()) throw DataError("coordinate_ascent: empty training set");
    if (cfg.restarts == 0) throw ConfigError("coordinate_ascent: restarts must be at least 1");
    if (cfg.k == 0) throw ConfigError("coordinate_ascent: K must be at least 1");
    const std::size_t dim = train.feature_count();
    if (dim == 0) throw DataError("coordinate_ascent: training rows have no features");
    std::vector<bool> active = cfg.active.empty() ? std::vector<bool>(dim, true) : cfg.active;
    if (active.size() != dim) throw ConfigError("coordinate_ascent: feature mask has the wrong length");
    if (std::none_of(active.begin(), active.end(), [](bool b) { return b; }))
        throw ConfigError("coordinate_ascent: every feature is masked out");

    const auto groups = prepare(train, dim, cfg.k);
    CoordinateAscentResult best;
    std::mt19937_64 rng(cfg.seed);
    std::exponential_distribution<double> expo(1.0);

    for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
        std::vector<double> w(dim, 0.0);
        for (std::size_t j = 0; j < dim; ++j)
            if (active[j]) w[j] = expo(rng);
        auto lambda = to_simplex(w).lambda;
        double current = mean_objective(groups, lambda, cfg.k);
        std::vector<double> trace{current};
        best.start_objectives.push_back(current);

        for (std::size_t cycle = 0; cycle < cfg.max_cycles; ++cycle) {
            const double cycle_start = current;
            for (std::size_t j = 0; j < dim; ++j) {
                if (!active[j] || dim == 1) continue;
                std::vector<double> candidates;
                for (double f : cfg.multipliers) candidates.push_back(lambda[j] * f);
                candidates.insert(candidates.end(), cfg.probes.begin(), cfg.probes.end());
                std::vector<double> chosen;
                double chosen_obj = current;
                for (double v : candidates) {
                    auto trial = lambda;
                    trial[j] = v;
                    double total = 0.0;
                    for (double t : trial) total += t;
                    if (!(total > 0.0)) continue;
                    trial = to_simplex(trial).lambda;
                    const double obj = mean_objective(groups, trial, cfg.k);
                    if (obj > chosen_obj + cfg.tol) {
                        chosen_obj = obj;
                        chosen = std::move(trial);
                    }
                }
                if (!chosen.empty()) {
                    lambda = std::move(chosen);
                    current = chosen_obj;
                    trace.push_back(current);
                }
            }
            if (current <= cycle_start + cfg.tol) break;
        }
        best.restart_objectives.push_back(current);
        if (restart == 0 || current > best.objective) {
            best.objective = current;
            best.best_restart = restart;
            best.weights.lambda = lambda;
            best.trace = std::move(trace);
        }
    }
    return best;
}

Json model_to_json(const SimplexWeights& weights) {
    Json names = Json::array();
    const auto& known = ranking_feature_names();
    for (std::size_t i = 0; i < weights.size(); ++i)
        names.push_back(weights.size() == known.size() ? std::string(known[i]) : "f" + std::to_string(i));
    return Json{{"feature_names", names}, {"lambda", weights.lambda}};
}

SimplexWeights model_from_json(const Json& j) {
    try {
        SimplexWeights w;
        w.lambda = j.at("lambda").get<std::vector<double>>();
        const auto names = j.at("feature_names").get<std::vector<std::string>>();
        if (names.size() != w.lambda.size()) throw DataError("ltr model: feature_names and lambda differ in length");
        double total = 0.0;
        for (double v : w.lambda) {
            if (!std::isfinite(v) || v < 0.0) throw DataError("ltr model: lambda outside the simplex");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) throw DataError("ltr model: lambda does not sum to 1");
        return w;
    } catch (const Json::exception& e) {
        throw DataError(std::string("ltr model: ") + e.what());
    }
}

void save_model(const SimplexWeights& weights, const std::filesystem::path& path) {
    io::atomic_write(path, model_to_json(weights).dump(2) + "\n");
}

SimplexWeights load_model(const std::filesystem::path& path) {
    const auto text = io::read_file(path);
    try {
        return model_from_json(Json::parse(text));
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

}  // namespace xrank
