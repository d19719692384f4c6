#include "xrank/logs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "xrank/error.hpp"

namespace xrank {

std::string_view to_string(Action a) {
    switch (a) {
        case Action::message: return "message";
        case Action::click: return "click";
        case Action::skip: return "skip";
        case Action::unobserved: return "unobserved";
    }
    return "unobserved";
}

Action action_from_string(std::string_view s) {
    if (s == "message") return Action::message;
    if (s == "click") return Action::click;
    if (s == "skip") return Action::skip;
    if (s == "unobserved") return Action::unobserved;
    throw DataError("unknown action: " + std::string(s));
}

void RandomizationConfig::validate() const {
    if (top_n < 1) throw ConfigError("randomization.top_n must be at least 1");
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<MemberId> rerank_top_n_hash(std::vector<MemberId> ranking, const RandomizationConfig& cfg) {
    cfg.validate();
    const auto n = std::min(cfg.top_n, ranking.size());
    std::stable_sort(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(n),
                     [&](MemberId a, MemberId b) { return splitmix64(a ^ cfg.salt) < splitmix64(b ^ cfg.salt); });
    return ranking;
}

ExamineCurve ExamineCurve::harmonic(std::size_t positions, double decay) {
    ExamineCurve c;
    for (std::size_t i = 0; i < positions; ++i) c.probs.push_back(1.0 / (1.0 + decay * static_cast<double>(i)));
    return c;
}

void ExamineCurve::validate() const {
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw ConfigError("examine probabilities must lie in [0, 1]");
        if (i > 0 && probs[i] > probs[i - 1]) throw ConfigError("examine probabilities must be non-increasing");
    }
}

namespace {
double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }
}  // namespace

double ClickModel::act_probability(double utility) const { return sigmoid(utility); }
double ClickModel::message_probability(double utility) const { return sigmoid(utility - message_offset); }

SearchImpression simulate_session(SearchImpression impression, const UtilityFn& utility, const ExamineCurve& curve,
                                  const ClickModel& clicks, std::uint64_t seed) {
    curve.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = impression.ranked.size();
    impression.actions.assign(n, Action::unobserved);
    for (std::size_t i = 0; i < n; ++i) {
        const double prev = i == 0 ? 1.0 : curve.at(i - 1);
        const double cond = prev > 0.0 ? curve.at(i) / prev : 0.0;
        // Three draws per position keep streams aligned across rankings.
        const double u_examine = unit(rng);
        const double u_act = unit(rng);
        const double u_msg = unit(rng);
        if (!(u_examine < cond)) break;
        const double u = utility(impression, impression.ranked[i]);
        if (u_act < clicks.act_probability(u))
            impression.actions[i] = u_msg < clicks.message_probability(u) ? Action::message : Action::click;
        else
            impression.actions[i] = Action::skip;
    }
    return impression;
}

std::vector<std::pair<std::size_t, int>> extract_labels(std::span<const Action> actions) {
    std::size_t last = 0;
    for (std::size_t i = 0; i < actions.size(); ++i)
        if (actions[i] == Action::message || actions[i] == Action::click) last = i + 1;
    std::vector<std::pair<std::size_t, int>> out;
    for (std::size_t i = 0; i < last; ++i) {
        const int grade = actions[i] == Action::message ? 2 : actions[i] == Action::click ? 1 : 0;
        out.emplace_back(i + 1, grade);
    }
    return out;
}

std::vector<MemberId> sample_easy_negatives(std::span<const MemberId> ranking, std::size_t count,
                                            double tail_fraction, std::size_t top_n, std::uint64_t seed) {
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw ConfigError("tail_fraction must lie in (0, 1]");
    const std::size_t n = ranking.size();
    const auto tail = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n)));
    const std::size_t start = std::max(n - std::min(tail, n), top_n);
    if (start >= n || count == 0) return {};
    std::vector<std::size_t> pos(n - start);
    std::iota(pos.begin(), pos.end(), start);
    std::mt19937_64 rng(seed);
    const std::size_t take = std::min(count, pos.size());
    std::vector<MemberId> out;
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pos.size() - 1);
        std::swap(pos[i], pos[pick(rng)]);
        out.push_back(ranking[pos[i]]);
    }
    return out;
}

TrainSet mine_training_set(const std::vector<SearchImpression>& log, const EasyNegativeConfig& cfg,
                           const RankingFn& full_ranking, const FeaturizeFn& featurize) {
    TrainSet set;
    for (const auto& imp : log) {
        if (imp.actions.size() != imp.ranked.size())
            throw DataError("impression " + std::to_string(imp.query_id) + ": actions do not align with positions");
        const auto labels = extract_labels(imp.actions);
        if (labels.empty()) continue;
        QueryGroup g;
        g.query_id = imp.query_id;
        g.searcher = imp.searcher;
        g.query_skills = imp.query_skills;
        std::unordered_set<MemberId> seen;
        for (const auto& [position, grade] : labels) {
            const MemberId m = imp.ranked[position - 1];
            seen.insert(m);
            g.rows.push_back({imp.query_id, imp.searcher, m, featurize(imp, m), grade});
        }
        if (cfg.count > 0) {
            const auto ranking = full_ranking(imp);
            const auto negatives = sample_easy_negatives(ranking, cfg.count, cfg.tail_fraction, cfg.top_n,
                                                         splitmix64(cfg.seed ^ splitmix64(imp.query_id)));
            for (MemberId m : negatives)
                if (seen.insert(m).second) g.rows.push_back({imp.query_id, imp.searcher, m, featurize(imp, m), 0});
        }
        set.groups.push_back(std::move(g));
    }
    return set;
}

void save_sessions(const std::vector<SearchImpression>& log, const std::filesystem::path& path) {
    std::vector<Json> rows;
    rows.reserve(log.size());
    for (const auto& s : log) {
        Json actions = Json::array();
        for (auto a : s.actions) actions.push_back(std::string(to_string(a)));
        rows.push_back({{"query_id", s.query_id},
                        {"searcher_id", s.searcher},
                        {"query_skills", s.query_skills},
                        {"ranked_members", s.ranked},
                        {"actions", actions}});
    }
    io::atomic_write(path, io::to_jsonl(rows));
}

std::vector<SearchImpression> load_sessions(const std::filesystem::path& path) {
    std::vector<SearchImpression> out;
    io::for_each_jsonl(path, [&](std::size_t, const Json& j) {
        SearchImpression s;
        s.query_id = j.at("query_id").get<std::uint64_t>();
        s.searcher = j.at("searcher_id").get<MemberId>();
        s.query_skills = j.at("query_skills").get<std::vector<SkillId>>();
        s.ranked = j.at("ranked_members").get<std::vector<MemberId>>();
        for (const auto& a : j.at("actions")) s.actions.push_back(action_from_string(a.get<std::string>()));
        if (s.actions.size() != s.ranked.size()) throw DataError("actions do not align with ranked_members");
        out.push_back(std::move(s));
    });
    return out;
}

void save_train_set(const TrainSet& set, const std::filesystem::path& path) {
    std::vector<Json> rows;
    rows.reserve(set.groups.size());
    for (const auto& g : set.groups) {
        Json r = Json::array();
        for (const auto& e : g.rows)
            r.push_back({{"member_id", e.member}, {"grade", e.grade}, {"features", e.features}});
        rows.push_back({{"query_id", g.query_id},
                        {"searcher_id", g.searcher},
                        {"query_skills", g.query_skills},
                        {"rows", r}});
    }
    io::atomic_write(path, io::to_jsonl(rows));
}

TrainSet load_train_set(const std::filesystem::path& path) {
    TrainSet set;
    io::for_each_jsonl(path, [&](std::size_t, const Json& j) {
        QueryGroup g;
        g.query_id = j.at("query_id").get<std::uint64_t>();
        g.searcher = j.at("searcher_id").get<MemberId>();
        g.query_skills = j.at("query_skills").get<std::vector<SkillId>>();
        bool positive = false;
        for (const auto& r : j.at("rows")) {
            LabeledExample e{g.query_id, g.searcher, r.at("member_id").get<MemberId>(),
                             r.at("features").get<RankingFeatures>(), r.at("grade").get<int>()};
            if (e.grade < 0 || e.grade > 2) throw DataError("grade outside {0, 1, 2}");
            positive = positive || e.grade > 0;
            g.rows.push_back(std::move(e));
        }
        if (!positive) throw DataError("query group without a positive grade");
        set.groups.push_back(std::move(g));
    });
    return set;
}

}  // namespace xrank
