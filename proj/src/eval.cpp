#include "xrank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "xrank/error.hpp"
#include "xrank/stats.hpp"

namespace xrank {

SkillHolders relevant_members(const DenseExpertise& ef, std::size_t skills) {
    SkillHolders h;
    h.by_skill.resize(skills);
    for (const auto& e : ef.entries) {
        if (e.skill >= skills) throw DataError("relevant_members: skill id outside the taxonomy");
        h.by_skill[e.skill].push_back(e.member);
    }
    for (auto& list : h.by_skill) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return h;
}

double uniform_rank_auc(std::size_t pool, std::size_t k_max) {
    if (k_max == 0) return 0.0;
    const double n = static_cast<double>(pool) + 1.0;
    double total = 0.0;
    for (std::size_t k = 1; k <= k_max; ++k) total += std::min(static_cast<double>(k), n) / n;
    return total / static_cast<double>(k_max);
}

namespace {

bool holds(const SkillHolders& h, SkillId s, MemberId m) {
    const auto& list = h.by_skill[s];
    return std::binary_search(list.begin(), list.end(), m);
}

std::vector<MemberId> intersect(const std::vector<MemberId>& a, const std::vector<MemberId>& b) {
    std::vector<MemberId> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

}  // namespace

RankCdfCurve cohort_auc(const Corpus& corpus, const SkillHolders& holders, const ExpertiseScorer& scorer,
                        Cohort cohort, const CohortAucConfig& cfg) {
    if (cfg.k_max == 0 || cfg.pool == 0 || cfg.query_skills == 0)
        throw ConfigError("cohort_auc: k_max, pool and query_skills must be positive");
    if (holders.by_skill.size() != corpus.skill_count()) throw DataError("cohort_auc: holders do not match taxonomy");
    std::vector<MemberId> cohort_members;
    for (const auto& p : corpus.members)
        if (p.cohort == cohort) cohort_members.push_back(p.member_id);
    if (cohort_members.empty()) throw DataError("cohort_auc: cohort " + std::string(to_string(cohort)) + " is empty");

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> rank_hist(cfg.k_max + 1, 0);
    RankCdfCurve curve;
    double pool_total = 0.0;
    double uniform_total = 0.0;

    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const MemberId seed =
            cohort_members[std::uniform_int_distribution<std::size_t>(0, cohort_members.size() - 1)(rng)];
        auto listed = corpus.members[seed].explicit_skills;
        std::sort(listed.begin(), listed.end(), [](const ExplicitSkill& a, const ExplicitSkill& b) {
            return a.relevance != b.relevance ? a.relevance > b.relevance : a.skill < b.skill;
        });
        std::vector<SkillId> query;
        for (const auto& e : listed) {
            if (query.size() == cfg.query_skills) break;
            if (holds(holders, e.skill, seed)) query.push_back(e.skill);
        }
        if (query.size() < cfg.query_skills) {
            ++curve.skipped;
            continue;
        }
        auto candidates = holders.by_skill[query[0]];
        for (std::size_t i = 1; i < query.size(); ++i) candidates = intersect(candidates, holders.by_skill[query[i]]);
        candidates.erase(std::remove(candidates.begin(), candidates.end(), seed), candidates.end());
        if (candidates.empty()) {
            ++curve.skipped;
            continue;
        }
        const std::size_t take = std::min(cfg.pool, candidates.size());
        for (std::size_t i = 0; i < take; ++i)
            std::swap(candidates[i],
                      candidates[std::uniform_int_distribution<std::size_t>(i, candidates.size() - 1)(rng)]);

        const double seed_score = scorer(seed, query);
        std::size_t greater = 0, ties = 0;
        for (std::size_t i = 0; i < take; ++i) {
            const double s = scorer(candidates[i], query);
            if (s > seed_score)
                ++greater;
            else if (s == seed_score)
                ++ties;
        }
        const std::size_t rank = 1 + greater + std::uniform_int_distribution<std::size_t>(0, ties)(rng);
        ++rank_hist[std::min(rank, cfg.k_max + 1) - 1];
        ++curve.trials;
        pool_total += static_cast<double>(take);
        uniform_total += uniform_rank_auc(take, cfg.k_max);
    }

    curve.points.assign(cfg.k_max, 0.0);
    if (curve.trials > 0) {
        std::size_t cum = 0;
        for (std::size_t k = 0; k < cfg.k_max; ++k) {
            cum += rank_hist[k];
            curve.points[k] = static_cast<double>(cum) / static_cast<double>(curve.trials);
        }
        curve.mean_pool = pool_total / static_cast<double>(curve.trials);
        curve.uniform_auc = uniform_total / static_cast<double>(curve.trials);
    }
    double total = 0.0;
    for (double p : curve.points) total += p;
    curve.auc = total / static_cast<double>(cfg.k_max);
    return curve;
}

const std::map<std::string, double>& published_cohort_auc() {
    static const std::map<std::string, double> ref{
        {"influencer", 0.76}, {"very_senior", 0.59}, {"in_demand", 0.53},
        {"strata", 0.50},     {"apache", 0.19},      {"random", 0.02},
    };
    return ref;
}

namespace {

struct SearchOutcome {
    double ctr1 = 0.0;
    double ctrk = 0.0;
    double rr = 0.0;
    double messages = 0.0;
};

bool interacted(Action a) { return a == Action::message || a == Action::click; }

SearchOutcome outcome(const SearchImpression& s, std::size_t k) {
    SearchOutcome o;
    for (std::size_t i = 0; i < s.actions.size(); ++i) {
        const Action a = s.actions[i];
        if (a == Action::message) o.messages += 1.0;
        if (!interacted(a)) continue;
        if (o.rr == 0.0) o.rr = 1.0 / static_cast<double>(i + 1);
        if (i == 0) o.ctr1 = 1.0;
        if (i < k) o.ctrk = 1.0;
    }
    return o;
}

MetricsReport summarize(const std::vector<SearchOutcome>& outcomes) {
    MetricsReport r;
    r.searches = outcomes.size();
    if (outcomes.empty()) return r;
    for (const auto& o : outcomes) {
        r.ctr_at_1 += o.ctr1;
        r.ctr_at_10 += o.ctrk;
        r.mrr += o.rr;
        r.messages_per_search += o.messages;
    }
    const double n = static_cast<double>(outcomes.size());
    r.ctr_at_1 /= n;
    r.ctr_at_10 /= n;
    r.mrr /= n;
    r.messages_per_search /= n;
    return r;
}

double metric_value(const MetricsReport& r, std::size_t i) {
    switch (i) {
        case 0: return r.ctr_at_1;
        case 1: return r.ctr_at_10;
        case 2: return r.mrr;
        default: return r.messages_per_search;
    }
}

}  // namespace

MetricsReport session_metrics(const std::vector<SearchImpression>& sessions, std::size_t k) {
    if (sessions.empty()) throw DataError("session_metrics: no sessions");
    std::vector<SearchOutcome> outcomes;
    outcomes.reserve(sessions.size());
    for (const auto& s : sessions) outcomes.push_back(outcome(s, k));
    return summarize(outcomes);
}

std::vector<AbQuery> make_query_stream(const Corpus& corpus, const InvertedIndex& index, std::size_t searches,
                                       std::uint64_t seed, double two_skill_fraction, std::size_t min_results) {
    std::vector<SkillId> usable;
    for (SkillId s = 0; s < index.skill_count(); ++s)
        if (index.postings(s).size() >= min_results) usable.push_back(s);
    if (usable.empty()) throw DataError("make_query_stream: no skill has enough postings");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<AbQuery> out;
    out.reserve(searches);
    for (std::size_t j = 0; j < searches; ++j) {
        AbQuery q;
        q.query_id = j;
        q.searcher =
            static_cast<MemberId>(std::uniform_int_distribution<std::size_t>(0, corpus.member_count() - 1)(rng));
        const SkillId first = usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
        q.skills.push_back(first);
        const bool pair = unit(rng) < two_skill_fraction;
        const auto& groups = corpus.taxonomy.groups_of(first);
        if (pair && !groups.empty()) {
            const auto& group = corpus.taxonomy.groups()[groups.front()];
            const SkillId second = group[std::uniform_int_distribution<std::size_t>(0, group.size() - 1)(rng)];
            const std::vector<SkillId> both{first, second};
            if (second != first && retrieve(index, both, MatchMode::all).size() >= min_results) q.skills = both;
        }
        out.push_back(std::move(q));
    }
    return out;
}

const MetricLift& AbReport::lift(const std::string& metric) const {
    for (const auto& l : lifts)
        if (l.metric == metric) return l;
    throw DataError("no such metric: " + metric);
}

AbReport ab_compare(const Ranker& control, const Ranker& treatment, const std::vector<AbQuery>& queries,
                    const UtilityFn& utility, const AbConfig& cfg) {
    if (queries.empty()) throw DataError("ab_compare: empty query stream");
    std::vector<SearchOutcome> oc, ot;
    oc.reserve(queries.size());
    ot.reserve(queries.size());
    for (std::size_t j = 0; j < queries.size(); ++j) {
        const auto seed = splitmix64(cfg.seed + j);
        for (int arm = 0; arm < 2; ++arm) {
            SearchImpression imp;
            imp.query_id = queries[j].query_id;
            imp.searcher = queries[j].searcher;
            imp.query_skills = queries[j].skills;
            imp.ranked = (arm == 0 ? control : treatment)(queries[j]);
            if (imp.ranked.size() > cfg.page_size) imp.ranked.resize(cfg.page_size);
            const auto done = simulate_session(std::move(imp), utility, cfg.curve, cfg.clicks, seed);
            (arm == 0 ? oc : ot).push_back(outcome(done, cfg.metric_k));
        }
    }

    AbReport report;
    report.control = summarize(oc);
    report.treatment = summarize(ot);
    static const char* names[] = {"ctr_at_1", "ctr_at_10", "mrr", "messages_per_search"};

    const std::size_t n = queries.size();
    std::vector<std::vector<double>> samples(4);
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0xb005u));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<SearchOutcome> rc(n), rt(n);
    for (std::size_t b = 0; b < cfg.bootstrap; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto idx = pick(rng);
            rc[i] = oc[idx];
            rt[i] = ot[idx];
        }
        const auto mc = summarize(rc);
        const auto mt = summarize(rt);
        for (std::size_t k = 0; k < 4; ++k) {
            const double c = metric_value(mc, k);
            if (c > 0.0) samples[k].push_back((metric_value(mt, k) - c) / c);
        }
    }
    for (std::size_t k = 0; k < 4; ++k) {
        MetricLift l;
        l.metric = names[k];
        l.control = metric_value(report.control, k);
        l.treatment = metric_value(report.treatment, k);
        if (l.control > 0.0) {
            l.lift = (l.treatment - l.control) / l.control;
            if (!samples[k].empty()) {
                l.ci_low = stats::quantile(samples[k], 0.025);
                l.ci_high = stats::quantile(samples[k], 0.975);
            }
        }
        report.lifts.push_back(l);
    }
    return report;
}

PlantedUserModel::PlantedUserModel(const RankingContext& context, const PlantedTruth& truth, UserModelWeights w)
    : context_(&context), truth_(&truth), w_(w) {
    if (static_cast<std::size_t>(truth.x_true.rows()) != context.corpus().member_count() ||
        static_cast<std::size_t>(truth.y_true.rows()) != context.corpus().skill_count())
        throw DataError("user model: planted truth does not match the corpus");
}

double PlantedUserModel::utility(const SearchImpression& impression, MemberId member) const {
    if (!cached_ || cached_->searcher.searcher != impression.searcher || cached_->skills != impression.query_skills)
        cached_ = context_->prepare(impression.query_skills, impression.searcher);
    const auto f = context_->compute(*cached_, member, 0.0);
    double expertise = 0.0;
    for (SkillId s : impression.query_skills) expertise += truth_->expertise(member, s);
    if (!impression.query_skills.empty()) expertise /= static_cast<double>(impression.query_skills.size());
    const auto at = [&](RankingFeatureId id) { return f[static_cast<std::size_t>(id)]; };
    return w_.bias + w_.expertise * expertise + w_.geo * at(RankingFeatureId::geo_proximity) +
           w_.social * at(RankingFeatureId::social_graph_distance_inv) +
           w_.title * at(RankingFeatureId::text_title_match) +
           w_.spam * (1.0 - at(RankingFeatureId::spam_free));
}

}  // namespace xrank
