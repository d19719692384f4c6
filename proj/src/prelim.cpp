#include "xrank/prelim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "xrank/error.hpp"
#include "xrank/stats.hpp"

namespace xrank {

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

std::string_view to_string(PairSource s) {
    switch (s) {
        case PairSource::cohort_positive: return "cohort_positive";
        case PairSource::random_skill_negative: return "random_skill_negative";
        case PairSource::mild_relevance_negative: return "mild_relevance_negative";
        case PairSource::spam_negative: return "spam_negative";
    }
    return "?";
}

TrainingPairs build_training_pairs(const Corpus& corpus, const ExpertiseTensor& tensor,
                                   const FeatureExtractor& extractor, const PairConfig& cfg) {
    TrainingPairs out;
    std::mt19937_64 rng(cfg.seed);

    std::array<std::size_t, kCohortCount> cohort_sizes{};
    for (const auto& p : corpus.members) ++cohort_sizes[static_cast<std::size_t>(p.cohort)];
    for (std::size_t c = 0; c < kCohortCount; ++c)
        if (cohort_sizes[c] == 0)
            out.warnings.push_back("cohort " + std::string(to_string(static_cast<Cohort>(c))) +
                                   " has no members; skipped");

    std::vector<LabeledPair> all;
    std::set<std::pair<MemberId, SkillId>> seen;
    auto add = [&](MemberId m, SkillId s, int label, PairSource src, std::vector<double> feats) {
        if (!seen.insert({m, s}).second) return false;
        all.push_back({m, s, label, src, std::move(feats)});
        return true;
    };

    // Positives: expert cohorts' most relevant skills present in E_o.
    for (const auto& p : corpus.members) {
        if (!is_expert_cohort(p.cohort)) continue;
        std::vector<ExplicitSkill> top;
        for (const auto& es : p.explicit_skills)
            if (es.relevance >= cfg.positive_threshold && tensor.find(p.member_id, es.skill)) top.push_back(es);
        std::sort(top.begin(), top.end(), [](const ExplicitSkill& a, const ExplicitSkill& b) {
            return a.relevance != b.relevance ? a.relevance > b.relevance : a.skill < b.skill;
        });
        if (top.size() > cfg.max_positive_skills) top.resize(cfg.max_positive_skills);
        for (const auto& es : top)
            add(p.member_id, es.skill, 1, PairSource::cohort_positive, tensor.find(p.member_id, es.skill)->values);
    }
    const std::size_t positives = all.size();

    std::vector<MemberId> regulars, spammers;
    for (const auto& p : corpus.members) {
        if (p.cohort == Cohort::regular) regulars.push_back(p.member_id);
        if (p.cohort == Cohort::spam) spammers.push_back(p.member_id);
    }

    // Regular members paired with random skills they do not list.
    const auto random_target = static_cast<std::size_t>(cfg.random_negative_ratio * positives);
    if (!regulars.empty() && corpus.skill_count() > 1) {
        std::size_t made = 0, attempts = 0;
        while (made < random_target && attempts < 20 * random_target + 100) {
            ++attempts;
            const MemberId m = regulars[rng() % regulars.size()];
            const auto s = static_cast<SkillId>(rng() % corpus.skill_count());
            if (extractor.relevance(m, s)) continue;
            if (add(m, s, 0, PairSource::random_skill_negative, featurize(extractor, tensor.scaler, m, s))) ++made;
        }
    }

    // Regular members' listed but only mildly relevant skills.
    std::vector<std::pair<MemberId, SkillId>> mild;
    for (MemberId m : regulars)
        for (const auto& es : corpus.member(m).explicit_skills)
            if (es.relevance < cfg.positive_threshold) mild.emplace_back(m, es.skill);
    std::shuffle(mild.begin(), mild.end(), rng);
    const auto mild_target = static_cast<std::size_t>(cfg.mild_negative_ratio * positives);
    for (std::size_t i = 0, made = 0; i < mild.size() && made < mild_target; ++i)
        if (add(mild[i].first, mild[i].second, 0, PairSource::mild_relevance_negative,
                featurize(extractor, tensor.scaler, mild[i].first, mild[i].second)))
            ++made;

    // Spam profiles' skills, each kept with spam_probability.
    std::vector<std::pair<MemberId, SkillId>> spam;
    for (MemberId m : spammers)
        for (const auto& es : corpus.member(m).explicit_skills) spam.emplace_back(m, es.skill);
    std::shuffle(spam.begin(), spam.end(), rng);
    const auto spam_target = static_cast<std::size_t>(cfg.spam_negative_ratio * positives);
    std::bernoulli_distribution keep(cfg.spam_probability);
    for (std::size_t i = 0, made = 0; i < spam.size() && made < spam_target; ++i)
        if (keep(rng) && add(spam[i].first, spam[i].second, 0, PairSource::spam_negative,
                             featurize(extractor, tensor.scaler, spam[i].first, spam[i].second)))
            ++made;

    std::shuffle(all.begin(), all.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::round(cfg.train_fraction * all.size()));
    const auto n_test = static_cast<std::size_t>(std::round(cfg.test_fraction * all.size()));
    for (std::size_t i = 0; i < all.size(); ++i) {
        auto& dst = i < n_train ? out.train : i < n_train + n_test ? out.test : out.validation;
        dst.push_back(std::move(all[i]));
    }
    return out;
}

double LogRegModel::logit(std::span<const double> v) const {
    if (v.size() != weights.size()) throw DataError("logreg: feature dimension mismatch");
    double z = bias;
    for (std::size_t i = 0; i < v.size(); ++i) z += weights[i] * v[i];
    return z;
}

double LogRegModel::score(std::span<const double> v) const { return sigmoid(logit(v)); }

double logreg_loss(const std::vector<LabeledPair>& pairs, const LogRegModel& model) {
    double loss = 0.0;
    for (const auto& p : pairs) {
        const double z = model.logit(p.features);
        loss += p.label ? softplus(-z) : softplus(z);
    }
    loss /= static_cast<double>(pairs.size());
    double norm = 0.0;
    for (double w : model.weights) norm += w * w;
    return loss + 0.5 * model.l2 * norm;
}

std::vector<double> logreg_gradient(const std::vector<LabeledPair>& pairs, const LogRegModel& model) {
    const std::size_t f = model.weights.size();
    std::vector<double> g(f + 1, 0.0);
    for (const auto& p : pairs) {
        const double r = sigmoid(model.logit(p.features)) - p.label;
        for (std::size_t i = 0; i < f; ++i) g[i] += r * p.features[i];
        g[f] += r;
    }
    const double n = static_cast<double>(pairs.size());
    for (auto& x : g) x /= n;
    for (std::size_t i = 0; i < f; ++i) g[i] += model.l2 * model.weights[i];
    return g;
}

LogRegFit train_logreg(const std::vector<LabeledPair>& train, const std::vector<LabeledPair>& test, double l2,
                       double learning_rate, std::size_t epochs) {
    if (train.empty()) throw DataError("logreg: empty training set");
    bool has_pos = false, has_neg = false;
    for (const auto& p : train) (p.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw DataError("logreg: training pairs contain a single class");
    if (!(l2 >= 0.0)) throw ConfigError("logreg: l2 must be non-negative");

    const std::size_t f = train.front().features.size();
    LogRegFit fit;
    fit.model.weights.assign(f, 0.0);
    fit.model.l2 = l2;

    // Logistic Hessian <= 0.25 * mean |x|^2 * I on the data term.
    double curvature = 0.0;
    for (const auto& p : train) {
        double sq = 1.0;
        for (double x : p.features) sq += x * x;
        curvature += sq;
    }
    curvature *= 0.25 / static_cast<double>(train.size());
    const double step_w = std::min(learning_rate, 1.0 / (curvature + l2));
    const double step_b = std::min(learning_rate, 1.0 / curvature);

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto g = logreg_gradient(train, fit.model);
        for (std::size_t i = 0; i < f; ++i) fit.model.weights[i] -= step_w * g[i];
        fit.model.bias -= step_b * g[f];
        fit.loss_trace.push_back(logreg_loss(train, fit.model));
    }

    if (!test.empty()) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& p : test) {
            scores.push_back(fit.model.logit(p.features));
            labels.push_back(p.label);
        }
        bool pos = false, neg = false;
        for (int l : labels) (l ? pos : neg) = true;
        fit.test_auc = pos && neg ? stats::roc_auc(scores, labels) : 0.0;
    }
    return fit;
}

Calibration calibrate_prelim(const Corpus& corpus, const ExpertiseTensor& tensor, const FeatureExtractor& extractor,
                             const std::vector<PairConfig>& mixes, const std::vector<double>& l2_grid,
                             double learning_rate, std::size_t epochs) {
    if (mixes.empty() || l2_grid.empty()) throw ConfigError("calibration grid is empty");
    Calibration best;
    bool have = false;
    for (std::size_t mi = 0; mi < mixes.size(); ++mi) {
        auto pairs = build_training_pairs(corpus, tensor, extractor, mixes[mi]);
        for (double l2 : l2_grid) {
            auto fit = train_logreg(pairs.train, pairs.test, l2, learning_rate, epochs);
            best.table.push_back({l2, mi, fit.test_auc});
            if (!have || fit.test_auc > best.fit.test_auc) {
                have = true;
                best.fit = std::move(fit);
                best.pair_config = mixes[mi];
                best.pairs = pairs;
            }
        }
    }
    return best;
}

const SparseEntry* SparseExpertise::find(MemberId m, SkillId s) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), std::make_pair(m, s),
                               [](const SparseEntry& e, const std::pair<MemberId, SkillId>& key) {
                                   return std::make_pair(e.member, e.skill) < key;
                               });
    return it != entries.end() && it->member == m && it->skill == s ? &*it : nullptr;
}

SparseExpertise score_tensor(const LogRegModel& model, const ExpertiseTensor& tensor) {
    if (model.weights.size() != tensor.dim) throw DataError("score_tensor: model/tensor feature dimension mismatch");
    SparseExpertise out;
    out.entries.reserve(tensor.entries.size());
    for (const auto& e : tensor.entries) out.entries.push_back({e.member, e.skill, model.score(e.values)});
    return out;
}

void save_sparse(const SparseExpertise& e, const std::filesystem::path& path) {
    std::string out;
    for (const auto& x : e.entries) {
        out += Json{{"member", x.member}, {"skill", x.skill}, {"score", x.score}}.dump();
        out += '\n';
    }
    io::atomic_write(path, out);
}

SparseExpertise load_sparse(const std::filesystem::path& path) {
    SparseExpertise e;
    io::for_each_jsonl(path, [&](std::size_t line, const Json& j) {
        SparseEntry x{j.at("member").get<MemberId>(), j.at("skill").get<SkillId>(), j.at("score").get<double>()};
        if (!e.entries.empty() &&
            std::make_pair(e.entries.back().member, e.entries.back().skill) >= std::make_pair(x.member, x.skill))
            throw ParseError(path.string(), line, "entries must be sorted by (member, skill)");
        e.entries.push_back(x);
    });
    return e;
}

Json to_json(const LogRegModel& model) {
    return Json{{"weights", model.weights}, {"bias", model.bias}, {"l2", model.l2}};
}

LogRegModel logreg_from_json(const Json& j) {
    try {
        return {j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>(), j.at("l2").get<double>()};
    } catch (const Json::exception& e) {
        throw DataError(std::string("logreg model: ") + e.what());
    }
}

}  // namespace xrank
