#include "xrank/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "xrank/error.hpp"
#include "xrank/stats.hpp"

namespace xrank {

namespace fs = std::filesystem;

namespace {

struct StageName {
    Stage stage;
    std::string_view name;
};

constexpr StageName kStages[] = {
    {Stage::generate, "generate"},           {Stage::features, "features"},
    {Stage::prelim, "prelim"},               {Stage::factorize, "factorize"},
    {Stage::build_index, "build-index"},     {Stage::simulate_logs, "simulate-logs"},
    {Stage::mine, "mine"},                   {Stage::train_ltr, "train-ltr"},
    {Stage::evaluate, "evaluate"},           {Stage::cohort_auc, "cohort-auc"},
    {Stage::ab, "ab"},
};

}  // namespace

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages = [] {
        std::vector<Stage> v;
        for (const auto& s : kStages) v.push_back(s.stage);
        return v;
    }();
    return stages;
}

std::string_view to_string(Stage s) {
    for (const auto& e : kStages)
        if (e.stage == s) return e.name;
    return "unknown";
}

Stage stage_from_string(std::string_view s) {
    for (const auto& e : kStages)
        if (e.name == s) return e.stage;
    throw ConfigError("unknown stage: " + std::string(s));
}

fs::path ArtifactPaths::stamp(Stage s) const { return work_dir / ".stamps" / (std::string(to_string(s)) + ".json"); }

std::size_t PipelineConfig::k_for(const std::string& preset) const {
    auto it = metric_k.find(preset);
    if (it == metric_k.end()) throw ConfigError("unknown metric preset: " + preset);
    return it->second;
}

std::uint64_t PipelineConfig::stage_seed(Stage s) const {
    return splitmix64(seed * 0x100 + static_cast<std::uint64_t>(s));
}

void PipelineConfig::validate() const {
    gen.validate();
    factorize.hp.validate();
    randomization.validate();
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
    if (prelim.l2_grid.empty()) throw ConfigError("prelim.l2_grid must not be empty");
    if (logs.searches == 0 || logs.page_size == 0) throw ConfigError("logs.searches and logs.page_size must be positive");
    if (!(logs.easy_negatives.tail_fraction > 0.0 && logs.easy_negatives.tail_fraction <= 1.0))
        throw ConfigError("logs.easy_negatives.tail_fraction must lie in (0, 1]");
    if (!(ltr.holdout_fraction > 0.0 && ltr.holdout_fraction < 1.0))
        throw ConfigError("ltr.holdout_fraction must lie in (0, 1)");
    if (ltr.ca.restarts == 0) throw ConfigError("ltr.restarts must be at least 1");
    if (!metric_k.count("homepage") || !metric_k.count("recruiter"))
        throw ConfigError("metric_k must define the homepage and recruiter presets");
    for (const auto& [name, k] : metric_k)
        if (k == 0) throw ConfigError("metric_k." + name + " must be positive");
    k_for(ltr.preset);
    if (eval.ab_searches == 0 || eval.bootstrap == 0) throw ConfigError("eval.ab values must be positive");
    if (port < 0 || port > 65535) throw ConfigError("service.port outside 0..65535");
}

namespace {

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig pipeline_config_from_json(const Json& j) {
    PipelineConfig cfg;
    try {
        check_keys(j,
                   {"work_dir", "seed", "generate", "threshold", "prelim", "factorize", "randomization", "logs", "ltr",
                    "eval", "metric_k", "service"},
                   "config");
        if (j.contains("work_dir")) cfg.paths.work_dir = j.at("work_dir").get<std::string>();
        read(j, "seed", cfg.seed);
        read(j, "threshold", cfg.threshold);
        if (j.contains("generate")) cfg.gen = gen_config_from_json(j.at("generate"));
        cfg.gen.seed = cfg.seed;

        if (j.contains("prelim")) {
            const auto& p = j.at("prelim");
            check_keys(p, {"l2_grid", "learning_rate", "epochs", "mixes"}, "prelim");
            read(p, "l2_grid", cfg.prelim.l2_grid);
            read(p, "learning_rate", cfg.prelim.learning_rate);
            read(p, "epochs", cfg.prelim.epochs);
            if (p.contains("mixes"))
                for (const auto& m : p.at("mixes")) {
                    check_keys(m,
                               {"positive_threshold", "max_positive_skills", "random_negative_ratio",
                                "mild_negative_ratio", "spam_negative_ratio", "spam_probability"},
                               "prelim.mixes");
                    PairConfig pc;
                    read(m, "positive_threshold", pc.positive_threshold);
                    read(m, "max_positive_skills", pc.max_positive_skills);
                    read(m, "random_negative_ratio", pc.random_negative_ratio);
                    read(m, "mild_negative_ratio", pc.mild_negative_ratio);
                    read(m, "spam_negative_ratio", pc.spam_negative_ratio);
                    read(m, "spam_probability", pc.spam_probability);
                    cfg.prelim.mixes.push_back(pc);
                }
        }
        if (j.contains("factorize")) {
            const auto& f = j.at("factorize");
            check_keys(f, {"k", "lambda_reg", "alpha", "sweeps", "cv"}, "factorize");
            Json hp = f;
            hp.erase("cv");
            cfg.factorize.hp = factor_params_from_json(hp);
            if (f.contains("cv")) {
                const auto& cv = f.at("cv");
                check_keys(cv, {"k", "lambda_reg", "holdout_fraction"}, "factorize.cv");
                read(cv, "k", cfg.factorize.cv_k);
                read(cv, "lambda_reg", cfg.factorize.cv_lambda);
                read(cv, "holdout_fraction", cfg.factorize.holdout_fraction);
            }
        }
        if (j.contains("randomization")) {
            const auto& r = j.at("randomization");
            check_keys(r, {"top_n", "salt"}, "randomization");
            read(r, "top_n", cfg.randomization.top_n);
            read(r, "salt", cfg.randomization.salt);
        }
        if (j.contains("logs")) {
            const auto& l = j.at("logs");
            check_keys(l,
                       {"searches", "page_size", "examine_decay", "two_skill_fraction", "message_offset", "user_model",
                        "easy_negatives"},
                       "logs");
            read(l, "searches", cfg.logs.searches);
            read(l, "page_size", cfg.logs.page_size);
            read(l, "examine_decay", cfg.logs.examine_decay);
            read(l, "two_skill_fraction", cfg.logs.two_skill_fraction);
            read(l, "message_offset", cfg.logs.clicks.message_offset);
            if (l.contains("user_model")) {
                const auto& u = l.at("user_model");
                check_keys(u, {"bias", "expertise", "geo", "social", "title", "spam"}, "logs.user_model");
                read(u, "bias", cfg.logs.user.bias);
                read(u, "expertise", cfg.logs.user.expertise);
                read(u, "geo", cfg.logs.user.geo);
                read(u, "social", cfg.logs.user.social);
                read(u, "title", cfg.logs.user.title);
                read(u, "spam", cfg.logs.user.spam);
            }
            if (l.contains("easy_negatives")) {
                const auto& e = l.at("easy_negatives");
                check_keys(e, {"count", "tail_fraction"}, "logs.easy_negatives");
                read(e, "count", cfg.logs.easy_negatives.count);
                read(e, "tail_fraction", cfg.logs.easy_negatives.tail_fraction);
            }
        }
        if (j.contains("ltr")) {
            const auto& l = j.at("ltr");
            check_keys(l, {"restarts", "tol", "max_cycles", "preset", "holdout_fraction", "multipliers", "probes"},
                       "ltr");
            read(l, "restarts", cfg.ltr.ca.restarts);
            read(l, "tol", cfg.ltr.ca.tol);
            read(l, "max_cycles", cfg.ltr.ca.max_cycles);
            read(l, "preset", cfg.ltr.preset);
            read(l, "holdout_fraction", cfg.ltr.holdout_fraction);
            read(l, "multipliers", cfg.ltr.ca.multipliers);
            read(l, "probes", cfg.ltr.ca.probes);
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            check_keys(e, {"cohort_auc", "ab"}, "eval");
            if (e.contains("cohort_auc")) {
                const auto& c = e.at("cohort_auc");
                check_keys(c, {"trials", "pool", "k_max", "query_skills"}, "eval.cohort_auc");
                read(c, "trials", cfg.eval.cohort.trials);
                read(c, "pool", cfg.eval.cohort.pool);
                read(c, "k_max", cfg.eval.cohort.k_max);
                read(c, "query_skills", cfg.eval.cohort.query_skills);
            }
            if (e.contains("ab")) {
                const auto& a = e.at("ab");
                check_keys(a, {"searches", "bootstrap"}, "eval.ab");
                read(a, "searches", cfg.eval.ab_searches);
                read(a, "bootstrap", cfg.eval.bootstrap);
            }
        }
        if (j.contains("metric_k")) cfg.metric_k = j.at("metric_k").get<std::map<std::string, std::size_t>>();
        if (j.contains("service")) {
            const auto& s = j.at("service");
            check_keys(s, {"host", "port"}, "service");
            read(s, "host", cfg.host);
            read(s, "port", cfg.port);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    cfg.factorize.hp.seed = cfg.stage_seed(Stage::factorize);
    cfg.ltr.ca.seed = cfg.stage_seed(Stage::train_ltr);
    cfg.ltr.ca.k = cfg.k_for(cfg.ltr.preset);
    cfg.logs.easy_negatives.top_n = cfg.randomization.top_n;
    cfg.logs.easy_negatives.seed = cfg.stage_seed(Stage::mine);
    cfg.eval.cohort.seed = cfg.stage_seed(Stage::cohort_auc);
    cfg.source = j;
    cfg.source["seed"] = cfg.seed;
    cfg.validate();
    return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path, std::optional<std::uint64_t> seed) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const MissingArtifact&) {
        throw ConfigError("config file not found: " + path.string());
    }
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (seed) j["seed"] = *seed;
    return pipeline_config_from_json(j);
}

SimplexWeights legacy_weights() {
    const double w[] = {0.0, 0.30, 0.25, 0.15, 0.10, 0.10, 0.10};
    return to_simplex(w);
}

std::vector<Scored> rank_query(const RankingContext& context, const SimplexWeights& weights,
                               std::span<const SkillId> skills, MemberId searcher, MatchMode mode) {
    if (weights.size() != kRankingFeatureCount) throw DataError("ranking model has the wrong number of weights");
    const auto hits = retrieve(context.index(), skills, mode);
    const auto q = context.prepare(skills, searcher);
    std::vector<Scored> out;
    out.reserve(hits.size());
    for (const auto& h : hits) {
        auto f = context.compute(q, h.member, h.score);
        const double s = score(weights, f);
        out.push_back({h.member, s, std::move(f)});
    }
    std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
        return a.score != b.score ? a.score > b.score : a.member < b.member;
    });
    return out;
}

std::vector<MemberId> logged_ranking(const RankingContext& context, const SimplexWeights& weights,
                                     const RandomizationConfig& randomization, std::span<const SkillId> skills,
                                     MemberId searcher) {
    std::vector<MemberId> members;
    for (const auto& s : rank_query(context, weights, skills, searcher)) members.push_back(s.member);
    return rerank_top_n_hash(std::move(members), randomization);
}

namespace {

struct StageSpec {
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    std::function<void()> run;
};

void write_json(const fs::path& path, const Json& j) { io::atomic_write(path, j.dump(2) + "\n"); }

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string percent(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.1f%%", 100.0 * v);
    return buf;
}

struct Loaded {
    Corpus corpus;
    InvertedIndex index;
};

Loaded load_corpus_and_index(const PipelineConfig& cfg) {
    return {load_corpus(cfg.paths.work_dir), open_index(cfg.paths("index.bin"))};
}

// Deterministic per-group holdout assignment.
bool is_holdout(std::uint64_t query_id, double fraction, std::uint64_t seed) {
    return static_cast<double>(splitmix64(query_id ^ seed) % 1000000) < fraction * 1e6;
}

std::pair<TrainSet, TrainSet> split_groups(const TrainSet& set, double fraction, std::uint64_t seed) {
    TrainSet train, holdout;
    for (const auto& g : set.groups) (is_holdout(g.query_id, fraction, seed) ? holdout : train).groups.push_back(g);
    return {std::move(train), std::move(holdout)};
}

std::vector<PairConfig> prelim_mixes(const PipelineConfig& cfg) {
    auto mixes = cfg.prelim.mixes;
    if (mixes.empty()) mixes.emplace_back();
    for (auto& m : mixes) m.seed = cfg.stage_seed(Stage::prelim);
    return mixes;
}

void stage_generate(const PipelineConfig& cfg) {
    const auto g = generate_corpus(cfg.gen);
    save_corpus(g.corpus, cfg.paths.work_dir);
    save_truth(g.truth, cfg.paths("truth.bin"));
    spdlog::info("generated {} members, {} skills, {} endorsements", g.corpus.member_count(), g.corpus.skill_count(),
                 g.corpus.endorsements.edges.size());
}

void stage_features(const PipelineConfig& cfg) {
    const auto corpus = load_corpus(cfg.paths.work_dir);
    const auto tensor = compute_features(corpus, cfg.threshold);
    save_tensor(tensor, cfg.paths("tensor_eo.jsonl"), cfg.paths("feature_scaler.json"));
    spdlog::info("E_o holds {} pairs", tensor.entries.size());
}

void stage_prelim(const PipelineConfig& cfg) {
    const auto corpus = load_corpus(cfg.paths.work_dir);
    const auto tensor = load_tensor(cfg.paths("tensor_eo.jsonl"), cfg.paths("feature_scaler.json"));
    const FeatureExtractor extractor(corpus);
    const auto cal = calibrate_prelim(corpus, tensor, extractor, prelim_mixes(cfg), cfg.prelim.l2_grid,
                                      cfg.prelim.learning_rate, cfg.prelim.epochs);
    for (const auto& w : cal.pairs.warnings) spdlog::warn("{}", w);
    const auto ei = score_tensor(cal.fit.model, tensor);

    std::vector<double> vs;
    std::vector<int> vl;
    for (const auto& p : cal.pairs.validation) {
        vs.push_back(cal.fit.model.score(p.features));
        vl.push_back(p.label);
    }
    Json table = Json::array();
    for (const auto& c : cal.table) table.push_back({{"l2", c.l2}, {"mix", c.mix_index}, {"test_auc", c.test_auc}});
    Json report{{"chosen_l2", cal.fit.model.l2},
                {"test_auc", cal.fit.test_auc},
                {"validation_auc", vl.empty() ? 0.0 : stats::roc_auc(vs, vl)},
                {"pairs", {{"train", cal.pairs.train.size()},
                           {"test", cal.pairs.test.size()},
                           {"validation", cal.pairs.validation.size()}}},
                {"grid", table},
                {"warnings", cal.pairs.warnings},
                {"ei_size", ei.size()}};
    save_sparse(ei, cfg.paths("ei.jsonl"));
    write_json(cfg.paths("prelim_model.json"), to_json(cal.fit.model));
    write_json(cfg.paths("prelim_report.json"), report);
    spdlog::info("preliminary scorer test AUC {:.4f}; E_i holds {} pairs", cal.fit.test_auc, ei.size());
}

void stage_factorize(const PipelineConfig& cfg) {
    const auto ei = load_sparse(cfg.paths("ei.jsonl"));
    const auto corpus = load_corpus(cfg.paths.work_dir);
    const auto e = normalize(ei, corpus.member_count(), corpus.skill_count());
    auto hp = cfg.factorize.hp;
    Json cv_table = Json::array();
    if (!cfg.factorize.cv_k.empty() || !cfg.factorize.cv_lambda.empty()) {
        std::vector<FactorHyperParams> grid;
        const auto ks = cfg.factorize.cv_k.empty() ? std::vector<std::size_t>{hp.k} : cfg.factorize.cv_k;
        const auto ls = cfg.factorize.cv_lambda.empty() ? std::vector<double>{hp.lambda_reg} : cfg.factorize.cv_lambda;
        for (auto k : ks)
            for (auto l : ls) {
                auto p = hp;
                p.k = k;
                p.lambda_reg = l;
                grid.push_back(p);
            }
        const auto cv = cross_validate(e, grid, cfg.stage_seed(Stage::factorize) ^ 0xcu, cfg.factorize.holdout_fraction);
        for (const auto& p : cv.points)
            cv_table.push_back({{"k", p.hp.k}, {"lambda_reg", p.hp.lambda_reg}, {"heldout_spearman", p.heldout_spearman}});
        hp = cv.best;
        spdlog::info("cross-validation picked k={} lambda={}", hp.k, hp.lambda_reg);
    }
    AlsReport rep;
    const auto model = als_fit(e, hp, &rep);
    const auto gate = relevance_gate(corpus.taxonomy, ei);
    const auto ef = reconstruct(model, gate);
    save_factors(model, cfg.paths("factors.bin"));
    save_sparse(ef, cfg.paths("ef.jsonl"));
    write_json(cfg.paths("factorize_report.json"), Json{{"hyperparameters", to_json(hp)},
                                                        {"cv", cv_table},
                                                        {"objective_trace", rep.objective_trace},
                                                        {"ridge_retries", rep.ridge_retries},
                                                        {"ei_size", ei.size()},
                                                        {"ef_size", ef.size()}});
    spdlog::info("E_f holds {} pairs (E_i {})", ef.size(), ei.size());
}

void stage_build_index(const PipelineConfig& cfg) {
    const auto ef = load_sparse(cfg.paths("ef.jsonl"));
    const auto factors = load_factors(cfg.paths("factors.bin"));
    const auto index = InvertedIndex::build(ef, static_cast<std::size_t>(factors.x.rows()),
                                            static_cast<std::size_t>(factors.y.rows()));
    save_index(index, cfg.paths("index.bin"));
    spdlog::info("index: {} postings, payload scale {:.3e}", index.posting_count(), index.scale());
}

void stage_simulate_logs(const PipelineConfig& cfg) {
    const auto [corpus, index] = load_corpus_and_index(cfg);
    const auto truth = load_truth(cfg.paths("truth.bin"));
    const RankingContext ctx(corpus, index);
    const PlantedUserModel user(ctx, truth, cfg.logs.user);
    const auto seed = cfg.stage_seed(Stage::simulate_logs);
    const auto queries = make_query_stream(corpus, index, cfg.logs.searches, seed, cfg.logs.two_skill_fraction);
    const auto legacy = legacy_weights();
    const auto curve = ExamineCurve::harmonic(cfg.logs.page_size, cfg.logs.examine_decay);
    const UtilityFn utility = [&](const SearchImpression& s, MemberId m) { return user.utility(s, m); };
    std::vector<SearchImpression> log;
    log.reserve(queries.size());
    for (const auto& q : queries) {
        SearchImpression imp;
        imp.query_id = q.query_id;
        imp.searcher = q.searcher;
        imp.query_skills = q.skills;
        imp.ranked = logged_ranking(ctx, legacy, cfg.randomization, q.skills, q.searcher);
        if (imp.ranked.size() > cfg.logs.page_size) imp.ranked.resize(cfg.logs.page_size);
        log.push_back(simulate_session(std::move(imp), utility, curve, cfg.logs.clicks, splitmix64(seed + q.query_id)));
    }
    save_sessions(log, cfg.paths("sessions.jsonl"));
    const auto m = session_metrics(log);
    spdlog::info("simulated {} sessions: CTR@1 {:.3f}, MRR {:.3f}", log.size(), m.ctr_at_1, m.mrr);
}

void stage_mine(const PipelineConfig& cfg) {
    const auto log = load_sessions(cfg.paths("sessions.jsonl"));
    const auto [corpus, index] = load_corpus_and_index(cfg);
    const RankingContext ctx(corpus, index);
    const auto legacy = legacy_weights();
    std::optional<QueryContext> cached;
    std::uint64_t cached_id = 0;
    const RankingFn full = [&](const SearchImpression& s) {
        return logged_ranking(ctx, legacy, cfg.randomization, s.query_skills, s.searcher);
    };
    const FeaturizeFn featurize = [&](const SearchImpression& s, MemberId m) {
        if (!cached || cached_id != s.query_id) {
            cached = ctx.prepare(s.query_skills, s.searcher);
            cached_id = s.query_id;
        }
        return ctx.compute(*cached, m, ctx.expertise_sum(s.query_skills, m));
    };
    const auto set = mine_training_set(log, cfg.logs.easy_negatives, full, featurize);
    save_train_set(set, cfg.paths("ltr_train.jsonl"));
    spdlog::info("mined {} groups ({} rows) from {} impressions", set.groups.size(), set.row_count(), log.size());
}

void stage_train_ltr(const PipelineConfig& cfg) {
    const auto set = load_train_set(cfg.paths("ltr_train.jsonl"));
    const auto [train, holdout] = split_groups(set, cfg.ltr.holdout_fraction, cfg.stage_seed(Stage::evaluate));
    if (train.groups.empty()) throw DataError("train-ltr: no training groups after the holdout split");

    auto with = cfg.ltr.ca;
    auto without = cfg.ltr.ca;
    without.active.assign(kRankingFeatureCount, true);
    without.active[static_cast<std::size_t>(RankingFeatureId::expertise_sum)] = false;
    const auto fit_with = coordinate_ascent(train, with);
    const auto fit_without = coordinate_ascent(train, without);
    save_model(fit_with.weights, cfg.paths("ltr_model.json"));
    save_model(fit_without.weights, cfg.paths("ltr_model_noexp.json"));

    auto describe = [](const CoordinateAscentResult& r) {
        return Json{{"lambda", r.weights.lambda},
                    {"objective", r.objective},
                    {"best_restart", r.best_restart},
                    {"trace", r.trace},
                    {"restart_objectives", r.restart_objectives}};
    };
    write_json(cfg.paths("train_report.json"), Json{{"preset", cfg.ltr.preset},
                                                    {"k", with.k},
                                                    {"train_groups", train.groups.size()},
                                                    {"holdout_groups", holdout.groups.size()},
                                                    {"with_expertise", describe(fit_with)},
                                                    {"without_expertise", describe(fit_without)}});
    spdlog::info("train NDCG@{}: {:.4f} with expertise, {:.4f} without", with.k, fit_with.objective,
                 fit_without.objective);
}

void stage_evaluate(const PipelineConfig& cfg) {
    const auto set = load_train_set(cfg.paths("ltr_train.jsonl"));
    const auto with = load_model(cfg.paths("ltr_model.json"));
    const auto without = load_model(cfg.paths("ltr_model_noexp.json"));
    const auto holdout = split_groups(set, cfg.ltr.holdout_fraction, cfg.stage_seed(Stage::evaluate)).second;
    if (holdout.groups.empty()) throw DataError("evaluate: held-out split is empty");
    Json models = Json::object();
    const std::pair<const char*, SimplexWeights> named[] = {
        {"learned", with}, {"learned_no_expertise", without}, {"legacy", legacy_weights()}};
    for (const auto& [name, w] : named) {
        Json rows = Json::array();
        for (const auto& [preset, k] : cfg.metric_k)
            rows.push_back({{"preset", preset}, {"k", k}, {"ndcg_at_k", evaluate(w, holdout, k)},
                            {"groups", holdout.groups.size()}});
        models[name] = rows;
    }
    write_json(cfg.paths("eval_report.json"), Json{{"models", models}});
    spdlog::info("held-out NDCG@{}: learned {:.4f}, no expertise {:.4f}", cfg.k_for("homepage"),
                 evaluate(with, holdout, cfg.k_for("homepage")), evaluate(without, holdout, cfg.k_for("homepage")));
}

void stage_cohort_auc(const PipelineConfig& cfg) {
    const auto [corpus, index] = load_corpus_and_index(cfg);
    const auto ef = load_sparse(cfg.paths("ef.jsonl"));
    const RankingContext ctx(corpus, index);
    const auto holders = relevant_members(ef, corpus.skill_count());
    const ExpertiseScorer scorer = [&](MemberId m, std::span<const SkillId> q) { return ctx.expertise_sum(q, m); };
    const auto& published = published_cohort_auc();

    Json rows = Json::array();
    std::ostringstream txt;
    txt << pad("Cohort", 14) << pad("AUC@" + std::to_string(cfg.eval.cohort.k_max), 10) << pad("Uniform", 10)
        << pad("Trials", 8) << "Published\n";
    auto emit = [&](const std::string& name, const RankCdfCurve& c) {
        auto it = published.find(name);
        rows.push_back({{"cohort", name},
                        {"auc", c.auc},
                        {"uniform_auc", c.uniform_auc},
                        {"trials", c.trials},
                        {"skipped", c.skipped},
                        {"mean_pool", c.mean_pool},
                        {"published_auc", it == published.end() ? Json() : Json(it->second)},
                        {"curve", c.points}});
        txt << pad(name, 14) << pad(fixed(c.auc), 10) << pad(fixed(c.uniform_auc), 10)
            << pad(std::to_string(c.trials), 8) << (it == published.end() ? "-" : fixed(it->second, 2)) << "\n";
    };
    for (std::size_t c = 0; c < kCohortCount; ++c) {
        const auto cohort = static_cast<Cohort>(c);
        try {
            emit(std::string(to_string(cohort)), cohort_auc(corpus, holders, scorer, cohort, cfg.eval.cohort));
        } catch (const DataError& e) {
            spdlog::warn("{}", e.what());
        }
    }
    std::mt19937_64 noise(cfg.stage_seed(Stage::cohort_auc) ^ 0x7au);
    const ExpertiseScorer random_scorer = [&](MemberId, std::span<const SkillId>) {
        return std::uniform_real_distribution<double>(0.0, 1.0)(noise);
    };
    emit("random", cohort_auc(corpus, holders, random_scorer, Cohort::influencer, cfg.eval.cohort));
    write_json(cfg.paths("cohort_auc.json"), Json{{"pool", cfg.eval.cohort.pool},
                                                  {"k_max", cfg.eval.cohort.k_max},
                                                  {"trials", cfg.eval.cohort.trials},
                                                  {"rows", rows}});
    io::atomic_write(cfg.paths("cohort_auc.txt"), txt.str());
    spdlog::info("cohort AUC table:\n{}", txt.str());
}

void stage_ab(const PipelineConfig& cfg) {
    const auto [corpus, index] = load_corpus_and_index(cfg);
    const auto truth = load_truth(cfg.paths("truth.bin"));
    const auto with = load_model(cfg.paths("ltr_model.json"));
    const auto without = load_model(cfg.paths("ltr_model_noexp.json"));
    const RankingContext ctx(corpus, index);
    const PlantedUserModel user(ctx, truth, cfg.logs.user);
    const auto queries =
        make_query_stream(corpus, index, cfg.eval.ab_searches, cfg.stage_seed(Stage::ab), cfg.logs.two_skill_fraction);

    const std::pair<std::string, SimplexWeights> rankers[] = {
        {"legacy", legacy_weights()}, {"learned_no_expertise", without}, {"learned", with}};
    std::map<std::string, std::vector<std::vector<MemberId>>> pages;
    for (const auto& [name, w] : rankers) {
        auto& p = pages[name];
        p.reserve(queries.size());
        for (const auto& q : queries) {
            std::vector<MemberId> page;
            for (const auto& s : rank_query(ctx, w, q.skills, q.searcher)) {
                if (page.size() == cfg.logs.page_size) break;
                page.push_back(s.member);
            }
            p.push_back(std::move(page));
        }
    }
    auto ranker = [&](const std::string& name) -> Ranker {
        const auto* p = &pages.at(name);
        return [p](const AbQuery& q) { return (*p)[q.query_id]; };
    };
    AbConfig ab;
    ab.page_size = cfg.logs.page_size;
    ab.metric_k = 10;
    ab.bootstrap = cfg.eval.bootstrap;
    ab.seed = cfg.stage_seed(Stage::ab) ^ 0xabu;
    ab.curve = ExamineCurve::harmonic(cfg.logs.page_size, cfg.logs.examine_decay);
    ab.clicks = cfg.logs.clicks;
    const UtilityFn utility = [&](const SearchImpression& s, MemberId m) { return user.utility(s, m); };

    const std::pair<std::string, std::string> tests[] = {
        {"legacy", "learned"}, {"learned_no_expertise", "learned"}, {"legacy", "learned_no_expertise"}};
    Json out = Json::array();
    std::ostringstream txt;
    for (const auto& [control, treatment] : tests) {
        const auto rep = ab_compare(ranker(control), ranker(treatment), queries, utility, ab);
        Json lifts = Json::array();
        txt << treatment << " vs " << control << " (" << queries.size() << " searches)\n"
            << pad("Metric", 22) << pad("Control", 10) << pad("Treatment", 11) << pad("Lift", 9) << "95% CI\n";
        for (const auto& l : rep.lifts) {
            lifts.push_back({{"metric", l.metric},
                             {"control", l.control},
                             {"treatment", l.treatment},
                             {"lift", l.lift ? Json(*l.lift) : Json()},
                             {"ci_low", l.ci_low},
                             {"ci_high", l.ci_high},
                             {"significant", l.lift && (l.ci_low > 0.0 || l.ci_high < 0.0)}});
            txt << pad(l.metric, 22) << pad(fixed(l.control), 10) << pad(fixed(l.treatment), 11)
                << pad(l.lift ? percent(*l.lift) : "n/a", 9) << "[" << percent(l.ci_low) << ", "
                << percent(l.ci_high) << "]\n";
        }
        txt << "\n";
        out.push_back({{"control", control}, {"treatment", treatment}, {"searches", queries.size()}, {"lifts", lifts}});
    }
    write_json(cfg.paths("ab_report.json"),
               Json{{"tests", out},
                    {"published_reference", {{"ctr_at_1_homepage", 0.18}, {"ctr_at_1_recruiter", 0.31}}}});
    io::atomic_write(cfg.paths("ab_report.txt"), txt.str());
    spdlog::info("A/B results:\n{}", txt.str());
}

StageSpec spec_for(Stage stage, const PipelineConfig& cfg) {
    const auto& p = cfg.paths;
    const std::vector<fs::path> corpus{p("skills.jsonl"), p("members.jsonl"), p("endorsements.jsonl")};
    auto cat = [](std::vector<fs::path> a, const std::vector<fs::path>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    switch (stage) {
        case Stage::generate:
            return {{}, cat(corpus, {p("truth.bin")}), [&] { stage_generate(cfg); }};
        case Stage::features:
            return {corpus, {p("tensor_eo.jsonl"), p("feature_scaler.json")}, [&] { stage_features(cfg); }};
        case Stage::prelim:
            return {cat(corpus, {p("tensor_eo.jsonl"), p("feature_scaler.json")}),
                    {p("ei.jsonl"), p("prelim_model.json"), p("prelim_report.json")},
                    [&] { stage_prelim(cfg); }};
        case Stage::factorize:
            return {cat({p("ei.jsonl")}, corpus),
                    {p("factors.bin"), p("ef.jsonl"), p("factorize_report.json")},
                    [&] { stage_factorize(cfg); }};
        case Stage::build_index:
            return {{p("ef.jsonl"), p("factors.bin")}, {p("index.bin")}, [&] { stage_build_index(cfg); }};
        case Stage::simulate_logs:
            return {cat({p("index.bin"), p("truth.bin")}, corpus), {p("sessions.jsonl")},
                    [&] { stage_simulate_logs(cfg); }};
        case Stage::mine:
            return {cat({p("sessions.jsonl"), p("index.bin")}, corpus), {p("ltr_train.jsonl")},
                    [&] { stage_mine(cfg); }};
        case Stage::train_ltr:
            return {{p("ltr_train.jsonl")},
                    {p("ltr_model.json"), p("ltr_model_noexp.json"), p("train_report.json")},
                    [&] { stage_train_ltr(cfg); }};
        case Stage::evaluate:
            return {{p("ltr_train.jsonl"), p("ltr_model.json"), p("ltr_model_noexp.json")},
                    {p("eval_report.json")},
                    [&] { stage_evaluate(cfg); }};
        case Stage::cohort_auc:
            return {cat({p("index.bin"), p("ef.jsonl")}, corpus), {p("cohort_auc.json"), p("cohort_auc.txt")},
                    [&] { stage_cohort_auc(cfg); }};
        case Stage::ab:
            return {cat({p("index.bin"), p("truth.bin"), p("ltr_model.json"), p("ltr_model_noexp.json")}, corpus),
                    {p("ab_report.json"), p("ab_report.txt")},
                    [&] { stage_ab(cfg); }};
    }
    throw ConfigError("unknown stage");
}

Json digests(const std::vector<fs::path>& paths) {
    Json j = Json::object();
    for (const auto& path : paths) j[path.filename().string()] = io::file_digest(path);
    return j;
}

}  // namespace

StageOutcome run_stage(Stage stage, const PipelineConfig& cfg) {
    const auto spec = spec_for(stage, cfg);
    for (const auto& in : spec.inputs)
        if (!fs::exists(in)) throw MissingArtifact(in.string());
    fs::create_directories(cfg.paths.work_dir);

    const std::string name(to_string(stage));
    const auto config_digest = io::digest(cfg.source.dump());
    const auto inputs = digests(spec.inputs);
    const auto stamp_path = cfg.paths.stamp(stage);

    if (fs::exists(stamp_path)) {
        try {
            const auto stamp = Json::parse(io::read_file(stamp_path));
            bool fresh = stamp.at("config") == config_digest && stamp.at("inputs") == inputs;
            for (const auto& out : spec.outputs) fresh = fresh && fs::exists(out);
            if (fresh && stamp.at("outputs") == digests(spec.outputs)) {
                spdlog::info("[{}] up to date", name);
                return {true, spec.outputs};
            }
        } catch (const std::exception& e) {
            spdlog::debug("[{}] ignoring unreadable stamp: {}", name, e.what());
        }
    }

    for (const auto& [file, d] : inputs.items()) spdlog::info("[{}] input  {} {}", name, file, d.get<std::string>());
    const auto start = std::chrono::steady_clock::now();
    spec.run();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto outputs = digests(spec.outputs);
    for (const auto& [file, d] : outputs.items()) spdlog::info("[{}] output {} {}", name, file, d.get<std::string>());
    spdlog::info("[{}] done in {:.2f}s", name, secs);

    fs::create_directories(stamp_path.parent_path());
    write_json(stamp_path, Json{{"stage", name}, {"config", config_digest}, {"inputs", inputs}, {"outputs", outputs}});
    return {false, spec.outputs};
}

void run_all(const PipelineConfig& cfg) {
    for (Stage s : all_stages()) run_stage(s, cfg);
}

}  // namespace xrank
