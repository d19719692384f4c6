#include <doctest.h>

#include <filesystem>
#include <random>

#include "fixtures.hpp"
#include "xrank/error.hpp"
#include "xrank/ltr.hpp"

using namespace xrank;

namespace {

constexpr std::size_t F(RankingFeatureId id) { return static_cast<std::size_t>(id); }

// Three members on a ring of four cells; 0-1 and 1-2 are connected.
struct Tiny {
    Corpus corpus;
    InvertedIndex index;
};

Tiny tiny() {
    Tiny t;
    auto& c = t.corpus;
    c.geo_cells = 4;
    c.taxonomy = SkillTaxonomy({{0, "machine_learning"}, {1, "java"}}, {{0, 1}});
    for (MemberId m = 0; m < 3; ++m) {
        MemberProfile p;
        p.member_id = m;
        c.members.push_back(p);
    }
    c.members[0].title_tokens = {"machine", "learning", "engineer"};
    c.members[0].geo_cell = 1;
    c.members[0].connections = {1};
    c.members[1].title_tokens = {"java", "developer"};
    c.members[1].explicit_skills = {{0, 0.9}};
    c.members[1].geo_cell = 1;
    c.members[1].connections = {0, 2};
    c.members[2].title_tokens = {"painter"};
    c.members[2].geo_cell = 3;
    c.members[2].connections = {1};
    c.members[2].cohort = Cohort::spam;
    DenseExpertise ef;
    ef.entries = {{0, 0, 2.0}, {1, 0, 1.0}, {1, 1, 0.5}, {2, 0, 0.25}};
    t.index = InvertedIndex::build(ef, 3, 2);
    return t;
}

LabeledExample row(std::uint64_t q, MemberId m, std::vector<double> f, int grade) {
    return {q, 0, m, std::move(f), grade};
}

TrainSet planted_set(std::size_t informative, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TrainSet set;
    for (std::uint64_t q = 0; q < 120; ++q) {
        QueryGroup g;
        g.query_id = q;
        for (MemberId m = 0; m < 15; ++m) {
            const int grade = m == 0 ? 2 : static_cast<int>(rng() % 3);
            std::vector<double> f(5);
            for (auto& x : f) x = 2.0 * u(rng);
            f[informative] = grade;
            g.rows.push_back(row(q, m, f, grade));
        }
        set.groups.push_back(std::move(g));
    }
    return set;
}

}  // namespace

TEST_SUITE("ltr") {
    TEST_CASE("ranking features on a hand corpus") {
        const auto t = tiny();
        const RankingContext ctx(t.corpus, t.index);
        const std::vector<SkillId> q{0};
        const auto f0 = ctx.compute(q, 1, 0);
        CHECK(f0[F(RankingFeatureId::geo_proximity)] == 1.0);
        CHECK(f0[F(RankingFeatureId::text_title_match)] == 1.0);
        CHECK(f0[F(RankingFeatureId::social_graph_distance_inv)] == 1.0);
        CHECK(f0[F(RankingFeatureId::spam_free)] == 1.0);
        CHECK(f0[F(RankingFeatureId::expertise_sum)] == t.index.decode(*t.index.lookup(0, 0)));

        const auto f1 = ctx.compute(q, 0, 1);
        CHECK(f1[F(RankingFeatureId::text_title_match)] == 0.0);
        CHECK(f1[F(RankingFeatureId::text_profile_match)] == 1.0);  // listed machine_learning

        const auto f2 = ctx.compute(q, 0, 2);
        CHECK(f2[F(RankingFeatureId::geo_proximity)] == doctest::Approx(1.0 / 3.0));
        CHECK(f2[F(RankingFeatureId::social_graph_distance_inv)] == 0.5);
        CHECK(f2[F(RankingFeatureId::social_common_connections)] == doctest::Approx(1.0));
        CHECK(f2[F(RankingFeatureId::spam_free)] == 0.0);
        CHECK(f2[F(RankingFeatureId::text_title_match)] == 0.0);

        const auto qc = ctx.prepare(q, 0);
        CHECK(ctx.compute(qc, 2, t.index.decode(*t.index.lookup(0, 2))) == f2);
        CHECK_THROWS_AS(ctx.view(9), DataError);
    }

    TEST_CASE("geo proximity on the ring") {
        CHECK(geo_proximity(3, 3, 16) == 1.0);
        CHECK(geo_proximity(0, 15, 16) == 0.5);
        CHECK(geo_proximity(0, 8, 16) == doctest::Approx(1.0 / 9.0));
        CHECK(geo_proximity(2, 5, 16) < geo_proximity(2, 4, 16));
    }

    TEST_CASE("expertise feature matches the factor model") {
        GenConfig g;
        g.m = 300;
        g.s = 40;
        g.seed = 11;
        const auto o = fixture::offline(g, false);
        const RankingContext ctx(o.gc.corpus, *o.index);
        const double eps = o.index->quantization_eps();
        for (const auto& c : o.ef.entries) {
            const std::vector<SkillId> q{c.skill};
            const double want = o.model.score(c.member, c.skill);
            CHECK(std::abs(ctx.compute(q, 0, c.member)[F(RankingFeatureId::expertise_sum)] - want) <= eps);
        }
    }

    TEST_CASE("simplex normalisation") {
        const std::vector<double> w{2, 3, 5};
        CHECK(to_simplex(w).lambda == std::vector<double>{0.2, 0.3, 0.5});
        const std::vector<double> w10{20, 30, 50};
        CHECK(to_simplex(w10).lambda == to_simplex(w).lambda);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(0, 5);
        for (int t = 0; t < 100; ++t) {
            std::vector<double> v(7);
            for (auto& x : v) x = u(rng);
            const auto l = to_simplex(v).lambda;
            CHECK(std::accumulate(l.begin(), l.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        }
        CHECK_THROWS_AS(to_simplex(std::vector<double>{1, -1}), DataError);
        CHECK_THROWS_AS(to_simplex(std::vector<double>{0, 0}), DataError);
        CHECK_THROWS_AS(to_simplex(std::vector<double>{1, NAN}), DataError);
    }

    TEST_CASE("linear scores") {
        const SimplexWeights half{{0.5, 0.5}};
        const std::vector<double> f{2, 4};
        CHECK(score(half, f) == 3.0);
        CHECK_THROWS_AS(score(half, std::vector<double>{1}), DataError);

        const SimplexWeights onehot{{1, 0, 0}};
        std::vector<double> s;
        std::vector<double> expertise{0.3, 0.9, 0.1, 0.5};
        for (double e : expertise) s.push_back(score(onehot, std::vector<double>{e, 1 - e, 7}));
        const std::vector<MemberId> members{0, 1, 2, 3};
        CHECK(rank_order(s, members) == std::vector<std::size_t>{1, 3, 0, 2});
        const std::vector<double> tied{1, 1, 2};
        const std::vector<MemberId> ids{9, 4, 6};
        CHECK(rank_order(tied, ids) == std::vector<std::size_t>{2, 1, 0});
    }

    TEST_CASE("ndcg values") {
        const std::vector<int> ideal{2, 1, 0}, swapped{0, 1}, zeros{0, 0, 0};
        CHECK(ndcg_at_k(ideal, 3) == 1.0);
        CHECK(ndcg_at_k(swapped, 2) == doctest::Approx(0.6309297535714575).epsilon(1e-15));
        CHECK(ndcg_at_k(zeros, 3) == 0.0);
        CHECK_THROWS_AS(ndcg_at_k(ideal, 0), DataError);

        std::mt19937_64 rng(2);
        for (int t = 0; t < 500; ++t) {
            std::vector<int> g(1 + rng() % 12);
            for (auto& x : g) x = static_cast<int>(rng() % 3);
            const std::size_t k = 1 + rng() % 12;
            const double v = ndcg_at_k(g, k);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0 + 1e-15);
            auto sorted = g;
            std::sort(sorted.rbegin(), sorted.rend());
            const bool is_ideal = std::equal(g.begin(), g.begin() + std::min(k, g.size()), sorted.begin());
            if (std::any_of(g.begin(), g.end(), [](int x) { return x > 0; })) CHECK((v == doctest::Approx(1.0)) == is_ideal);
        }
    }

    TEST_CASE("evaluate against oracle scorers") {
        TrainSet set;
        for (std::uint64_t q = 0; q < 4; ++q) {
            QueryGroup g;
            g.query_id = q;
            g.rows = {row(q, 1, {1.0, 0.0}, 1), row(q, 2, {0.0, 1.0}, 0)};
            set.groups.push_back(g);
        }
        CHECK(evaluate(SimplexWeights{{1, 0}}, set, 10) == 1.0);
        CHECK(evaluate(SimplexWeights{{0, 1}}, set, 10) == doctest::Approx(0.6309297535714575));
        CHECK(evaluate(SimplexWeights{{0, 1}}, set, 50) == evaluate(SimplexWeights{{0, 1}}, set, 2));
        const GroupScorer by_grade = [](const QueryGroup& g) {
            std::vector<double> s;
            for (const auto& r : g.rows) s.push_back(r.grade);
            return s;
        };
        CHECK(mean_ndcg(set, by_grade, 10) == 1.0);
        CHECK_THROWS_AS(mean_ndcg(TrainSet{}, by_grade, 10), DataError);
    }

    TEST_CASE("coordinate ascent with a single feature") {
        TrainSet set;
        QueryGroup g;
        g.rows = {row(0, 0, {0.3}, 1), row(0, 1, {0.7}, 0)};
        set.groups.push_back(g);
        const auto res = coordinate_ascent(set, {});
        CHECK(res.weights.lambda == std::vector<double>{1.0});
    }

    TEST_CASE("coordinate ascent finds the planted feature") {
        for (std::size_t informative : {0u, 2u, 4u}) {
            const auto set = planted_set(informative, 10 + informative);
            CoordinateAscentConfig cfg;
            cfg.seed = informative;
            const auto res = coordinate_ascent(set, cfg);
            CHECK(evaluate(res.weights, set, 10) >= 0.99);
            CHECK(res.objective == doctest::Approx(evaluate(res.weights, set, 10)));
            const auto argmax = std::max_element(res.weights.lambda.begin(), res.weights.lambda.end());
            CHECK(static_cast<std::size_t>(argmax - res.weights.lambda.begin()) == informative);
            for (std::size_t i = 1; i < res.trace.size(); ++i) CHECK(res.trace[i] >= res.trace[i - 1]);
            REQUIRE(res.start_objectives.size() == cfg.restarts);
            CHECK(res.objective >= res.start_objectives[res.best_restart]);
            CHECK(res.objective == *std::max_element(res.restart_objectives.begin(), res.restart_objectives.end()));
            CHECK(std::accumulate(res.weights.lambda.begin(), res.weights.lambda.end(), 0.0) ==
                  doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    TEST_CASE("inactive features stay at zero") {
        const auto set = planted_set(1, 3);
        CoordinateAscentConfig cfg;
        cfg.active = {true, false, true, true, true};
        const auto res = coordinate_ascent(set, cfg);
        CHECK(res.weights.lambda[1] == 0.0);
        CHECK(evaluate(res.weights, set, 10) < 0.99);
    }

    TEST_CASE("model files") {
        const SimplexWeights w = to_simplex(std::vector<double>{1, 2, 3, 4, 5, 6, 7});
        const auto path = std::filesystem::temp_directory_path() / "xrank_test_model.json";
        save_model(w, path);
        CHECK(load_model(path).lambda == w.lambda);
        CHECK(model_to_json(w).at("feature_names").size() == kRankingFeatureCount);
        Json bad = model_to_json(w);
        bad["lambda"][0] = 5.0;
        CHECK_THROWS_AS(model_from_json(bad), DataError);
    }
}
