#include <doctest.h>

#include <filesystem>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "xrank/error.hpp"
#include "xrank/factorize.hpp"
#include "xrank/stats.hpp"

using namespace xrank;

namespace {

struct Planted {
    NormalizedMatrix observed;
    std::vector<SparseEntry> heldout;  // planted values of unobserved cells
};

// Block-structured non-negative factors: each member and skill loads mostly
// on one latent dimension.
Planted planted_blocks(std::size_t m, std::size_t s, std::size_t k, double observed, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n;
    Matrix x(m, k), y(s, k);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t d = 0; d < k; ++d) x(i, d) = d == i % k ? 0.5 + u(rng) : 0.1 * std::abs(n(rng));
    for (std::size_t j = 0; j < s; ++j)
        for (std::size_t d = 0; d < k; ++d) y(j, d) = d == j % k ? 0.5 + u(rng) : 0.1 * std::abs(n(rng));
    Planted p;
    p.observed.members = m;
    p.observed.skills = s;
    for (MemberId i = 0; i < m; ++i)
        for (SkillId j = 0; j < s; ++j) {
            const double v = x.row(i).dot(y.row(j));
            (u(rng) < observed ? p.observed.entries : p.heldout).push_back({i, j, v});
        }
    return p;
}

NormalizedMatrix random_matrix(std::size_t m, std::size_t s, double density, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    NormalizedMatrix e;
    e.members = m;
    e.skills = s;
    for (MemberId i = 0; i < m; ++i)
        for (SkillId j = 0; j < s; ++j)
            if (u(rng) < density) e.entries.push_back({i, j, 6.0 * u(rng)});
    return e;
}

FactorModel model_of(Matrix x, Matrix y) { return FactorModel{std::move(x), std::move(y)}; }

}  // namespace

TEST_SUITE("factorize") {
    TEST_CASE("quantile agrees with the bisection oracle") {
        for (double p : {1e-12, 1e-6, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.97575, 0.999, 1 - 1e-6}) {
            INFO(p);
            CHECK(std::abs(normal_quantile(p) - oracle::quantile(p)) < 1e-9);
        }
        CHECK(normal_quantile(0.5) == 0.0);
        CHECK(std::abs(normal_cdf(normal_quantile(0.8)) - 0.8) < 1e-14);
    }

    TEST_CASE("rankit on three values") {
        const std::vector<double> v{0.2, 0.9, 0.4};
        const auto r = rank_inverse_normal(v);
        CHECK(r[2] == 3.0);
        CHECK(std::abs(r[1] - (3.0 + oracle::quantile(5.0 / 6.0))) < 1e-8);
        CHECK(r[1] == doctest::Approx(3.9674).epsilon(1e-4));
        const std::vector<double> flat{0.4, 0.4, 0.4, 0.4};
        for (double x : rank_inverse_normal(flat)) CHECK(x == 3.0);
        CHECK(rank_inverse_normal(std::vector<double>{7.0})[0] == 3.0);
        CHECK_THROWS_AS(rank_inverse_normal(std::vector<double>{}), DataError);
    }

    TEST_CASE("rankit clamps at zero with a small mean") {
        std::vector<double> v(1000);
        std::iota(v.begin(), v.end(), 0.0);
        const auto r = rank_inverse_normal(v, 1.0, 1.0);
        CHECK(r[0] == 0.0);
        CHECK(r.back() > 3.0);
        const auto ref = oracle::rankit(v, 1.0, 1.0);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(r[i] - ref[i]) < 1e-9);
    }

    TEST_CASE("normalize preserves the known-cell order") {
        SparseExpertise ei;
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (MemberId m = 0; m < 30; ++m)
            for (SkillId s = 0; s < 5; ++s) ei.entries.push_back({m, s, std::round(20 * u(rng)) / 20});
        const auto e = normalize(ei, 30, 5);
        REQUIRE(e.entries.size() == ei.entries.size());
        for (std::size_t i = 0; i < e.entries.size(); ++i) {
            CHECK(e.entries[i].score >= 0.0);
            for (std::size_t j = 0; j < e.entries.size(); ++j)
                if (ei.entries[i].score < ei.entries[j].score) CHECK(e.entries[i].score < e.entries[j].score);
        }
    }

    TEST_CASE("confidence weights") {
        CHECK(confidence(0.7, 40) == 40);
        CHECK(confidence(0.0, 40) == 1);
        CHECK(confidence(-0.0, 40) == 1);
    }

    TEST_CASE("objective plug-in cases") {
        NormalizedMatrix e;
        e.members = 2;
        e.skills = 2;
        e.entries = {{0, 0, 2.0}};
        FactorHyperParams hp;
        hp.alpha = 40;
        hp.lambda_reg = 0.5;
        hp.k = 1;
        Matrix x(2, 1), y(2, 1);
        x << 1, 2;
        y << 3, 0.5;
        // 40(2-3)^2 + 0.5^2 + 6^2 + 1^2 + 0.5 (1 + 4 + 9 + 0.25)
        CHECK(objective(e, model_of(x, y), hp) == doctest::Approx(84.375).epsilon(1e-14));

        const FactorModel zero = model_of(Matrix::Zero(2, 1), Matrix::Zero(2, 1));
        CHECK(objective(e, zero, hp) == doctest::Approx(40 * 4.0));

        NormalizedMatrix full;
        full.members = 2;
        full.skills = 2;
        full.entries = {{0, 0, 3}, {0, 1, 0.5}, {1, 0, 6}, {1, 1, 1}};
        hp.lambda_reg = 0.0;
        CHECK(objective(full, model_of(x, y), hp) == 0.0);
    }

    TEST_CASE("objective matches the cell-by-cell oracle") {
        const auto e = random_matrix(40, 25, 0.2, 3);
        FactorHyperParams hp;
        hp.k = 4;
        const auto fit = als_fit(e, hp);
        const double ref = oracle::objective(e, fit, hp.lambda_reg, hp.alpha);
        CHECK(objective(e, fit, hp) == doctest::Approx(ref).epsilon(1e-10));
    }

    TEST_CASE("exact rank-1 recovery") {
        NormalizedMatrix e;
        e.members = 4;
        e.skills = 3;
        const double u[4] = {1, 2, 0.5, 3}, v[3] = {2, 1, 4};
        for (MemberId m = 0; m < 4; ++m)
            for (SkillId s = 0; s < 3; ++s) e.entries.push_back({m, s, u[m] * v[s]});
        FactorHyperParams hp;
        hp.k = 1;
        hp.lambda_reg = 1e-9;
        const auto fit = als_fit(e, hp);
        for (const auto& c : e.entries) CHECK(std::abs(fit.score(c.member, c.skill) - c.score) < 1e-6);
    }

    TEST_CASE("objective never increases across sweeps") {
        const auto e = random_matrix(50, 40, 0.15, 4);
        FactorHyperParams hp;
        hp.k = 6;
        hp.sweeps = 25;
        AlsReport rep;
        als_fit(e, hp, &rep);
        REQUIRE(rep.objective_trace.size() == hp.sweeps + 1);
        for (std::size_t i = 1; i < rep.objective_trace.size(); ++i)
            CHECK(rep.objective_trace[i] <= rep.objective_trace[i - 1] + 1e-9);
    }

    TEST_CASE("planted block matrix is recovered on held-out cells") {
        std::vector<double> rhos;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const auto p = planted_blocks(50, 30, 3, 0.3, seed);
            FactorHyperParams hp;
            hp.k = 3;
            hp.lambda_reg = 0.1;
            hp.alpha = 40;
            hp.seed = seed;
            const auto fit = als_fit(p.observed, hp);
            std::vector<double> a, b;
            for (const auto& c : p.heldout) {
                a.push_back(fit.score(c.member, c.skill));
                b.push_back(c.score);
            }
            rhos.push_back(stats::spearman(a, b));
        }
        CHECK(stats::median(rhos) >= 0.8);
    }

    TEST_CASE("reconstruction through the relevance gate") {
        SkillTaxonomy tax({{0, "hadoop"}, {1, "hive"}, {2, "mapreduce"}, {3, "painting"}}, {{0, 1, 2}, {3}});
        SparseExpertise ei;
        ei.entries = {{0, 0, 0.9}, {0, 1, 0.8}, {1, 3, 0.7}};
        const auto gate = relevance_gate(tax, ei);
        const CellList want{{0, 0}, {0, 1}, {0, 2}, {1, 3}};
        CHECK(gate == want);

        std::mt19937_64 rng(2);
        std::normal_distribution<double> n;
        Matrix x(2, 3), y(4, 3);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
        for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = n(rng);
        const auto model = model_of(x, y);
        const auto ef = reconstruct(model, gate);
        REQUIRE(ef.size() == 4);
        REQUIRE(ef.find(0, 2) != nullptr);  // never listed, inferred through the group
        for (const auto& c : ef.entries) CHECK(std::abs(c.score - x.row(c.member).dot(y.row(c.skill))) < 1e-12);

        CellList keys;
        for (const auto& c : ei.entries) keys.push_back({c.member, c.skill});
        CHECK(reconstruct(model, keys).size() == ei.size());
    }

    TEST_CASE("multi-skill scores") {
        const std::vector<double> x{1, 2}, y1{0.5, 0}, y2{0, 0.25};
        std::vector<std::span<const double>> ys{y1, y2};
        CHECK(multi_skill_score(x, ys) == 1.0);
        CHECK(projected_query_score(x, ys) == 1.0);
        std::vector<std::span<const double>> one{y1};
        CHECK(multi_skill_score(x, one) == 0.5);

        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(-10, 10);
        for (int t = 0; t < 200; ++t) {
            std::vector<double> a(8);
            std::vector<std::vector<double>> b(5, std::vector<double>(8));
            for (auto& v : a) v = u(rng);
            for (auto& r : b)
                for (auto& v : r) v = u(rng);
            std::vector<std::span<const double>> sp(b.begin(), b.end());
            CHECK(std::abs(multi_skill_score(a, sp) - projected_query_score(a, sp)) < 1e-12 * 4000);
        }
    }

    TEST_CASE("cross-validation bookkeeping") {
        const auto e = random_matrix(40, 20, 0.3, 5);
        FactorHyperParams only;
        only.k = 3;
        const auto one = cross_validate(e, {only});
        CHECK(one.best.k == 3);
        CHECK(one.points.size() == 1);

        const auto cv = cross_validate(e, fixture::cv_grid(1));
        REQUIRE(cv.points.size() == 8);
        for (const auto& p : cv.points) CHECK(p.heldout_spearman <= cv.points[cv.best_index].heldout_spearman);
        CHECK(cv.best.k == cv.points[cv.best_index].hp.k);
        CHECK(cv.best.lambda_reg == cv.points[cv.best_index].hp.lambda_reg);
    }

    TEST_CASE("cross-validation finds the planted rank") {
        std::size_t hits = 0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            GenConfig g;
            g.m = 500;
            g.s = 60;
            g.k_true = 4;
            g.seed = seed;
            const auto o = fixture::scored(g);
            if (cross_validate(o.e, fixture::cv_grid(seed), seed).best.k == g.k_true) ++hits;
        }
        CHECK(hits >= 8);
    }

    TEST_CASE("factor files round trip") {
        Matrix x = Matrix::Random(5, 2), y = Matrix::Random(3, 2);
        const auto path = std::filesystem::temp_directory_path() / "xrank_test_factors.bin";
        save_factors(model_of(x, y), path);
        const auto back = load_factors(path);
        CHECK(back.x == x);
        CHECK(back.y == y);
    }

    TEST_CASE("hyperparameter validation") {
        FactorHyperParams hp;
        hp.k = 0;
        CHECK_THROWS_AS(hp.validate(), ConfigError);
        CHECK_THROWS_AS(factor_params_from_json(Json{{"k", 0}}), ConfigError);
        const auto back = factor_params_from_json(to_json(FactorHyperParams{}));
        CHECK(back.k == 8);
        CHECK(back.alpha == 40);
    }
}
