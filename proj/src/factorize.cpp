#include "xrank/factorize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Cholesky>

#include "xrank/error.hpp"
#include "xrank/stats.hpp"

namespace xrank {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw DataError("normal_quantile: p outside [0,1]");
    }
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            ((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r + 6.7265770927008700853e4) * r +
                4.5921953931549871457e4) * r + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0;
        const double den =
            ((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r + 3.9307895800092710610e4) * r +
                2.1213794301586595867e4) * r + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0;
        return q * num / den;
    }
    double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            ((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
                1.27045825245236838258e0) * r + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
             4.63033784615654529590e0) * r + 1.42343711074968357734e0;
        const double den =
            ((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
                1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
             2.05319162663775882187e0) * r + 1.0;
        val = num / den;
    } else {
        r -= 5.0;
        const double num =
            ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
                2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
             5.46378491116411436990e0) * r + 6.65790464350110377720e0;
        const double den =
            ((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
                7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
             5.99832206555887937690e-1) * r + 1.0;
        val = num / den;
    }
    return q < 0.0 ? -val : val;
}

std::vector<double> rank_inverse_normal(std::span<const double> scores, double mu, double sigma) {
    if (scores.empty()) throw DataError("rank_inverse_normal: empty input");
    if (!(sigma > 0.0)) throw ConfigError("rank_inverse_normal: sigma must be positive");
    const auto ranks = stats::average_ranks(scores);
    const double n = static_cast<double>(scores.size());
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        out[i] = std::max(0.0, mu + sigma * normal_quantile((ranks[i] - 0.5) / n));
    return out;
}

NormalizedMatrix normalize(const SparseExpertise& ei, std::size_t members, std::size_t skills, double mu,
                           double sigma) {
    NormalizedMatrix out;
    out.members = members;
    out.skills = skills;
    out.mu = mu;
    out.sigma = sigma;
    std::vector<double> raw;
    raw.reserve(ei.size());
    for (const auto& e : ei.entries) {
        if (e.member >= members || e.skill >= skills) throw DataError("normalize: entry outside m x s");
        raw.push_back(e.score);
    }
    const auto values = rank_inverse_normal(raw, mu, sigma);
    out.entries = ei.entries;
    for (std::size_t i = 0; i < values.size(); ++i) out.entries[i].score = values[i];
    return out;
}

void FactorHyperParams::validate() const {
    if (k == 0) throw ConfigError("factorize: k must be >= 1");
    if (!(lambda_reg >= 0.0)) throw ConfigError("factorize: lambda_reg must be >= 0");
    if (!(alpha >= 1.0)) throw ConfigError("factorize: alpha must be >= 1");
}

Json to_json(const FactorHyperParams& hp) {
    return Json{{"k", hp.k}, {"lambda_reg", hp.lambda_reg}, {"alpha", hp.alpha}, {"sweeps", hp.sweeps},
                {"seed", hp.seed}};
}

FactorHyperParams factor_params_from_json(const Json& j) {
    FactorHyperParams hp;
    try {
        hp.k = j.value("k", hp.k);
        hp.lambda_reg = j.value("lambda_reg", hp.lambda_reg);
        hp.alpha = j.value("alpha", hp.alpha);
        hp.sweeps = j.value("sweeps", hp.sweeps);
        hp.seed = j.value("seed", hp.seed);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("factorize config: ") + e.what());
    }
    hp.validate();
    return hp;
}

std::span<const double> FactorModel::member_vector(MemberId m) const {
    if (m >= x.rows()) throw DataError("unknown member id " + std::to_string(m));
    return {x.data() + static_cast<std::size_t>(m) * k(), k()};
}

std::span<const double> FactorModel::skill_vector(SkillId s) const {
    if (s >= y.rows()) throw DataError("unknown skill id " + std::to_string(s));
    return {y.data() + static_cast<std::size_t>(s) * k(), k()};
}

void save_factors(const FactorModel& model, const std::filesystem::path& path) {
    io::write_matrices(path, {model.x, model.y});
}

FactorModel load_factors(const std::filesystem::path& path) {
    auto ms = io::read_matrices(path);
    if (ms.size() != 2 || ms[0].cols() != ms[1].cols())
        throw DataError(path.string() + ": expected member and skill factor blocks");
    return {std::move(ms[0]), std::move(ms[1])};
}

double objective(const NormalizedMatrix& e, const FactorModel& model, const FactorHyperParams& hp) {
    if (static_cast<std::size_t>(model.x.rows()) != e.members || static_cast<std::size_t>(model.y.rows()) != e.skills ||
        model.x.cols() != model.y.cols())
        throw DataError("objective: factor dimensions do not match the matrix");
    const std::size_t k = model.k();

    // Sum over all cells of (x.y)^2 = <X'X, Y'Y>_F, then correct the known cells.
    long double total = 0.0L;
    const Matrix gx = model.x.transpose() * model.x;
    const Matrix gy = model.y.transpose() * model.y;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) total += static_cast<long double>(gx(a, b)) * gy(a, b);
    for (const auto& c : e.entries) {
        const long double pred = model.score(c.member, c.skill);
        const long double resid = c.score - pred;
        total += confidence(c.score, hp.alpha) * resid * resid - pred * pred;
    }
    long double reg = 0.0L;
    for (Eigen::Index i = 0; i < model.x.size(); ++i) reg += static_cast<long double>(model.x.data()[i]) * model.x.data()[i];
    for (Eigen::Index i = 0; i < model.y.size(); ++i) reg += static_cast<long double>(model.y.data()[i]) * model.y.data()[i];
    return static_cast<double>(total + static_cast<long double>(hp.lambda_reg) * reg);
}

namespace {

struct Cell {
    std::uint32_t other;
    double value;
};

// Rows of the known-cell pattern, by member or by skill.
std::vector<std::vector<Cell>> rows_of(const NormalizedMatrix& e, bool by_member) {
    std::vector<std::vector<Cell>> rows(by_member ? e.members : e.skills);
    for (const auto& c : e.entries) {
        if (by_member)
            rows[c.member].push_back({c.skill, c.score});
        else
            rows[c.skill].push_back({c.member, c.score});
    }
    return rows;
}

// Solves every row of `target` against the fixed factors `fixed`.
void half_sweep(Matrix& target, const Matrix& fixed, const std::vector<std::vector<Cell>>& rows,
                const FactorHyperParams& hp, AlsReport* report) {
    const auto k = static_cast<Eigen::Index>(target.cols());
    const Matrix gram = fixed.transpose() * fixed;
    Matrix a(k, k);
    Vector b(k);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        a = gram;
        a.diagonal().array() += hp.lambda_reg;
        b.setZero();
        for (const auto& cell : rows[r]) {
            const auto y = fixed.row(cell.other).transpose();
            const double c = confidence(cell.value, hp.alpha);
            if (c != 1.0) a.noalias() += (c - 1.0) * y * y.transpose();
            b.noalias() += c * cell.value * y;
        }
        Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success) {
            const double eps = 1e-8 * (a.diagonal().cwiseAbs().maxCoeff() + 1.0);
            a.diagonal().array() += eps;
            llt.compute(a);
            if (report) ++report->ridge_retries;
            if (llt.info() != Eigen::Success) throw DataError("als: singular row system after ridge retry");
        }
        target.row(static_cast<Eigen::Index>(r)) = llt.solve(b).transpose();
    }
}

}  // namespace

FactorModel als_fit(const NormalizedMatrix& e, const FactorHyperParams& hp, AlsReport* report) {
    hp.validate();
    if (e.entries.empty()) throw DataError("als: no known entries");
    const auto k = static_cast<Eigen::Index>(hp.k);
    FactorModel model{Matrix(e.members, k), Matrix(e.skills, k)};
    std::mt19937_64 rng(hp.seed);
    std::uniform_real_distribution<double> init(0.0, 0.1);
    for (Eigen::Index i = 0; i < model.x.size(); ++i) model.x.data()[i] = init(rng);
    for (Eigen::Index i = 0; i < model.y.size(); ++i) model.y.data()[i] = init(rng);

    const auto by_member = rows_of(e, true);
    const auto by_skill = rows_of(e, false);
    if (report) report->objective_trace.push_back(objective(e, model, hp));
    for (std::size_t sweep = 0; sweep < hp.sweeps; ++sweep) {
        half_sweep(model.x, model.y, by_member, hp, report);
        half_sweep(model.y, model.x, by_skill, hp, report);
        if (report) report->objective_trace.push_back(objective(e, model, hp));
    }
    return model;
}

CellList relevance_gate(const SkillTaxonomy& taxonomy, const SparseExpertise& ei) {
    std::set<std::pair<MemberId, SkillId>> cells;
    for (const auto& e : ei.entries) {
        cells.insert({e.member, e.skill});
        for (auto g : taxonomy.groups_of(e.skill))
            for (SkillId s : taxonomy.groups()[g]) cells.insert({e.member, s});
    }
    return {cells.begin(), cells.end()};
}

DenseExpertise reconstruct(const FactorModel& model, const CellList& gate) {
    DenseExpertise out;
    out.entries.reserve(gate.size());
    for (const auto& [m, s] : gate) {
        if (m >= model.x.rows()) throw DataError("reconstruct: unknown member id " + std::to_string(m));
        if (s >= model.y.rows()) throw DataError("reconstruct: unknown skill id " + std::to_string(s));
        out.entries.push_back({m, s, model.score(m, s)});
    }
    std::sort(out.entries.begin(), out.entries.end(), [](const SparseEntry& a, const SparseEntry& b) {
        return std::make_pair(a.member, a.skill) < std::make_pair(b.member, b.skill);
    });
    return out;
}

double multi_skill_score(std::span<const double> member, const std::vector<std::span<const double>>& skills) {
    if (skills.empty()) throw DataError("multi_skill_score: empty skill list");
    double total = 0.0;
    for (const auto& y : skills) {
        if (y.size() != member.size()) throw DataError("multi_skill_score: dimension mismatch");
        double d = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) d += member[i] * y[i];
        total += d;
    }
    return total;
}

double projected_query_score(std::span<const double> member, const std::vector<std::span<const double>>& skills) {
    if (skills.empty()) throw DataError("projected_query_score: empty skill list");
    std::vector<double> query(member.size(), 0.0);
    for (const auto& y : skills) {
        if (y.size() != member.size()) throw DataError("projected_query_score: dimension mismatch");
        for (std::size_t i = 0; i < y.size(); ++i) query[i] += y[i];
    }
    double d = 0.0;
    for (std::size_t i = 0; i < query.size(); ++i) d += member[i] * query[i];
    return d;
}

CvResult cross_validate(const NormalizedMatrix& e, const std::vector<FactorHyperParams>& grid, std::uint64_t seed,
                        double holdout_fraction) {
    if (grid.empty()) throw ConfigError("cross_validate: empty grid");
    const auto held = static_cast<std::size_t>(std::floor(holdout_fraction * e.entries.size()));
    if (held < 2 || held >= e.entries.size()) throw DataError("cross_validate: too few known cells to hold out");

    std::vector<std::size_t> order(e.entries.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> is_held(e.entries.size(), false);
    for (std::size_t i = 0; i < held; ++i) is_held[order[i]] = true;

    NormalizedMatrix train = e;
    train.entries.clear();
    std::vector<SparseEntry> heldout;
    for (std::size_t i = 0; i < e.entries.size(); ++i)
        (is_held[i] ? heldout : train.entries).push_back(e.entries[i]);

    CvResult result;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const auto model = als_fit(train, grid[gi]);
        std::vector<double> pred, truth;
        for (const auto& c : heldout) {
            pred.push_back(model.score(c.member, c.skill));
            truth.push_back(c.score);
        }
        const double rho = stats::spearman(pred, truth);
        result.points.push_back({grid[gi], rho});
        if (gi == 0 || rho > result.points[result.best_index].heldout_spearman) result.best_index = gi;
    }
    result.best = result.points[result.best_index].hp;
    return result;
}

}  // namespace xrank
