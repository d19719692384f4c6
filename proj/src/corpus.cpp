#include "xrank/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "xrank/error.hpp"

namespace xrank {

namespace {

constexpr std::array<std::string_view, kCohortCount> kCohortNames{
    "influencer", "very_senior", "in_demand", "strata", "apache", "spam", "regular"};

constexpr std::array<std::string_view, 12> kDomainWords{
    "data", "web",     "cloud", "mobile",    "security", "finance",
    "sales", "design", "legal", "marketing", "hardware", "health"};

// Home-factor multiplier per cohort; expert cohorts sit in the top quantile.
constexpr std::array<double, kCohortCount> kLevel{3.0, 2.5, 2.1, 1.8, 1.5, 0.0, 1.0};

const std::array<std::string_view, 6> kQualifiers{"associate", "", "senior", "principal",
                                                  "director", "chief"};

double abs_normal(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return std::abs(n(rng));
}

double uniform(std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::uint32_t poisson(std::mt19937_64& rng, double mean) {
    if (mean <= 0.0) return 0;
    return static_cast<std::uint32_t>(std::poisson_distribution<std::uint32_t>(mean)(rng));
}

std::string domain_word(std::size_t g) {
    std::string w(kDomainWords[g % kDomainWords.size()]);
    if (g >= kDomainWords.size()) w += std::to_string(g / kDomainWords.size());
    return w;
}

// Relevance of each listed skill = average rank of its expertise among the
// member's listed skills, scaled so the top skill gets 1.
void assign_relevance(std::vector<ExplicitSkill>& skills, const std::vector<double>& expertise) {
    const std::size_t n = skills.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return expertise[a] < expertise[b]; });
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && expertise[order[j + 1]] == expertise[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) skills[order[t]].relevance = avg_rank / static_cast<double>(n);
        i = j + 1;
    }
}

Json member_to_json(const MemberProfile& p) {
    Json skills = Json::array();
    for (const auto& e : p.explicit_skills) skills.push_back(Json::array({e.skill, e.relevance}));
    return Json{{"member_id", p.member_id},
                {"title_tokens", p.title_tokens},
                {"seniority_years", p.seniority_years},
                {"authority_level", p.authority_level},
                {"geo_cell", p.geo_cell},
                {"connections", p.connections},
                {"explicit_skills", skills},
                {"cohort", std::string(to_string(p.cohort))},
                {"inbound_contacts", p.inbound_contacts},
                {"content_engagement", p.content_engagement}};
}

MemberProfile member_from_json(const Json& j) {
    MemberProfile p;
    p.member_id = j.at("member_id").get<MemberId>();
    p.title_tokens = j.at("title_tokens").get<std::vector<std::string>>();
    p.seniority_years = j.at("seniority_years").get<double>();
    p.authority_level = j.at("authority_level").get<int>();
    p.geo_cell = j.at("geo_cell").get<std::uint32_t>();
    p.connections = j.at("connections").get<std::vector<MemberId>>();
    for (const auto& e : j.at("explicit_skills"))
        p.explicit_skills.push_back({e.at(0).get<SkillId>(), e.at(1).get<double>()});
    p.cohort = cohort_from_string(j.at("cohort").get<std::string>());
    p.inbound_contacts = j.at("inbound_contacts").get<std::uint32_t>();
    p.content_engagement = j.at("content_engagement").get<std::uint32_t>();
    return p;
}

}  // namespace

std::string_view to_string(Cohort c) { return kCohortNames.at(static_cast<std::size_t>(c)); }

Cohort cohort_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kCohortNames.size(); ++i)
        if (kCohortNames[i] == name) return static_cast<Cohort>(i);
    throw DataError("unknown cohort: " + std::string(name));
}

bool is_expert_cohort(Cohort c) { return c != Cohort::spam && c != Cohort::regular; }

SkillTaxonomy::SkillTaxonomy(std::vector<Skill> skills, std::vector<std::vector<SkillId>> groups)
    : skills_(std::move(skills)), groups_(std::move(groups)), membership_(skills_.size()) {
    for (std::size_t i = 0; i < skills_.size(); ++i) {
        if (skills_[i].id != i) throw DataError("skill ids must be dense and ordered");
        if (!by_name_.emplace(skills_[i].name, skills_[i].id).second)
            throw DataError("duplicate skill name: " + skills_[i].name);
    }
    for (std::size_t g = 0; g < groups_.size(); ++g)
        for (SkillId s : groups_[g]) {
            if (s >= skills_.size()) throw DataError("group references unknown skill");
            membership_[s].push_back(static_cast<std::uint32_t>(g));
        }
    for (std::size_t i = 0; i < skills_.size(); ++i)
        if (membership_[i].empty()) throw DataError("skill " + skills_[i].name + " has no group");
}

std::optional<SkillId> SkillTaxonomy::find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> SkillTaxonomy::tokens(SkillId id) const {
    std::vector<std::string> out;
    const std::string& name = skill(id).name;
    std::size_t start = 0;
    while (start <= name.size()) {
        auto end = name.find('_', start);
        if (end == std::string::npos) end = name.size();
        if (end > start) out.push_back(name.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

std::uint32_t PlantedTruth::home_group(MemberId m) const {
    Eigen::Index best = 0;
    x_true.row(m).maxCoeff(&best);
    return static_cast<std::uint32_t>(best);
}

void GenConfig::validate() const {
    if (m == 0) throw ConfigError("m must be positive");
    if (s == 0 || s > 40000) throw ConfigError("s must be in [1, 40000]");
    if (k_true == 0 || k_true > s) throw ConfigError("k_true must be in [1, s]");
    double total = 0.0;
    for (double f : cohort_mix) {
        if (!(f >= 0.0)) throw ConfigError("cohort_mix fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("cohort_mix must sum to 1");
    if (!(explicit_skill_rate > 0.0 && explicit_skill_rate <= 1.0))
        throw ConfigError("explicit_skill_rate must be in (0, 1]");
    if (!(endorsement_rate >= 0.0)) throw ConfigError("endorsement_rate must be non-negative");
    if (geo_cells == 0) throw ConfigError("geo_cells must be positive");
    if (!(mean_connections >= 0.0)) throw ConfigError("mean_connections must be non-negative");
}

Json to_json(const GenConfig& cfg) {
    Json mix = Json::object();
    for (std::size_t i = 0; i < kCohortCount; ++i) mix[std::string(kCohortNames[i])] = cfg.cohort_mix[i];
    return Json{{"m", cfg.m},
                {"s", cfg.s},
                {"k_true", cfg.k_true},
                {"seed", cfg.seed},
                {"cohort_mix", mix},
                {"explicit_skill_rate", cfg.explicit_skill_rate},
                {"endorsement_rate", cfg.endorsement_rate},
                {"geo_cells", cfg.geo_cells},
                {"mean_connections", cfg.mean_connections}};
}

GenConfig gen_config_from_json(const Json& j) {
    GenConfig cfg;
    try {
        cfg.m = j.value("m", cfg.m);
        cfg.s = j.value("s", cfg.s);
        cfg.k_true = j.value("k_true", cfg.k_true);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("cohort_mix")) {
            cfg.cohort_mix.fill(0.0);
            for (const auto& [name, frac] : j.at("cohort_mix").items())
                cfg.cohort_mix[static_cast<std::size_t>(cohort_from_string(name))] = frac.get<double>();
        }
        cfg.explicit_skill_rate = j.value("explicit_skill_rate", cfg.explicit_skill_rate);
        cfg.endorsement_rate = j.value("endorsement_rate", cfg.endorsement_rate);
        cfg.geo_cells = j.value("geo_cells", cfg.geo_cells);
        cfg.mean_connections = j.value("mean_connections", cfg.mean_connections);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("generator config: ") + e.what());
    } catch (const DataError& e) {
        throw ConfigError(std::string("generator config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

GeneratedCorpus generate_corpus(const GenConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const std::size_t m = cfg.m, s = cfg.s, k = cfg.k_true;

    // Skills: group g <-> latent dimension g.
    std::vector<Skill> skills;
    std::vector<std::vector<SkillId>> groups(k);
    for (std::size_t j = 0; j < s; ++j) {
        const std::size_t g = j % k;
        skills.push_back({static_cast<SkillId>(j), domain_word(g) + "_s" + std::to_string(j)});
        groups[g].push_back(static_cast<SkillId>(j));
    }

    PlantedTruth truth{Matrix(m, k), Matrix(s, k)};
    for (std::size_t j = 0; j < s; ++j)
        for (std::size_t d = 0; d < k; ++d)
            truth.y_true(j, d) = d == j % k ? 0.6 + 0.8 * uniform(rng) : 0.08 * abs_normal(rng);

    // Cohort assignment and home groups.
    std::discrete_distribution<std::size_t> cohort_dist(cfg.cohort_mix.begin(), cfg.cohort_mix.end());
    std::vector<Cohort> cohorts(m);
    std::vector<std::uint32_t> home(m);
    for (std::size_t i = 0; i < m; ++i) {
        cohorts[i] = static_cast<Cohort>(cohort_dist(rng));
        home[i] = static_cast<std::uint32_t>(rng() % k);
    }

    for (std::size_t i = 0; i < m; ++i) {
        const Cohort c = cohorts[i];
        if (c == Cohort::spam) {
            for (std::size_t d = 0; d < k; ++d) truth.x_true(i, d) = 0.15 * abs_normal(rng);
            continue;
        }
        const double level = kLevel[static_cast<std::size_t>(c)];
        const double home_value =
            c == Cohort::regular ? 0.2 + 0.8 * abs_normal(rng) : level * (0.8 + 0.4 * uniform(rng));
        for (std::size_t d = 0; d < k; ++d) truth.x_true(i, d) = 0.1 * abs_normal(rng);
        if (k > 1 && uniform(rng) < 0.3) {
            std::size_t second = rng() % (k - 1);
            if (second >= home[i]) ++second;
            truth.x_true(i, second) = std::max(truth.x_true(i, second), 0.5 * home_value * uniform(rng));
        }
        truth.x_true(i, home[i]) =
            std::max(home_value, truth.x_true.row(i).maxCoeff() + 1e-3);
    }

    Corpus corpus;
    corpus.taxonomy = SkillTaxonomy(std::move(skills), std::move(groups));
    corpus.geo_cells = cfg.geo_cells;
    corpus.members.resize(m);

    std::vector<std::vector<MemberId>> by_group(k);
    std::vector<std::vector<MemberId>> by_geo(cfg.geo_cells);
    for (std::size_t i = 0; i < m; ++i) {
        auto& p = corpus.members[i];
        p.member_id = static_cast<MemberId>(i);
        p.cohort = cohorts[i];
        p.geo_cell = static_cast<std::uint32_t>(rng() % cfg.geo_cells);
        by_group[truth.home_group(p.member_id)].push_back(p.member_id);
        by_geo[p.geo_cell].push_back(p.member_id);
    }

    for (std::size_t i = 0; i < m; ++i) {
        auto& p = corpus.members[i];
        const double hv = truth.x_true(i, truth.home_group(p.member_id));
        const Cohort c = p.cohort;

        // Explicit skills: listing probability grows with true expertise.
        std::vector<std::pair<double, SkillId>> listed;
        if (c == Cohort::spam) {
            const std::size_t want = std::min<std::size_t>(s, 3 + rng() % 10);
            std::set<SkillId> picked;
            while (picked.size() < want) picked.insert(static_cast<SkillId>(rng() % s));
            for (SkillId j : picked) listed.emplace_back(truth.expertise(p.member_id, j), j);
        } else {
            for (std::size_t j = 0; j < s; ++j) {
                const double e = truth.expertise(p.member_id, static_cast<SkillId>(j));
                const double prob = cfg.explicit_skill_rate * e * e / (e * e + 0.25);
                if (uniform(rng) < prob) listed.emplace_back(e, static_cast<SkillId>(j));
            }
            if (listed.empty()) {
                SkillId best = 0;
                for (std::size_t j = 1; j < s; ++j)
                    if (truth.expertise(p.member_id, static_cast<SkillId>(j)) >
                        truth.expertise(p.member_id, best))
                        best = static_cast<SkillId>(j);
                listed.emplace_back(truth.expertise(p.member_id, best), best);
            }
            if (listed.size() > kMaxExplicitSkills) {
                std::sort(listed.begin(), listed.end(), [](const auto& a, const auto& b) {
                    return a.first != b.first ? a.first > b.first : a.second < b.second;
                });
                listed.resize(kMaxExplicitSkills);
            }
        }
        std::sort(listed.begin(), listed.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        std::vector<double> exps;
        for (const auto& [e, j] : listed) {
            p.explicit_skills.push_back({j, 0.0});
            exps.push_back(e);
        }
        assign_relevance(p.explicit_skills, exps);

        // Profile attributes, each loosely tracking the home-factor strength.
        switch (c) {
            case Cohort::very_senior: p.seniority_years = 20.0 + 10.0 * uniform(rng); break;
            case Cohort::influencer: p.seniority_years = 12.0 + 10.0 * uniform(rng); break;
            case Cohort::strata: p.seniority_years = 8.0 + 8.0 * uniform(rng); break;
            case Cohort::apache: p.seniority_years = 7.0 + 8.0 * uniform(rng); break;
            case Cohort::in_demand: p.seniority_years = 6.0 + 8.0 * uniform(rng); break;
            case Cohort::spam: p.seniority_years = 0.5 + 2.0 * uniform(rng); break;
            case Cohort::regular: p.seniority_years = 1.0 + 8.0 * uniform(rng) + 4.0 * hv; break;
        }
        std::normal_distribution<double> jitter(0.0, 0.7);
        int authority = static_cast<int>(std::lround(p.seniority_years / 6.0 + jitter(rng)));
        if (c == Cohort::influencer) ++authority;
        if (c == Cohort::spam) authority = 0;
        p.authority_level = std::clamp(authority, 0, 5);

        const double demand = c == Cohort::in_demand ? 3.0 : 1.0;
        p.inbound_contacts = c == Cohort::spam ? poisson(rng, 0.5) : poisson(rng, 1.0 + 4.0 * demand * hv * hv);
        if (c == Cohort::influencer)
            p.content_engagement = poisson(rng, 200.0 * hv);
        else if (c != Cohort::spam && uniform(rng) < 0.1)
            p.content_engagement = poisson(rng, 5.0);

        const std::uint32_t title_group = c == Cohort::spam ? static_cast<std::uint32_t>(rng() % k)
                                                            : truth.home_group(p.member_id);
        const auto qualifier = kQualifiers[static_cast<std::size_t>(p.authority_level)];
        if (!qualifier.empty()) p.title_tokens.emplace_back(qualifier);
        p.title_tokens.push_back(domain_word(title_group));
        p.title_tokens.emplace_back(p.authority_level >= 4 ? "manager" : "engineer");
    }

    // Social graph with homophily on home group and geography.
    std::vector<std::set<MemberId>> adj(m);
    if (m > 1) {
        for (std::size_t i = 0; i < m; ++i) {
            const auto& p = corpus.members[i];
            const std::uint32_t want = cohorts[i] == Cohort::spam
                                           ? poisson(rng, 0.25 * cfg.mean_connections)
                                           : poisson(rng, 0.5 * cfg.mean_connections);
            for (std::uint32_t t = 0; t < want; ++t) {
                const double r = uniform(rng);
                const std::vector<MemberId>* pool = nullptr;
                if (r < 0.5)
                    pool = &by_group[truth.home_group(p.member_id)];
                else if (r < 0.8)
                    pool = &by_geo[p.geo_cell];
                MemberId other = pool && !pool->empty() ? (*pool)[rng() % pool->size()]
                                                        : static_cast<MemberId>(rng() % m);
                if (other == p.member_id) continue;
                adj[i].insert(other);
                adj[other].insert(p.member_id);
            }
        }
    }
    for (std::size_t i = 0; i < m; ++i)
        corpus.members[i].connections.assign(adj[i].begin(), adj[i].end());

    // Endorsements on listed skills, more numerous for stronger experts.
    for (std::size_t i = 0; i < m && m > 1; ++i) {
        const auto& p = corpus.members[i];
        for (const auto& es : p.explicit_skills) {
            const double e = truth.expertise(p.member_id, es.skill);
            const double mean = p.cohort == Cohort::spam ? 0.2 : cfg.endorsement_rate * e * e;
            const std::uint32_t count = poisson(rng, mean);
            std::set<MemberId> endorsers;
            for (std::uint32_t t = 0; t < count; ++t) {
                MemberId who = p.connections.empty() ? static_cast<MemberId>(rng() % m)
                                                     : p.connections[rng() % p.connections.size()];
                if (who != p.member_id) endorsers.insert(who);
            }
            for (MemberId who : endorsers) corpus.endorsements.edges.push_back({who, p.member_id, es.skill});
        }
    }

    return {std::move(corpus), std::move(truth)};
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::vector<Json> skill_rows;
    skill_rows.push_back(Json{{"kind", "meta"}, {"geo_cells", corpus.geo_cells}});
    for (const auto& sk : corpus.taxonomy.skills())
        skill_rows.push_back(Json{{"kind", "skill"}, {"skill_id", sk.id}, {"name", sk.name}});
    for (const auto& g : corpus.taxonomy.groups())
        skill_rows.push_back(Json{{"kind", "group"}, {"skills", g}});

    std::vector<Json> member_rows;
    member_rows.reserve(corpus.members.size());
    for (const auto& p : corpus.members) member_rows.push_back(member_to_json(p));

    std::vector<Json> edge_rows;
    edge_rows.reserve(corpus.endorsements.edges.size());
    for (const auto& e : corpus.endorsements.edges)
        edge_rows.push_back(Json{{"endorser", e.endorser}, {"endorsee", e.endorsee}, {"skill", e.skill}});

    io::atomic_write(dir / "skills.jsonl", io::to_jsonl(skill_rows));
    io::atomic_write(dir / "members.jsonl", io::to_jsonl(member_rows));
    io::atomic_write(dir / "endorsements.jsonl", io::to_jsonl(edge_rows));
}

Corpus load_corpus(const std::filesystem::path& dir) {
    Corpus corpus;
    std::vector<Skill> skills;
    std::vector<std::vector<SkillId>> groups;
    const auto skills_path = dir / "skills.jsonl";
    io::for_each_jsonl(skills_path, [&](std::size_t line, const Json& j) {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "meta") {
            corpus.geo_cells = j.at("geo_cells").get<std::uint32_t>();
        } else if (kind == "skill") {
            skills.push_back({j.at("skill_id").get<SkillId>(), j.at("name").get<std::string>()});
        } else if (kind == "group") {
            groups.push_back(j.at("skills").get<std::vector<SkillId>>());
        } else {
            throw ParseError(skills_path.string(), line, "unknown record kind '" + kind + "'");
        }
    });
    if (skills.empty()) throw DataError("empty corpus: no skills in " + skills_path.string());
    corpus.taxonomy = SkillTaxonomy(std::move(skills), std::move(groups));

    const auto members_path = dir / "members.jsonl";
    io::for_each_jsonl(members_path, [&](std::size_t line, const Json& j) {
        auto p = member_from_json(j);
        if (p.member_id != corpus.members.size())
            throw ParseError(members_path.string(), line, "member ids must be dense and ordered");
        if (p.explicit_skills.size() > kMaxExplicitSkills)
            throw ParseError(members_path.string(), line, "more than 50 explicit skills");
        for (const auto& es : p.explicit_skills) {
            if (es.skill >= corpus.taxonomy.size())
                throw ParseError(members_path.string(), line, "explicit skill not in taxonomy");
            if (!(es.relevance >= 0.0 && es.relevance <= 1.0))
                throw ParseError(members_path.string(), line, "relevance outside [0,1]");
        }
        corpus.members.push_back(std::move(p));
    });
    if (corpus.members.empty()) throw DataError("empty corpus: no members in " + members_path.string());
    for (const auto& p : corpus.members)
        for (MemberId c : p.connections)
            if (c >= corpus.members.size()) throw DataError("connection to unknown member");

    const auto edges_path = dir / "endorsements.jsonl";
    io::for_each_jsonl(edges_path, [&](std::size_t line, const Json& j) {
        Endorsement e{j.at("endorser").get<MemberId>(), j.at("endorsee").get<MemberId>(),
                      j.at("skill").get<SkillId>()};
        if (e.endorser == e.endorsee) throw ParseError(edges_path.string(), line, "self-endorsement");
        if (e.endorser >= corpus.members.size() || e.endorsee >= corpus.members.size() ||
            e.skill >= corpus.taxonomy.size())
            throw ParseError(edges_path.string(), line, "endorsement references unknown entity");
        corpus.endorsements.edges.push_back(e);
    });
    return corpus;
}

void save_truth(const PlantedTruth& truth, const std::filesystem::path& path) {
    io::write_matrices(path, {truth.x_true, truth.y_true});
}

PlantedTruth load_truth(const std::filesystem::path& path) {
    auto ms = io::read_matrices(path);
    if (ms.size() != 2 || ms[0].cols() != ms[1].cols())
        throw DataError(path.string() + ": expected member and skill factor blocks");
    return {std::move(ms[0]), std::move(ms[1])};
}

}  // namespace xrank
