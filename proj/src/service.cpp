#include "xrank/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <chrono>

#include "xrank/error.hpp"

namespace xrank {

std::unique_ptr<SearchEngine> SearchEngine::load(const PipelineConfig& cfg) {
    const auto& p = cfg.paths;
    for (const char* name : {"skills.jsonl", "members.jsonl", "endorsements.jsonl", "index.bin", "factors.bin",
                             "ltr_model.json"})
        if (!std::filesystem::exists(p(name))) throw MissingArtifact(p(name).string());
    return std::make_unique<SearchEngine>(load_corpus(p.work_dir), open_index(p("index.bin")),
                                          load_factors(p("factors.bin")), load_model(p("ltr_model.json")));
}

SearchEngine::SearchEngine(Corpus corpus, InvertedIndex index, FactorModel factors, SimplexWeights model)
    : corpus_(std::move(corpus)),
      index_(std::move(index)),
      factors_(std::move(factors)),
      model_(std::move(model)),
      context_(corpus_, index_) {
    if (static_cast<std::size_t>(factors_.x.rows()) != corpus_.member_count() ||
        static_cast<std::size_t>(factors_.y.rows()) != corpus_.skill_count())
        throw DataError("factor model does not match the corpus");
    if (model_.size() != kRankingFeatureCount) throw DataError("ranking model has the wrong number of weights");
}

SearchRequest SearchEngine::parse(const Json& body) const {
    if (!body.is_object()) throw RequestError(400, "request body must be a JSON object");
    for (const auto& [key, value] : body.items())
        if (key != "skills" && key != "searcher_id" && key != "mode" && key != "k")
            throw RequestError(400, "unknown field: " + key);
    SearchRequest req;
    if (!body.contains("skills") || !body["skills"].is_array() || body["skills"].empty())
        throw RequestError(400, "skills must be a non-empty array");
    std::vector<std::string> unknown;
    for (const auto& s : body["skills"]) {
        if (s.is_number_unsigned() || (s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
            const auto id = s.get<std::uint64_t>();
            if (id < corpus_.skill_count())
                req.skills.push_back(static_cast<SkillId>(id));
            else
                unknown.push_back(std::to_string(id));
        } else if (s.is_string()) {
            if (auto id = corpus_.taxonomy.find(s.get<std::string>()))
                req.skills.push_back(*id);
            else
                unknown.push_back(s.get<std::string>());
        } else {
            throw RequestError(400, "skills entries must be ids or names");
        }
    }
    if (!unknown.empty()) throw RequestError(400, "unknown skill", unknown);

    if (!body.contains("searcher_id") || !body["searcher_id"].is_number_integer())
        throw RequestError(400, "searcher_id must be an integer");
    const auto searcher = body["searcher_id"].get<std::int64_t>();
    if (searcher < 0 || static_cast<std::uint64_t>(searcher) >= corpus_.member_count())
        throw RequestError(400, "unknown searcher_id " + std::to_string(searcher));
    req.searcher = static_cast<MemberId>(searcher);

    if (body.contains("mode")) {
        if (!body["mode"].is_string()) throw RequestError(400, "mode must be \"ALL\" or \"ANY\"");
        try {
            req.mode = match_mode_from_string(body["mode"].get<std::string>());
        } catch (const DataError& e) {
            throw RequestError(400, e.what());
        }
    }
    if (body.contains("k")) {
        if (!body["k"].is_number_integer() || body["k"].get<std::int64_t>() < 1)
            throw RequestError(400, "k must be a positive integer");
        req.k = static_cast<std::size_t>(body["k"].get<std::int64_t>());
    }
    return req;
}

std::vector<Scored> SearchEngine::search(const SearchRequest& req) const {
    auto results = rank_query(context_, model_, req.skills, req.searcher, req.mode);
    if (results.size() > req.k) results.resize(req.k);
    return results;
}

Json SearchEngine::render(const std::vector<Scored>& results) const {
    const auto& names = ranking_feature_names();
    Json out = Json::array();
    for (const auto& r : results) {
        Json breakdown = Json::object();
        for (std::size_t i = 0; i < names.size(); ++i)
            breakdown[std::string(names[i])] = {{"value", r.features[i]},
                                                {"contribution", model_.lambda[i] * r.features[i]}};
        out.push_back({{"member_id", r.member}, {"score", r.score}, {"feature_breakdown", breakdown}});
    }
    return out;
}

struct SearchService::Impl {
    const SearchEngine* engine;
    httplib::Server server;
};

SearchService::SearchService(const SearchEngine& engine) : impl_(std::make_unique<Impl>()) {
    impl_->engine = &engine;
    auto& server = impl_->server;
    // No SO_REUSEPORT: a second instance on a taken port must fail to bind.
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"status\":\"ok\"}", "application/json");
    });
    server.Post("/search", [this](const httplib::Request& req, httplib::Response& res) {
        const auto start = std::chrono::steady_clock::now();
        Json body;
        try {
            const auto parsed = impl_->engine->parse(Json::parse(req.body));
            const auto results = impl_->engine->search(parsed);
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            body = {{"results", impl_->engine->render(results)}, {"latency_ms", ms}};
            res.status = 200;
        } catch (const Json::parse_error& e) {
            body = {{"error", std::string("malformed JSON: ") + e.what()}};
            res.status = 400;
        } catch (const RequestError& e) {
            body = {{"error", e.what()}};
            if (!e.unknown().empty()) body["unknown"] = e.unknown();
            res.status = e.status();
        } catch (const std::exception& e) {
            spdlog::error("search failed: {}", e.what());
            body = {{"error", e.what()}};
            res.status = 500;
        }
        res.set_content(body.dump(), "application/json");
    });
}

SearchService::~SearchService() { stop(); }

int SearchService::bind(const std::string& host, int port) {
    auto& server = impl_->server;
    const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void SearchService::run() { impl_->server.listen_after_bind(); }

void SearchService::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace xrank
