#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xrank/pipeline.hpp"

namespace xrank {

struct SearchRequest {
    std::vector<SkillId> skills;
    MemberId searcher = 0;
    MatchMode mode = MatchMode::all;
    std::size_t k = 10;
};

// Rejected request: HTTP status plus the unknown skill names, if any.
class RequestError : public std::runtime_error {
public:
    RequestError(int status, const std::string& what, std::vector<std::string> unknown = {})
        : std::runtime_error(what), status_(status), unknown_(std::move(unknown)) {}
    int status() const { return status_; }
    const std::vector<std::string>& unknown() const { return unknown_; }

private:
    int status_;
    std::vector<std::string> unknown_;
};

// Immutable artifacts needed online: corpus, index, factor model and LTR
// weights. Safe to share across threads.
class SearchEngine {
public:
    static std::unique_ptr<SearchEngine> load(const PipelineConfig& cfg);
    SearchEngine(Corpus corpus, InvertedIndex index, FactorModel factors, SimplexWeights model);

    SearchEngine(const SearchEngine&) = delete;
    SearchEngine& operator=(const SearchEngine&) = delete;

    // Skills may be ids or exact taxonomy names. Throws RequestError.
    SearchRequest parse(const Json& body) const;
    std::vector<Scored> search(const SearchRequest& req) const;
    Json render(const std::vector<Scored>& results) const;

    const Corpus& corpus() const { return corpus_; }
    const SimplexWeights& model() const { return model_; }
    const RankingContext& context() const { return context_; }

private:
    Corpus corpus_;
    InvertedIndex index_;
    FactorModel factors_;
    SimplexWeights model_;
    RankingContext context_;
};

// POST /search and GET /healthz over HTTP/1.1.
class SearchService {
public:
    explicit SearchService(const SearchEngine& engine);
    ~SearchService();

    // Returns the bound port; port 0 picks a free one. Throws ConfigError.
    int bind(const std::string& host, int port);
    void run();  // blocks until stop()
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace xrank
