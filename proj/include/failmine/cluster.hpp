#pragma once

// Incremental merge of analyzable articles into incidents:
// summarize -> embed -> cosine against every incident's representative
// embedding -> candidates at or above the threshold, best first -> model
// confirmation in order -> first "true" merges, otherwise a new incident.
//
// The stage is strictly sequential: the outcome for one article changes the
// candidate set for the next.

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "failmine/model.hpp"
#include "failmine/prompts.hpp"
#include "failmine/providers.hpp"
#include "failmine/screen.hpp"
#include "failmine/vectorstore.hpp"

namespace failmine {

struct MergeConfig {
    double similarity_threshold = 0.80;  // on unit-normalized summary embeddings
    int max_candidates = 5;
    std::string confirmation_prompt_template;  // {summary_a} and {summary_b} slots
    std::string summary_prompt_template;       // {article} slot
    // When set, only incidents with a member article published within this
    // many days of the new article are candidates. Off by default.
    std::optional<int> candidate_window_days;

    MergeConfig() {
        const auto& catalog = default_prompt_catalog();
        confirmation_prompt_template = catalog.confirm_same_incident;
        summary_prompt_template = catalog.article_summary;
    }

    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        if (!(similarity_threshold > 0.0 && similarity_threshold < 1.0))
            problems.push_back("similarity_threshold must be in (0, 1)");
        if (max_candidates < 1) problems.push_back("max_candidates must be positive");
        return problems;
    }
};

// Audit record for one assignment decision.
struct MergeTrace {
    ArticleId article_id = 0;
    std::vector<std::pair<IncidentId, double>> candidates;     // descending score
    std::vector<std::pair<IncidentId, bool>> confirmations;    // in scan order
    bool created_new = false;
    IncidentId incident_id = 0;  // merged-into id, or the new incident's id

    friend bool operator==(const MergeTrace&, const MergeTrace&) = default;
};

inline Json encode(const MergeTrace& t) {
    Json j;
    j["article_id"] = t.article_id;
    Json cands = Json::array();
    for (const auto& [id, score] : t.candidates)
        cands.push_back(Json{{"incident_id", id}, {"score", score}});
    j["candidates"] = cands;
    Json confs = Json::array();
    for (const auto& [id, verdict] : t.confirmations)
        confs.push_back(Json{{"incident_id", id}, {"verdict", verdict}});
    j["confirmations"] = confs;
    j["created_new"] = t.created_new;
    j["incident_id"] = t.incident_id;
    return j;
}

inline MergeTrace decode_merge_trace(const Json& j) {
    MergeTrace t;
    t.article_id = j.at("article_id").get<ArticleId>();
    for (const auto& c : j.at("candidates"))
        t.candidates.emplace_back(c.at("incident_id").get<IncidentId>(),
                                  c.at("score").get<double>());
    for (const auto& c : j.at("confirmations"))
        t.confirmations.emplace_back(c.at("incident_id").get<IncidentId>(),
                                     c.at("verdict").get<bool>());
    t.created_new = j.at("created_new").get<bool>();
    t.incident_id = j.at("incident_id").get<IncidentId>();
    return t;
}

// Step 4a: one-paragraph failure summary of a single article.
inline std::string summarize_article(const Article& article, CompletionProvider& provider,
                                     Ledger& ledger,
                                     const std::string& tmpl = MergeConfig().summary_prompt_template) {
    if (article.body.empty()) throw ConfigError("summarize_article requires a non-empty body");
    CompletionRequest req;
    req.prompt = render_template(tmpl, {{"article", article.title + "\n\n" + article.body}});
    req.tag = "summary|article:" + std::to_string(article.id);
    return provider.complete(req, ledger);
}

// Step 4c: follow-up model check. An unparseable answer counts as "not the
// same incident", so doubt creates a new incident instead of polluting an
// existing one.
inline bool confirm_same_incident(const std::string& article_summary,
                                  const std::string& incident_summary,
                                  CompletionProvider& provider, Ledger& ledger,
                                  const std::string& tmpl = MergeConfig().confirmation_prompt_template,
                                  const std::string& tag = "confirm") {
    if (article_summary.empty() || incident_summary.empty())
        throw ConfigError("confirm_same_incident requires two non-empty summaries");
    CompletionRequest req;
    req.prompt = render_template(tmpl, {{"summary_a", article_summary},
                                        {"summary_b", incident_summary}});
    req.tag = "confirm|" + tag;
    std::string response = provider.complete(req, ledger);
    return parse_boolean_verdict(response) == TriState::True;
}

struct Assignment {
    MergeTrace trace;
    std::string summary;
    EmbeddingVector embedding;
};

// Decides where an article belongs, given the current incident list. Does not
// mutate anything; the store applies the outcome. `eligible` is the optional
// candidate filter (the time-window knob); incidents it rejects are never
// scored.
inline Assignment plan_assignment(
    const Article& article, const std::vector<Incident>& incidents, const MergeConfig& config,
    CompletionProvider& completions, EmbeddingProvider& embedder, Ledger& ledger,
    const std::function<bool(const Incident&)>& eligible = {}) {
    auto problems = config.validate();
    if (!problems.empty()) throw ConfigError("invalid merge config: " + problems.front());

    Assignment out;
    out.trace.article_id = article.id;
    out.summary = summarize_article(article, completions, ledger, config.summary_prompt_template);
    out.embedding = embedder.embed(out.summary, ledger);

    std::vector<std::pair<IncidentId, double>> scored;
    for (const auto& incident : incidents) {
        if (eligible && !eligible(incident)) continue;
        double score =
            cosine_similarity(out.embedding.components, incident.representative_embedding);
        if (score >= config.similarity_threshold) scored.emplace_back(incident.id, score);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > static_cast<size_t>(config.max_candidates))
        scored.resize(static_cast<size_t>(config.max_candidates));
    out.trace.candidates = scored;

    for (const auto& [incident_id, score] : scored) {
        const Incident* candidate = nullptr;
        for (const auto& inc : incidents)
            if (inc.id == incident_id) candidate = &inc;
        bool same = confirm_same_incident(out.summary, candidate->representative_summary,
                                          completions, ledger, config.confirmation_prompt_template,
                                          "article:" + std::to_string(article.id) + "/incident:" +
                                              std::to_string(incident_id));
        out.trace.confirmations.emplace_back(incident_id, same);
        if (same) {
            out.trace.created_new = false;
            out.trace.incident_id = incident_id;
            return out;
        }
    }
    out.trace.created_new = true;
    out.trace.incident_id = 0;  // allocated by the store on commit
    return out;
}

}  // namespace failmine
