#pragma once

// Report generation: assemble per-incident context (every article verbatim
// when the incident fits the word budget, retrieved chunks otherwise) and run
// the prompt catalog over it — title, summary, nine open postmortem fields,
// and sixteen taxonomy fields coded in two stages.

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "failmine/model.hpp"
#include "failmine/prompts.hpp"
#include "failmine/providers.hpp"
#include "failmine/screen.hpp"
#include "failmine/store.hpp"
#include "failmine/vectorstore.hpp"

namespace failmine {

struct AnalyzeConfig {
    std::int64_t budget_words = 12000;  // full-context cutoff, measured in words
    int top_k = 8;                      // chunks retrieved per prompt in rag mode
    int max_attempts = 3;
};

struct IncidentContext {
    enum class Mode { Full, Rag };
    Mode mode = Mode::Full;
    std::string text;
    std::vector<ArticleId> contributing;  // article ids present in the context
    std::vector<Chunk> provenance;        // selected chunks when mode == Rag
};

namespace detail {

inline std::int64_t total_member_words(const std::vector<const Article*>& members) {
    std::int64_t total = 0;
    for (const Article* a : members) total += a->word_count;
    return total;
}

inline std::string article_header(const Article& a) {
    std::string h = "Article " + std::to_string(a.id);
    if (a.published_at) h += " (published " + date_to_string(*a.published_at) + ")";
    return h;
}

}  // namespace detail

// Full mode iff the incident's total body word count is within the budget
// (a total exactly equal to the budget still fits). Rag mode embeds the
// rendered field prompt and retrieves the top-k chunks for the incident.
inline IncidentContext build_context(const Incident& incident,
                                     const std::vector<const Article*>& members,
                                     const std::string& field_prompt,
                                     const AnalyzeConfig& config, const VectorStore* store,
                                     EmbeddingProvider* embedder, Ledger* ledger) {
    if (members.empty()) throw ConfigError("build_context: incident has no articles");
    IncidentContext ctx;
    if (detail::total_member_words(members) <= config.budget_words) {
        ctx.mode = IncidentContext::Mode::Full;
        for (const Article* a : members) {
            if (!ctx.text.empty()) ctx.text += "\n\n";
            ctx.text += detail::article_header(*a) + ":\n" + a->body;
            ctx.contributing.push_back(a->id);
        }
        return ctx;
    }
    if (!store || !embedder || !ledger)
        throw ConfigError("build_context: rag mode requires a vector store and embedder");
    ctx.mode = IncidentContext::Mode::Rag;
    EmbeddingVector query = embedder->embed(field_prompt, *ledger);
    ctx.provenance = store->query_top_k(incident.id, query, config.top_k);
    ArticleId current = -1;
    for (const Chunk& c : ctx.provenance) {
        if (c.article_id != current) {
            current = c.article_id;
            ctx.contributing.push_back(c.article_id);
        }
        if (!ctx.text.empty()) ctx.text += "\n\n";
        ctx.text += "Article " + std::to_string(c.article_id) + " [chunk " +
                    std::to_string(c.order_index) + "]:\n" + c.text;
    }
    return ctx;
}

namespace detail {

// Citations look like [12, 34]; ids outside the incident are dropped with a
// warning rather than failing the field.
inline std::vector<ArticleId> parse_citations(const std::string& text,
                                              const std::set<ArticleId>& members,
                                              std::vector<std::string>* warnings) {
    std::vector<ArticleId> out;
    std::set<ArticleId> seen;
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '[') {
            ++i;
            continue;
        }
        size_t close = text.find(']', i);
        if (close == std::string::npos) break;
        std::string inside = text.substr(i + 1, close - i - 1);
        bool digits_only = !inside.empty() &&
                           inside.find_first_not_of("0123456789, ") == std::string::npos &&
                           inside.find_first_of("0123456789") != std::string::npos;
        if (digits_only) {
            size_t start = 0;
            while (start < inside.size()) {
                size_t comma = inside.find(',', start);
                std::string tok = trim(inside.substr(
                    start, comma == std::string::npos ? std::string::npos : comma - start));
                if (!tok.empty()) {
                    ArticleId id = std::stoll(tok);
                    if (!members.count(id)) {
                        if (warnings)
                            warnings->push_back("dropped citation to non-member article " +
                                                std::to_string(id));
                    } else if (seen.insert(id).second) {
                        out.push_back(id);
                    }
                }
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
        }
        i = close + 1;
    }
    return out;
}

inline std::vector<std::string> parse_quotes(const std::string& text) {
    std::vector<std::string> quotes;
    for (const auto& line : split_lines(text)) {
        if (line.rfind("> ", 0) == 0) quotes.push_back(trim(line.substr(2)));
    }
    return quotes;
}

inline std::string complete_field(const Incident& incident, const std::string& field,
                                  const std::string& prompt, CompletionProvider& provider,
                                  Ledger& ledger) {
    CompletionRequest req;
    req.prompt = prompt;
    req.tag = field + "|incident:" + std::to_string(incident.id) + "/" + field;
    return provider.complete(req, ledger);
}

}  // namespace detail

// One open postmortem field: numbered facts plus citations and quotes.
inline OpenField extract_open_field(const Incident& incident,
                                    const std::vector<const Article*>& members,
                                    const std::string& field, CompletionProvider& provider,
                                    const AnalyzeConfig& config, const VectorStore* store,
                                    EmbeddingProvider* embedder, Ledger& ledger,
                                    std::vector<std::string>* warnings = nullptr,
                                    IncidentContext* used_context = nullptr) {
    const auto& catalog = default_prompt_catalog();
    auto it = catalog.open_fields.find(field);
    if (it == catalog.open_fields.end()) throw ConfigError("unknown open field " + field);

    const std::string question = render_template(it->second, {{"context", ""}});
    IncidentContext ctx = build_context(incident, members, question, config, store, embedder, &ledger);
    if (used_context) *used_context = ctx;
    const std::string prompt = render_template(it->second, {{"context", ctx.text}});
    std::string response = detail::complete_field(incident, field, prompt, provider, ledger);

    OpenField out;
    out.text = response;
    std::set<ArticleId> memberset(incident.article_ids.begin(), incident.article_ids.end());
    if (to_lower(trim(response)) == "unknown") {
        out.unknown = true;
        return out;
    }
    out.citations = detail::parse_citations(response, memberset, warnings);
    out.quotes = detail::parse_quotes(response);
    if (out.citations.empty()) out.flagged = true;  // kept, but citation-free
    return out;
}

// The timeline field: chain-of-thought date arithmetic ending in an
// "ANSWER: <date expression>" line. An unparseable final answer keeps the raw
// text and flags the field.
inline OpenField estimate_timeline(const Incident& incident,
                                   const std::vector<const Article*>& members,
                                   CompletionProvider& provider, const AnalyzeConfig& config,
                                   const VectorStore* store, EmbeddingProvider* embedder,
                                   Ledger& ledger,
                                   std::vector<std::string>* warnings = nullptr) {
    const auto& catalog = default_prompt_catalog();
    const std::string& tmpl = catalog.open_fields.at("timeline");
    const std::string question = render_template(tmpl, {{"context", ""}});
    IncidentContext ctx = build_context(incident, members, question, config, store, embedder, &ledger);
    const std::string prompt = render_template(tmpl, {{"context", ctx.text}});
    std::string response = detail::complete_field(incident, "timeline", prompt, provider, ledger);

    OpenField out;
    std::set<ArticleId> memberset(incident.article_ids.begin(), incident.article_ids.end());
    out.citations = detail::parse_citations(response, memberset, warnings);
    std::optional<std::string> answer;
    for (const auto& line : split_lines(response)) {
        std::string t = trim(line);
        if (to_lower(t).rfind("answer:", 0) == 0) answer = trim(t.substr(7));
    }
    if (answer && !answer->empty()) {
        out.text = *answer;
        if (to_lower(*answer) == "unknown") out.unknown = true;
    } else {
        out.text = response;
        out.flagged = true;
    }
    return out;
}

// Two-stage taxonomy coding: stage A extracts per-option evidence, stage B
// marks each option yes/no/unknown. Supported options become the selections;
// all-unknown leaves the field unknown.
inline TaxonomyField code_taxonomy_field(const Incident& incident,
                                         const std::vector<const Article*>& members,
                                         const std::string& field, CompletionProvider& provider,
                                         const AnalyzeConfig& config, const VectorStore* store,
                                         EmbeddingProvider* embedder, Ledger& ledger) {
    const TaxonomyFieldSpec* spec = find_taxonomy_field(field);
    if (!spec) throw ConfigError("unknown taxonomy field " + field);
    const auto& catalog = default_prompt_catalog();

    std::string options;
    for (size_t i = 0; i < spec->options.size(); ++i) {
        if (i) options += ", ";
        options += spec->options[i];
    }

    // Stage A: evidence extraction.
    const std::string question = render_template(
        catalog.taxonomy_stage_a,
        {{"field_label", spec->name}, {"definition", spec->definition}, {"options", options},
         {"context", ""}});
    IncidentContext ctx = build_context(incident, members, question, config, store, embedder, &ledger);
    const std::string stage_a_prompt = render_template(
        catalog.taxonomy_stage_a,
        {{"field_label", spec->name}, {"definition", spec->definition}, {"options", options},
         {"context", ctx.text}});
    std::string evidence =
        detail::complete_field(incident, field + ".evidence", stage_a_prompt, provider, ledger);

    TaxonomyField out;
    for (const auto& line : split_lines(evidence)) {
        std::string t = trim(line);
        if (to_lower(t).rfind("option ", 0) != 0) continue;
        auto colon = t.find(':');
        if (colon == std::string::npos) continue;
        std::string name = to_lower(trim(t.substr(7, colon - 7)));
        for (const auto& opt : spec->options)
            if (to_lower(opt) == name) out.evidence[opt] = trim(t.substr(colon + 1));
    }

    // Stage B: option marking, retried on unparseable output.
    const std::string stage_b_prompt =
        render_template(catalog.taxonomy_stage_b.at(field), {{"evidence", evidence}});
    for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
        std::string marks =
            detail::complete_field(incident, field + ".mark", stage_b_prompt, provider, ledger);
        std::vector<std::string> selections;
        bool any_parsed = false, any_concrete = false;
        for (const auto& opt : spec->options) {
            for (const auto& line : split_lines(marks)) {
                std::string t = to_lower(trim(line));
                if (t.rfind(to_lower(opt) + ":", 0) != 0) continue;
                std::string verdict = trim(t.substr(opt.size() + 1));
                if (verdict.rfind("yes", 0) == 0) {
                    selections.push_back(opt);
                    any_parsed = any_concrete = true;
                } else if (verdict.rfind("no", 0) == 0) {
                    any_parsed = any_concrete = true;
                } else if (verdict.rfind("unknown", 0) == 0) {
                    any_parsed = true;
                }
                break;
            }
        }
        if (!any_parsed) continue;  // retry
        // The domain catalog carries an explicit "unknown" option. Marked on
        // its own it is the field's unknown flag; marked alongside concrete
        // options it is dropped.
        if (selections.size() > 1)
            selections.erase(std::remove(selections.begin(), selections.end(), "unknown"),
                             selections.end());
        if (selections.size() == 1 && selections.front() == "unknown") {
            out.unknown = true;
        } else if (selections.empty() && !any_concrete) {
            out.unknown = true;  // every option came back unknown
        } else {
            out.selections = std::move(selections);
        }
        return out;
    }
    out.unknown = true;
    out.flagged = true;
    return out;
}

class ReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Runs the full catalog for one incident and returns a validated report.
// Individual provider failures flag their field; more than half failing
// aborts with the failed field list, and nothing is committed.
inline FailureReport generate_report(const Incident& incident,
                                     const std::vector<const Article*>& members,
                                     CompletionProvider& provider, EmbeddingProvider& embedder,
                                     const VectorStore& store, const AnalyzeConfig& config,
                                     Ledger& ledger,
                                     std::vector<std::string>* warnings = nullptr) {
    if (members.empty()) throw ConfigError("generate_report: incident has no member articles");
    FailureReport report;
    report.incident_id = incident.id;
    const bool rag = detail::total_member_words(members) > config.budget_words;
    report.context_mode = rag ? "rag" : "full";

    std::vector<std::string> failed;
    const auto& catalog = default_prompt_catalog();

    auto header_field = [&](const std::string& name, const std::string& tmpl) -> std::string {
        IncidentContext ctx = build_context(incident, members,
                                            render_template(tmpl, {{"context", ""}}), config,
                                            &store, &embedder, &ledger);
        return detail::complete_field(incident, name,
                                      render_template(tmpl, {{"context", ctx.text}}), provider,
                                      ledger);
    };
    try {
        report.title = trim(header_field("title", catalog.title));
    } catch (const std::exception&) {
        failed.push_back("title");
    }
    try {
        report.summary = trim(header_field("summary", catalog.incident_summary));
    } catch (const std::exception&) {
        failed.push_back("summary");
    }

    for (const auto& field : open_field_names()) {
        try {
            if (field == "timeline")
                report.open[field] = estimate_timeline(incident, members, provider, config,
                                                       &store, &embedder, ledger, warnings);
            else
                report.open[field] = extract_open_field(incident, members, field, provider,
                                                        config, &store, &embedder, ledger,
                                                        warnings);
        } catch (const std::exception&) {
            OpenField f;
            f.unknown = true;
            f.flagged = true;
            report.open[field] = f;
            failed.push_back(field);
        }
    }

    bool cps_false = false;
    for (const auto& spec : taxonomy_catalog()) {
        const bool gated = spec.name == "perception" || spec.name == "communication" ||
                           spec.name == "application";
        if (gated && cps_false) {
            TaxonomyField f;
            f.selections = {"na"};
            report.taxonomy[spec.name] = f;
            continue;
        }
        try {
            TaxonomyField f = code_taxonomy_field(incident, members, spec.name, provider, config,
                                                  &store, &embedder, ledger);
            if (spec.name == "cps")
                cps_false = f.selections.size() == 1 && f.selections.front() == "false";
            report.taxonomy[spec.name] = std::move(f);
        } catch (const std::exception&) {
            TaxonomyField f;
            f.unknown = true;
            f.flagged = true;
            report.taxonomy[spec.name] = f;
            failed.push_back(spec.name);
        }
    }

    const size_t total_fields = 2 + open_field_names().size() + taxonomy_catalog().size();
    if (failed.size() * 2 > total_fields) {
        std::string msg = "report generation failed for incident " + std::to_string(incident.id) +
                          "; failed fields:";
        for (const auto& f : failed) msg += " " + f;
        throw ReportError(msg);
    }
    return report;
}

}  // namespace failmine
