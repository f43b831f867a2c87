#pragma once

// Screening stages: relevance (is this about a software failure?) and
// analyzability (does it carry enough detail to analyze?).

#include <string>

#include "failmine/model.hpp"
#include "failmine/prompts.hpp"
#include "failmine/providers.hpp"

namespace failmine {

struct ScreenPromptPair {
    std::string relevance_template;      // one {article} slot
    std::string analyzability_template;  // one {article} slot
};

inline ScreenPromptPair default_screen_prompts() {
    const auto& catalog = default_prompt_catalog();
    return {catalog.relevance, catalog.analyzability};
}

// Scans the first line for a standalone true/false/yes/no token,
// case-insensitive. yes -> true, no -> false. Anything else is unparseable.
inline TriState parse_boolean_verdict(const std::string& response) {
    auto lines = split_lines(response);
    if (lines.empty()) return TriState::Unparseable;
    std::string first = to_lower(lines.front());
    // Tokenize on non-alphanumeric characters.
    std::string token;
    auto classify = [](const std::string& t) -> std::optional<TriState> {
        if (t == "true" || t == "yes") return TriState::True;
        if (t == "false" || t == "no") return TriState::False;
        return std::nullopt;
    };
    for (size_t i = 0; i <= first.size(); ++i) {
        if (i < first.size() && std::isalnum(static_cast<unsigned char>(first[i]))) {
            token += first[i];
        } else if (!token.empty()) {
            if (auto v = classify(token)) return *v;
            token.clear();
        }
    }
    return TriState::Unparseable;
}

namespace detail {

inline std::string render_article_slot(const std::string& tmpl, const Article& article) {
    return render_template(tmpl, {{"article", article.title + "\n\n" + article.body}});
}

inline ScreeningVerdict classify_with(const std::string& tmpl, const char* op,
                                      const Article& article, CompletionProvider& provider,
                                      Ledger& ledger, int max_attempts) {
    CompletionRequest req;
    req.prompt = detail::render_article_slot(tmpl, article);
    req.tag = std::string(op) + "|article:" + std::to_string(article.id);
    ScreeningVerdict v;
    v.article_id = article.id;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        v.raw_response = provider.complete(req, ledger);
        v.attempts = attempt;
        TriState parsed = parse_boolean_verdict(v.raw_response);
        if (parsed != TriState::Unparseable) {
            v.relevant = parsed;
            return v;
        }
    }
    v.relevant = TriState::Unparseable;
    return v;
}

}  // namespace detail

// Step 2. Requires a successfully scraped article with a non-empty body.
inline ScreeningVerdict classify_relevance(const Article& article, CompletionProvider& provider,
                                           Ledger& ledger,
                                           const ScreenPromptPair& prompts = default_screen_prompts(),
                                           int max_attempts = 3) {
    if (!article.scraped_ok || article.body.empty())
        throw ConfigError("classify_relevance requires a scraped article with a body");
    return detail::classify_with(prompts.relevance_template, "relevance", article, provider,
                                 ledger, max_attempts);
}

// Step 3. Requires a prior relevant=true verdict; fills in `analyzable` on a
// copy of that verdict.
inline ScreeningVerdict classify_analyzability(const Article& article,
                                               const ScreeningVerdict& prior,
                                               CompletionProvider& provider, Ledger& ledger,
                                               const ScreenPromptPair& prompts = default_screen_prompts(),
                                               int max_attempts = 3) {
    if (prior.article_id != article.id)
        throw ConfigError("classify_analyzability: verdict belongs to a different article");
    if (prior.relevant != TriState::True)
        throw ConfigError("classify_analyzability requires relevant=true");
    ScreeningVerdict step3 = detail::classify_with(prompts.analyzability_template, "analyzability",
                                                   article, provider, ledger, max_attempts);
    ScreeningVerdict merged = prior;
    merged.analyzable = step3.relevant;
    merged.raw_response = step3.raw_response;
    merged.attempts = step3.attempts;
    return merged;
}

}  // namespace failmine
