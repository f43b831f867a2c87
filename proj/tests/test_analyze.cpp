#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "failmine/analyze.hpp"
#include "support/temp_dir.hpp"

using namespace failmine;

namespace {

// Completion provider driven by a test lambda; logs every request tag.
class FnProvider : public CompletionProvider {
public:
    explicit FnProvider(std::function<std::string(const CompletionRequest&)> fn)
        : fn_(std::move(fn)) {}
    std::string id() const override { return "fn"; }
    std::string complete(const CompletionRequest& req, Ledger& ledger) override {
        tags.push_back(req.tag);
        UsageRecord rec;
        split_tag(req.tag, rec.op, rec.tag);
        rec.provider = id();
        rec.prompt_tokens = estimate_tokens(req.prompt);
        ledger.append(std::move(rec));
        return fn_(req);
    }
    std::vector<std::string> tags;

private:
    std::function<std::string(const CompletionRequest&)> fn_;
};

Article member(ArticleId id, int words, const std::string& noun) {
    Article a;
    a.id = id;
    a.title = "about " + noun;
    a.body.clear();
    for (int i = 0; i < words; ++i) {
        if (i) a.body += (i % 40 == 0) ? std::string("\n\n") : std::string(" ");
        a.body += noun + std::to_string(i % 7);
    }
    a.scraped_ok = true;
    a.word_count = word_count(a.body);
    a.published_at = Date{2021, 7, 3};
    return a;
}

struct AnalyzeHarness {
    testsupport::TempDir tmp;
    HashEmbeddingProvider embedder;
    Ledger ledger;
    VectorStore store;
    Incident incident;
    std::vector<Article> storage;
    std::vector<const Article*> members;
    AnalyzeConfig config;

    AnalyzeHarness(int words_per_article = 120) {
        store = VectorStore::open(tmp / "v.bin", embedder.dimension());
        storage.push_back(member(11, words_per_article, "fare"));
        storage.push_back(member(12, words_per_article, "refund"));
        incident.id = 1;
        incident.article_ids = {11, 12};
        incident.representative_summary = "fare summary";
        incident.representative_embedding =
            embedder.embed("fare summary", ledger).components;
        incident.created_at = "2024-01-01T00:00:00Z";
        incident.per_article_summaries = {{11, "fare summary"}, {12, "refund summary"}};
        for (const auto& a : storage) members.push_back(&a);
        for (const auto& a : storage)
            store.upsert_chunks(incident.id, a.id, chunk_article(a), embedder, ledger);
    }
};

}  // namespace

TEST_CASE_METHOD(AnalyzeHarness, "build_context picks full mode within the word budget") {
    IncidentContext ctx = build_context(incident, members, "question", config, &store, &embedder,
                                        &ledger);
    CHECK(ctx.mode == IncidentContext::Mode::Full);
    CHECK(ctx.contributing == std::vector<ArticleId>{11, 12});
    CHECK(ctx.text.find("Article 11 (published 2021-07-03):") != std::string::npos);
    CHECK(ctx.text.find("Article 12") != std::string::npos);
    CHECK(ctx.text.find(storage[0].body.substr(0, 30)) != std::string::npos);
}

TEST_CASE_METHOD(AnalyzeHarness, "build_context boundary: exactly the budget stays full") {
    const std::int64_t total = storage[0].word_count + storage[1].word_count;
    SECTION("total == budget -> full") {
        config.budget_words = total;
        CHECK(build_context(incident, members, "q", config, &store, &embedder, &ledger).mode ==
              IncidentContext::Mode::Full);
    }
    SECTION("total > budget -> rag") {
        config.budget_words = total - 1;
        IncidentContext ctx =
            build_context(incident, members, "q about fare3", config, &store, &embedder, &ledger);
        CHECK(ctx.mode == IncidentContext::Mode::Rag);
        CHECK(ctx.provenance.size() ==
              std::min(static_cast<size_t>(config.top_k), store.size()));
        CHECK(ctx.text.find("[chunk ") != std::string::npos);
        // Provenance chunks group by article, ascending order_index.
        for (size_t i = 1; i < ctx.provenance.size(); ++i) {
            if (ctx.provenance[i - 1].article_id == ctx.provenance[i].article_id)
                CHECK(ctx.provenance[i - 1].order_index < ctx.provenance[i].order_index);
        }
    }
    SECTION("budget zero forces rag") {
        config.budget_words = 0;
        CHECK(build_context(incident, members, "q", config, &store, &embedder, &ledger).mode ==
              IncidentContext::Mode::Rag);
    }
    SECTION("rag without a store is a config error") {
        config.budget_words = 0;
        CHECK_THROWS_AS(build_context(incident, members, "q", config, nullptr, nullptr, nullptr),
                        ConfigError);
    }
}

TEST_CASE_METHOD(AnalyzeHarness, "extract_open_field parses facts, citations, and quotes") {
    SECTION("citations to members are kept in order, outsiders dropped with a warning") {
        FnProvider provider([](const CompletionRequest&) {
            return std::string("1. Fare machines failed [11, 99]\n2. Refunds pending [12, 11]\n"
                               "> a supporting quote");
        });
        std::vector<std::string> warnings;
        OpenField f = extract_open_field(incident, members, "system", provider, config, &store,
                                         &embedder, ledger, &warnings);
        CHECK(f.citations == std::vector<ArticleId>{11, 12});
        REQUIRE(f.quotes.size() == 1);
        CHECK(f.quotes[0] == "a supporting quote");
        CHECK_FALSE(f.unknown);
        CHECK_FALSE(f.flagged);
        REQUIRE(warnings.size() == 1);
        CHECK(warnings[0].find("99") != std::string::npos);
    }
    SECTION("an unknown answer sets the unknown flag") {
        FnProvider provider([](const CompletionRequest&) { return std::string("unknown"); });
        OpenField f = extract_open_field(incident, members, "impacts", provider, config, &store,
                                         &embedder, ledger);
        CHECK(f.unknown);
        CHECK(f.citations.empty());
    }
    SECTION("a citation-free answer is kept but flagged") {
        FnProvider provider(
            [](const CompletionRequest&) { return std::string("1. something happened"); });
        OpenField f = extract_open_field(incident, members, "impacts", provider, config, &store,
                                         &embedder, ledger);
        CHECK_FALSE(f.unknown);
        CHECK(f.flagged);
    }
    SECTION("unknown field names are rejected") {
        FnProvider provider([](const CompletionRequest&) { return std::string("x"); });
        CHECK_THROWS_AS(extract_open_field(incident, members, "nonexistent", provider, config,
                                           &store, &embedder, ledger),
                        ConfigError);
    }
}

TEST_CASE_METHOD(AnalyzeHarness, "estimate_timeline parses the final ANSWER line") {
    SECTION("date arithmetic walk ending in an answer") {
        FnProvider provider([](const CompletionRequest&) {
            return std::string("Step: published 2021-07-03, the article says last month.\n"
                               "Step: the month before July 2021 is June 2021.\n"
                               "ANSWER: June 2021");
        });
        OpenField f =
            estimate_timeline(incident, members, provider, config, &store, &embedder, ledger);
        CHECK(f.text == "June 2021");
        CHECK_FALSE(f.flagged);
        CHECK_FALSE(f.unknown);
    }
    SECTION("no ANSWER line keeps the raw text flagged") {
        FnProvider provider(
            [](const CompletionRequest&) { return std::string("no conclusion reached"); });
        OpenField f =
            estimate_timeline(incident, members, provider, config, &store, &embedder, ledger);
        CHECK(f.text == "no conclusion reached");
        CHECK(f.flagged);
    }
    SECTION("ANSWER: unknown marks the field unknown") {
        FnProvider provider([](const CompletionRequest&) { return std::string("ANSWER: unknown"); });
        OpenField f =
            estimate_timeline(incident, members, provider, config, &store, &embedder, ledger);
        CHECK(f.unknown);
    }
}

TEST_CASE_METHOD(AnalyzeHarness, "code_taxonomy_field runs two stages") {
    SECTION("stage A evidence and stage B marks combine into selections") {
        FnProvider provider([](const CompletionRequest& req) -> std::string {
            if (req.prompt.find("extract the information relevant") != std::string::npos)
                return "OPTION design: the update was mis-designed\nOPTION operation: none";
            return "design: yes\noperation: no";
        });
        TaxonomyField f = code_taxonomy_field(incident, members, "phase", provider, config, &store,
                                              &embedder, ledger);
        CHECK(f.selections == std::vector<std::string>{"design"});
        CHECK(f.evidence.at("design") == "the update was mis-designed");
        CHECK(f.evidence.at("operation") == "none");
        CHECK_FALSE(f.unknown);
    }
    SECTION("multi-label selections are preserved") {
        FnProvider provider([](const CompletionRequest& req) -> std::string {
            if (req.prompt.find("extract the information") != std::string::npos)
                return "OPTION one_organization: evidence a\nOPTION multiple_organizations: evidence b";
            return "one_organization: yes\nmultiple_organizations: yes";
        });
        TaxonomyField f = code_taxonomy_field(incident, members, "recurring", provider, config,
                                              &store, &embedder, ledger);
        CHECK(f.selections ==
              std::vector<std::string>{"one_organization", "multiple_organizations"});
    }
    SECTION("all-unknown marks the field unknown") {
        FnProvider provider([](const CompletionRequest& req) -> std::string {
            if (req.prompt.find("extract the information") != std::string::npos)
                return "OPTION design: none\nOPTION operation: none";
            return "design: unknown\noperation: unknown";
        });
        TaxonomyField f = code_taxonomy_field(incident, members, "phase", provider, config, &store,
                                              &embedder, ledger);
        CHECK(f.unknown);
        CHECK(f.selections.empty());
    }
    SECTION("persistent stage-B gibberish flags the field unknown") {
        int stage_b_calls = 0;
        FnProvider provider([&](const CompletionRequest& req) -> std::string {
            if (req.prompt.find("extract the information") != std::string::npos)
                return "OPTION design: something";
            ++stage_b_calls;
            return "entirely unrelated prose";
        });
        TaxonomyField f = code_taxonomy_field(incident, members, "phase", provider, config, &store,
                                              &embedder, ledger);
        CHECK(f.unknown);
        CHECK(f.flagged);
        CHECK(stage_b_calls == config.max_attempts);
    }
}

namespace {

std::string default_report_answer(const CompletionRequest& req) {
    const std::string& p = req.prompt;
    if (p.find("Write a single-line headline") != std::string::npos) return "a headline";
    if (p.find("Write a one-paragraph summary") != std::string::npos) return "a summary";
    if (p.find("When did the software failure") != std::string::npos) return "ANSWER: May 2021";
    if (p.find("extract the information relevant") != std::string::npos)
        return "OPTION whatever: some evidence";
    if (p.find("Evidence extracted about the incident's cps") != std::string::npos)
        return "true: no\nfalse: yes";
    if (p.find("Evidence extracted about the incident's ") != std::string::npos) {
        // Mark the first option of the field yes; needs no field knowledge
        // beyond "first line of Options:".
        auto pos = p.find("Options: ");
        auto first = p.substr(pos + 9, p.find(',', pos) - pos - 9);
        return first + ": yes";
    }
    return "1. a fact [11]";
}

}  // namespace

TEST_CASE_METHOD(AnalyzeHarness, "generate_report covers every field and gates the IoT layers") {
    FnProvider provider(default_report_answer);
    FailureReport report = generate_report(incident, members, provider, embedder, store, config,
                                           ledger);
    CHECK(validate_report(report, incident).empty());
    CHECK(report.context_mode == "full");
    CHECK(report.open.size() == 9);
    CHECK(report.taxonomy.size() == 16);

    // cps=false forces the three IoT-layer fields to na without prompting.
    CHECK(report.taxonomy.at("cps").selections == std::vector<std::string>{"false"});
    for (const char* field : {"perception", "communication", "application"}) {
        CHECK(report.taxonomy.at(field).selections == std::vector<std::string>{"na"});
        for (const auto& tag : provider.tags)
            CHECK(tag.find(field) == std::string::npos);
    }

    SECTION("byte-identical on a second run") {
        FnProvider again(default_report_answer);
        FailureReport second = generate_report(incident, members, again, embedder, store, config,
                                               ledger);
        CHECK(encode(report).dump() == encode(second).dump());
    }
}

TEST_CASE_METHOD(AnalyzeHarness, "cps=true leaves the IoT layers prompted") {
    FnProvider provider([](const CompletionRequest& req) -> std::string {
        if (req.prompt.find("Evidence extracted about the incident's cps") != std::string::npos)
            return "true: yes\nfalse: no";
        return default_report_answer(req);
    });
    FailureReport report =
        generate_report(incident, members, provider, embedder, store, config, ledger);
    CHECK(report.taxonomy.at("cps").selections == std::vector<std::string>{"true"});
    bool prompted_perception = false;
    for (const auto& tag : provider.tags)
        if (tag.find("perception") != std::string::npos) prompted_perception = true;
    CHECK(prompted_perception);
    CHECK(validate_report(report, incident).empty());
}

TEST_CASE_METHOD(AnalyzeHarness, "widespread provider failure aborts with the failed field list") {
    FnProvider provider(
        [](const CompletionRequest&) -> std::string { throw TransportError("down"); });
    CHECK_THROWS_AS(
        generate_report(incident, members, provider, embedder, store, config, ledger),
        ReportError);
}

TEST_CASE("an incident over the budget produces a rag-mode report") {
    AnalyzeHarness harness(7000);  // two articles x 7000 words > 12000
    FnProvider provider(default_report_answer);
    FailureReport report = generate_report(harness.incident, harness.members, provider,
                                           harness.embedder, harness.store, harness.config,
                                           harness.ledger);
    CHECK(report.context_mode == "rag");
    CHECK(validate_report(report, harness.incident).empty());
}
