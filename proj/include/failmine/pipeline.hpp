#pragma once

// Orchestration: run the six stages end to end (resuming any completed work),
// compute the statistics bundle over a database snapshot, and turn the usage
// ledger into dollars.
//
// Parallel stages work in windows: items inside a window run concurrently,
// commits happen in item order, so databases and ledgers come out
// byte-identical regardless of the worker cap. The merge stage is strictly
// sequential by construction.

#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "failmine/analyze.hpp"
#include "failmine/cluster.hpp"
#include "failmine/common.hpp"
#include "failmine/ingest.hpp"
#include "failmine/model.hpp"
#include "failmine/providers.hpp"
#include "failmine/screen.hpp"
#include "failmine/store.hpp"

namespace failmine {

enum class ProviderMode { Replay, Record, Live };

inline std::string provider_mode_name(ProviderMode m) {
    switch (m) {
        case ProviderMode::Replay: return "replay";
        case ProviderMode::Record: return "record";
        default: return "live";
    }
}

struct Rates {
    double prompt_per_token = 0.0;
    double completion_per_token = 0.0;
};

struct RunConfig {
    SearchCriteria criteria = default_catalog();
    MergeConfig merge;
    AnalyzeConfig analyze;
    ProviderMode provider_mode = ProviderMode::Replay;
    int worker_cap = 4;

    std::string db_dir;
    std::string corpus_dir;     // fixture corpus, when the fixture backend is used
    std::string cassette_path;  // replay/record cassette

    std::map<std::string, Rates> token_rates;

    // Stable hash of the semantic configuration. Machine-local paths and the
    // worker cap do not change results, so they stay out of the fingerprint.
    std::string fingerprint() const {
        Json j;
        j["criteria"] = encode(criteria);
        j["merge"] = Json{{"similarity_threshold", merge.similarity_threshold},
                          {"max_candidates", merge.max_candidates},
                          {"candidate_window_days",
                           merge.candidate_window_days ? Json(*merge.candidate_window_days)
                                                       : Json(nullptr)}};
        j["analyze"] = Json{{"budget_words", analyze.budget_words}, {"top_k", analyze.top_k}};
        j["provider_mode"] = provider_mode_name(provider_mode);
        return hex64(fnv1a64(j.dump()));
    }
};

inline Json encode(const RunConfig& c) {
    Json j;
    j["criteria"] = encode(c.criteria);
    j["merge"] = Json{{"similarity_threshold", c.merge.similarity_threshold},
                      {"max_candidates", c.merge.max_candidates},
                      {"candidate_window_days",
                       c.merge.candidate_window_days ? Json(*c.merge.candidate_window_days)
                                                     : Json(nullptr)}};
    j["analyze"] = Json{{"budget_words", c.analyze.budget_words}, {"top_k", c.analyze.top_k}};
    j["provider_mode"] = provider_mode_name(c.provider_mode);
    j["worker_cap"] = c.worker_cap;
    j["db_dir"] = c.db_dir;
    j["corpus_dir"] = c.corpus_dir;
    j["cassette_path"] = c.cassette_path;
    Json rates = Json::object();
    for (const auto& [id, r] : c.token_rates)
        rates[id] = Json{{"prompt_per_token", r.prompt_per_token},
                         {"completion_per_token", r.completion_per_token}};
    j["token_rates"] = rates;
    return j;
}

inline RunConfig decode_run_config(const Json& j) {
    RunConfig c;
    if (j.contains("criteria")) c.criteria = decode_search_criteria(j.at("criteria"));
    if (j.contains("merge")) {
        const auto& m = j.at("merge");
        c.merge.similarity_threshold = m.at("similarity_threshold").get<double>();
        c.merge.max_candidates = m.at("max_candidates").get<int>();
        if (m.contains("candidate_window_days") && !m.at("candidate_window_days").is_null())
            c.merge.candidate_window_days = m.at("candidate_window_days").get<int>();
    }
    if (j.contains("analyze")) {
        c.analyze.budget_words = j.at("analyze").at("budget_words").get<std::int64_t>();
        c.analyze.top_k = j.at("analyze").at("top_k").get<int>();
    }
    if (j.contains("provider_mode")) {
        const std::string m = j.at("provider_mode").get<std::string>();
        c.provider_mode = m == "record" ? ProviderMode::Record
                          : m == "live" ? ProviderMode::Live
                                        : ProviderMode::Replay;
    }
    if (j.contains("worker_cap")) c.worker_cap = j.at("worker_cap").get<int>();
    if (j.contains("db_dir")) c.db_dir = j.at("db_dir").get<std::string>();
    if (j.contains("corpus_dir")) c.corpus_dir = j.at("corpus_dir").get<std::string>();
    if (j.contains("cassette_path")) c.cassette_path = j.at("cassette_path").get<std::string>();
    if (j.contains("token_rates"))
        for (const auto& [id, r] : j.at("token_rates").items())
            c.token_rates[id] = Rates{r.at("prompt_per_token").get<double>(),
                                      r.at("completion_per_token").get<double>()};
    return c;
}

// Provider wiring per mode. Record and live modes need an HTTP transport and
// the FAILMINE_* environment variables; replay mode is fully offline.
struct ProviderSet {
    std::shared_ptr<CompletionProvider> completions;
    std::shared_ptr<EmbeddingProvider> embedder;
    std::shared_ptr<ReplayCassette> cassette;  // null in live mode
    std::shared_ptr<Clock> clock;
};

inline ProviderSet make_providers(const RunConfig& config,
                                  std::shared_ptr<HttpTransport> transport = nullptr) {
    ProviderSet set;
    switch (config.provider_mode) {
        case ProviderMode::Replay: {
            if (config.cassette_path.empty())
                throw ConfigError("replay mode requires a cassette path");
            set.cassette = std::make_shared<ReplayCassette>(config.cassette_path,
                                                            CassetteMode::Replay);
            set.completions =
                std::make_shared<CassetteCompletionProvider>(set.cassette, nullptr, "replay");
            set.embedder = std::make_shared<HashEmbeddingProvider>();
            set.clock = std::make_shared<FixedClock>();
            break;
        }
        case ProviderMode::Record: {
            if (!transport) throw ConfigError("record mode requires an HTTP transport");
            if (config.cassette_path.empty())
                throw ConfigError("record mode requires a cassette path");
            set.clock = std::make_shared<SystemClock>();
            auto chat = HttpProviderConfig::from_env("FAILMINE_CHAT_MODEL", "gpt-3.5-turbo-0125");
            auto inner = std::make_shared<HttpCompletionProvider>(chat, transport, set.clock);
            set.cassette = std::make_shared<ReplayCassette>(config.cassette_path,
                                                            CassetteMode::Record);
            set.completions =
                std::make_shared<CassetteCompletionProvider>(set.cassette, inner, "replay");
            set.embedder = std::make_shared<HashEmbeddingProvider>();
            break;
        }
        case ProviderMode::Live: {
            if (!transport) throw ConfigError("live mode requires an HTTP transport");
            set.clock = std::make_shared<SystemClock>();
            auto chat = HttpProviderConfig::from_env("FAILMINE_CHAT_MODEL", "gpt-3.5-turbo-0125");
            auto embed =
                HttpProviderConfig::from_env("FAILMINE_EMBED_MODEL", "text-embedding-ada-002");
            set.completions = std::make_shared<HttpCompletionProvider>(chat, transport, set.clock);
            set.embedder =
                std::make_shared<HttpEmbeddingProvider>(embed, transport, set.clock);
            break;
        }
    }
    return set;
}

namespace detail {

// Applies fn to each item, at most `workers` at a time, and hands the results
// to commit in input order, one window at a time.
template <typename Item, typename Result>
void windowed_parallel(const std::vector<Item>& items, int workers,
                       const std::function<Result(const Item&)>& fn,
                       const std::function<void(const Item&, Result&)>& commit) {
    if (workers < 1) workers = 1;
    size_t pos = 0;
    while (pos < items.size()) {
        const size_t window = std::min(static_cast<size_t>(workers), items.size() - pos);
        std::vector<Result> results(window);
        std::vector<std::exception_ptr> errors(window);
        std::vector<std::thread> threads;
        for (size_t i = 0; i < window; ++i) {
            threads.emplace_back([&, i] {
                try {
                    results[i] = fn(items[pos + i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (size_t i = 0; i < window; ++i) {
            if (errors[i]) std::rethrow_exception(errors[i]);
            commit(items[pos + i], results[i]);
        }
        pos += window;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Statistics bundle

struct YearFunnelRow {
    std::string year;  // "2021", or "unknown" for undated articles
    std::int64_t searched = 0;
    std::int64_t scraped = 0;
    std::int64_t relevant = 0;
    std::int64_t analyzable = 0;
    std::int64_t incidents = 0;
};

struct StatsBundle {
    std::vector<YearFunnelRow> funnel;  // year rows ascending, then a "total" row
    std::map<std::string, std::int64_t> keyword_articles;  // over incident members
    std::map<std::string, std::int64_t> source_articles;
    std::vector<std::pair<std::string, std::int64_t>> articles_per_incident;  // fixed buckets
    std::int64_t incidents_over_budget = 0;
    std::int64_t total_incidents = 0;
    std::int64_t single_article_incidents = 0;
    double single_article_pct = 0.0;
    double scrape_success_pct = 0.0;  // scraped / searched over the whole db
    // field -> option (or "unknown") -> incident count
    std::map<std::string, std::map<std::string, std::int64_t>> taxonomy_counts;

    Json to_json() const {
        Json j;
        Json rows = Json::array();
        for (const auto& r : funnel)
            rows.push_back(Json{{"year", r.year},
                                {"searched", r.searched},
                                {"scraped", r.scraped},
                                {"relevant", r.relevant},
                                {"analyzable", r.analyzable},
                                {"incidents", r.incidents}});
        j["funnel"] = rows;
        j["keyword_articles"] = keyword_articles;
        j["source_articles"] = source_articles;
        Json hist = Json::array();
        for (const auto& [bucket, count] : articles_per_incident)
            hist.push_back(Json{{"bucket", bucket}, {"count", count}});
        j["articles_per_incident"] = hist;
        j["incidents_over_budget"] = incidents_over_budget;
        j["total_incidents"] = total_incidents;
        j["single_article_incidents"] = single_article_incidents;
        j["single_article_pct"] = single_article_pct;
        j["scrape_success_pct"] = scrape_success_pct;
        j["taxonomy_counts"] = taxonomy_counts;
        return j;
    }

    std::string render_text() const {
        std::ostringstream out;
        out << "Year       Searched   Scraped  Relevant  Analyzable  Incidents\n";
        for (const auto& r : funnel) {
            char line[128];
            std::snprintf(line, sizeof(line), "%-10s %8lld  %8lld  %8lld  %10lld  %9lld\n",
                          r.year.c_str(), static_cast<long long>(r.searched),
                          static_cast<long long>(r.scraped), static_cast<long long>(r.relevant),
                          static_cast<long long>(r.analyzable),
                          static_cast<long long>(r.incidents));
            out << line;
        }
        out << "\nArticles per incident:\n";
        for (const auto& [bucket, count] : articles_per_incident)
            out << "  " << bucket << ": " << count << "\n";
        out << "\nIncidents over the context budget: " << incidents_over_budget << "\n";
        char pct[64];
        std::snprintf(pct, sizeof(pct), "Scrape success: %.2f%%\n", scrape_success_pct);
        out << pct;
        if (!taxonomy_counts.empty()) {
            out << "\nTaxonomy option frequencies:\n";
            for (const auto& [field, options] : taxonomy_counts) {
                out << "  " << field << ":";
                for (const auto& [option, count] : options)
                    out << " " << option << "=" << count;
                out << "\n";
            }
        }
        return out.str();
    }
};

inline StatsBundle stats(const Snapshot& snapshot, std::int64_t budget_words = 12000) {
    StatsBundle b;

    auto year_of = [](const std::optional<Date>& d) {
        return d ? std::to_string(d->year) : std::string("unknown");
    };

    std::map<std::string, YearFunnelRow> rows;
    auto row = [&](const std::string& year) -> YearFunnelRow& {
        auto& r = rows[year];
        r.year = year;
        return r;
    };
    for (const auto& a : snapshot.articles) {
        auto& r = row(year_of(a.published_at));
        ++r.searched;
        if (a.scraped_ok) ++r.scraped;
        auto it = snapshot.verdicts.find(a.id);
        if (it == snapshot.verdicts.end()) continue;
        if (it->second.relevant == TriState::True) ++r.relevant;
        if (it->second.analyzable == TriState::True) ++r.analyzable;
    }
    for (const auto& inc : snapshot.incidents) {
        if (inc.article_ids.empty()) continue;
        const Article* first = snapshot.article(inc.article_ids.front());
        ++row(first ? year_of(first->published_at) : "unknown").incidents;
    }
    YearFunnelRow total;
    total.year = "total";
    for (auto& [year, r] : rows) {
        if (year == "unknown") continue;
        b.funnel.push_back(r);
    }
    if (rows.count("unknown")) b.funnel.push_back(rows["unknown"]);
    for (const auto& r : b.funnel) {
        total.searched += r.searched;
        total.scraped += r.scraped;
        total.relevant += r.relevant;
        total.analyzable += r.analyzable;
        total.incidents += r.incidents;
    }
    b.funnel.push_back(total);

    // Keyword and source distributions over articles that belong to incidents.
    std::int64_t over_budget = 0;
    static const std::vector<std::pair<std::string, std::pair<int, int>>> buckets = {
        {"1", {1, 1}}, {"2-10", {2, 10}}, {"11-20", {11, 20}}, {"21-30", {21, 30}},
        {">30", {31, 1 << 30}}};
    std::map<std::string, std::int64_t> bucket_counts;
    for (const auto& [name, range] : buckets) bucket_counts[name] = 0;

    for (const auto& inc : snapshot.incidents) {
        std::int64_t words = 0;
        for (ArticleId aid : inc.article_ids) {
            const Article* a = snapshot.article(aid);
            if (!a) continue;
            ++b.keyword_articles[a->matched_keyword];
            ++b.source_articles[a->source];
            words += a->word_count;
        }
        if (words > budget_words) ++over_budget;
        const int n = static_cast<int>(inc.article_ids.size());
        for (const auto& [name, range] : buckets)
            if (n >= range.first && n <= range.second) ++bucket_counts[name];
        if (n == 1) ++b.single_article_incidents;
    }
    for (const auto& [name, range] : buckets)
        b.articles_per_incident.emplace_back(name, bucket_counts[name]);
    b.incidents_over_budget = over_budget;
    b.total_incidents = static_cast<std::int64_t>(snapshot.incidents.size());
    b.single_article_pct =
        b.total_incidents == 0
            ? 0.0
            : 100.0 * static_cast<double>(b.single_article_incidents) /
                  static_cast<double>(b.total_incidents);

    std::int64_t searched_total = 0, scraped_total = 0;
    for (const auto& a : snapshot.articles) {
        ++searched_total;
        if (a.scraped_ok) ++scraped_total;
    }
    b.scrape_success_pct = searched_total == 0 ? 0.0
                                               : 100.0 * static_cast<double>(scraped_total) /
                                                     static_cast<double>(searched_total);

    for (const auto& [iid, report] : snapshot.reports) {
        for (const auto& [field, value] : report.taxonomy) {
            if (value.unknown) {
                ++b.taxonomy_counts[field]["unknown"];
            } else {
                for (const auto& sel : value.selections) ++b.taxonomy_counts[field][sel];
            }
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// Cost report

struct CostReport {
    double total_dollars = 0.0;
    double per_incident = 0.0;
    std::int64_t incident_count = 0;
    std::map<std::string, double> by_provider;
};

inline CostReport cost_report(const std::vector<UsageRecord>& records,
                              const std::map<std::string, Rates>& rates,
                              std::int64_t incident_count) {
    if (records.empty()) throw ConfigError("cost_report: the usage ledger is empty");
    if (incident_count <= 0) throw ConfigError("cost_report: incident count must be positive");
    CostReport report;
    report.incident_count = incident_count;
    for (const auto& r : records) {
        auto it = rates.find(r.provider);
        if (it == rates.end())
            throw ConfigError("cost_report: no rate configured for provider '" + r.provider + "'");
        const double dollars = static_cast<double>(r.prompt_tokens) * it->second.prompt_per_token +
                               static_cast<double>(r.response_tokens) *
                                   it->second.completion_per_token;
        report.total_dollars += dollars;
        report.by_provider[r.provider] += dollars;
    }
    report.per_incident = report.total_dollars / static_cast<double>(incident_count);
    return report;
}

// Per-run and per-incident rollups of the usage ledger. Tags of the form
// "incident:<id>/..." attribute a call to its incident.
struct UsageAggregates {
    std::int64_t total_prompt_tokens = 0;
    std::int64_t total_response_tokens = 0;
    std::map<std::string, std::int64_t> tokens_by_op;
    std::map<IncidentId, std::int64_t> tokens_by_incident;
};

inline UsageAggregates aggregate_usage(const std::vector<UsageRecord>& records) {
    UsageAggregates agg;
    for (const auto& r : records) {
        agg.total_prompt_tokens += r.prompt_tokens;
        agg.total_response_tokens += r.response_tokens;
        agg.tokens_by_op[r.op] += r.prompt_tokens + r.response_tokens;
        const std::string needle = "incident:";
        auto pos = r.tag.find(needle);
        if (pos != std::string::npos) {
            pos += needle.size();
            auto end = pos;
            while (end < r.tag.size() && std::isdigit(static_cast<unsigned char>(r.tag[end])))
                ++end;
            if (end > pos)
                agg.tokens_by_incident[std::stoll(r.tag.substr(pos, end - pos))] +=
                    r.prompt_tokens + r.response_tokens;
        }
    }
    return agg;
}

// ---------------------------------------------------------------------------
// Full pipeline

struct RunSummary {
    bool resumed = false;
    std::int64_t stubs_found = 0;
    std::int64_t articles = 0;
    std::int64_t scraped = 0;
    std::int64_t relevant = 0;
    std::int64_t analyzable = 0;
    std::int64_t incidents = 0;
    std::int64_t reports = 0;
    std::vector<std::string> warnings;
    StatsBundle stats;
    std::optional<CostReport> cost;

    Json to_json() const {
        Json j;
        j["resumed"] = resumed;
        j["stubs_found"] = stubs_found;
        j["articles"] = articles;
        j["scraped"] = scraped;
        j["relevant"] = relevant;
        j["analyzable"] = analyzable;
        j["incidents"] = incidents;
        j["reports"] = reports;
        j["warnings"] = warnings;
        j["stats"] = stats.to_json();
        if (cost)
            j["cost"] = Json{{"total_dollars", cost->total_dollars},
                             {"per_incident", cost->per_incident},
                             {"incident_count", cost->incident_count}};
        return j;
    }
};

// Deterministic article list for the ingest stage: every stub from every
// query in build_queries order, scraped with 1-based ids, deduplicated by
// canonical URL. Scraping runs concurrently up to the worker cap; ids come
// from stub positions, so the output is order-independent. Resume appends
// only the ids that are not yet stored.
inline std::vector<Article> collect_articles(const RunConfig& config, SearchBackend& backend,
                                             std::int64_t* stubs_found,
                                             std::vector<std::string>* failures) {
    std::vector<std::pair<ArticleId, ArticleStub>> stubs;
    for (const auto& spec : build_queries(config.criteria)) {
        for (auto& stub : fetch(spec, backend, failures))
            stubs.emplace_back(static_cast<ArticleId>(stubs.size() + 1), std::move(stub));
    }
    if (stubs_found) *stubs_found = static_cast<std::int64_t>(stubs.size());
    std::vector<Article> articles;
    articles.reserve(stubs.size());
    std::function<Article(const std::pair<ArticleId, ArticleStub>&)> work =
        [&](const std::pair<ArticleId, ArticleStub>& item) {
            return scrape(item.second, backend, item.first);
        };
    std::function<void(const std::pair<ArticleId, ArticleStub>&, Article&)> commit =
        [&](const std::pair<ArticleId, ArticleStub>&, Article& a) {
            articles.push_back(std::move(a));
        };
    detail::windowed_parallel(stubs, config.worker_cap, work, commit);
    return dedupe(articles);
}

inline void finish_summary(RunSummary& summary, const Database& db, const RunConfig& config);

inline RunSummary run_pipeline(const RunConfig& config, SearchBackend& backend,
                               CompletionProvider& completions, EmbeddingProvider& embedder,
                               const Clock& clock, Stage stop_after = Stage::Analyze) {
    RunSummary summary;
    Database db = Database::open(config.db_dir, config.fingerprint(), embedder.dimension());
    summary.resumed = !db.articles().empty();

    // Stage 1: search, scrape, dedupe.
    if (!db.watermark(Stage::Ingest)) {
        auto articles = collect_articles(config, backend, &summary.stubs_found, &summary.warnings);
        for (const auto& a : articles)
            if (!db.has_article(a.id)) db.append_article(a);
        db.set_watermark(Stage::Ingest, static_cast<std::int64_t>(db.articles().size()));
    }
    if (stop_after == Stage::Ingest) {
        finish_summary(summary, db, config);
        return summary;
    }

    const ScreenPromptPair prompts = default_screen_prompts();

    // Stage 2: relevance.
    {
        auto pending = resume_plan(db, Stage::Relevance).relevance_pending;
        std::function<std::pair<ScreeningVerdict, Ledger>(const ArticleId&)> work =
            [&](const ArticleId& id) {
                const Article* a = nullptr;
                for (const auto& art : db.articles())
                    if (art.id == id) a = &art;
                Ledger item_ledger;
                auto verdict = classify_relevance(*a, completions, item_ledger, prompts);
                return std::make_pair(verdict, item_ledger);
            };
        std::function<void(const ArticleId&, std::pair<ScreeningVerdict, Ledger>&)> commit =
            [&](const ArticleId&, std::pair<ScreeningVerdict, Ledger>& result) {
                db.append_verdict(result.first);
                db.append_usage(result.second.snapshot());
            };
        detail::windowed_parallel(pending, config.worker_cap, work, commit);
        db.set_watermark(Stage::Relevance, static_cast<std::int64_t>(db.verdicts().size()));
    }
    if (stop_after == Stage::Relevance) {
        finish_summary(summary, db, config);
        return summary;
    }

    // Stage 3: analyzability.
    {
        auto pending = resume_plan(db, Stage::Analyzability).analyzability_pending;
        std::function<std::pair<ScreeningVerdict, Ledger>(const ArticleId&)> work =
            [&](const ArticleId& id) {
                const Article* a = nullptr;
                for (const auto& art : db.articles())
                    if (art.id == id) a = &art;
                Ledger item_ledger;
                auto verdict = classify_analyzability(*a, db.verdicts().at(id), completions,
                                                      item_ledger, prompts);
                return std::make_pair(verdict, item_ledger);
            };
        std::function<void(const ArticleId&, std::pair<ScreeningVerdict, Ledger>&)> commit =
            [&](const ArticleId&, std::pair<ScreeningVerdict, Ledger>& result) {
                db.append_verdict(result.first);
                db.append_usage(result.second.snapshot());
            };
        detail::windowed_parallel(pending, config.worker_cap, work, commit);
        std::int64_t done = 0;
        for (const auto& [aid, v] : db.verdicts())
            if (v.analyzable) ++done;
        db.set_watermark(Stage::Analyzability, done);
    }
    if (stop_after == Stage::Analyzability) {
        finish_summary(summary, db, config);
        return summary;
    }

    // Stage 4: merge. Sequential: each assignment changes the candidate set
    // for the next article.
    {
        auto pending = resume_plan(db, Stage::Merge).merge_pending;
        for (ArticleId id : pending) {
            const Article* a = nullptr;
            for (const auto& art : db.articles())
                if (art.id == id) a = &art;
            Ledger item_ledger;
            assign_incident(*a, db, config.merge, completions, embedder, item_ledger, clock);
            db.append_usage(item_ledger.snapshot());
        }
        db.set_watermark(Stage::Merge, static_cast<std::int64_t>(db.incidents().size()));
    }
    if (stop_after == Stage::Merge) {
        finish_summary(summary, db, config);
        return summary;
    }

    // Stage 5: chunk and index member articles.
    {
        auto pending = resume_plan(db, Stage::Index).index_pending;
        for (const auto& [incident_id, article_id] : pending) {
            const Article* a = nullptr;
            for (const auto& art : db.articles())
                if (art.id == article_id) a = &art;
            Ledger item_ledger;
            auto chunks = chunk_article(*a);
            db.vectors().upsert_chunks(incident_id, article_id, chunks, embedder, item_ledger);
            db.append_usage(item_ledger.snapshot());
        }
        db.set_watermark(Stage::Index, static_cast<std::int64_t>(db.vectors().size()));
    }
    if (stop_after == Stage::Index) {
        finish_summary(summary, db, config);
        return summary;
    }

    // Stage 6: reports. Incidents run in parallel (their contexts are
    // independent reads); commits land in incident id order.
    {
        auto pending = resume_plan(db, Stage::Analyze).analyze_pending;
        struct ReportResult {
            FailureReport report;
            Ledger ledger;
            std::vector<std::string> warnings;
        };
        std::function<ReportResult(const IncidentId&)> work = [&](const IncidentId& iid) {
            const Incident* inc = db.incident(iid);
            std::vector<const Article*> members;
            for (ArticleId aid : inc->article_ids)
                for (const auto& art : db.articles())
                    if (art.id == aid) members.push_back(&art);
            ReportResult result;
            result.report = generate_report(*inc, members, completions, embedder, db.vectors(),
                                            config.analyze, result.ledger, &result.warnings);
            return result;
        };
        std::function<void(const IncidentId&, ReportResult&)> commit =
            [&](const IncidentId&, ReportResult& result) {
                db.commit_report(result.report);
                db.append_usage(result.ledger.snapshot());
                summary.warnings.insert(summary.warnings.end(), result.warnings.begin(),
                                        result.warnings.end());
            };
        detail::windowed_parallel(pending, config.worker_cap, work, commit);
        db.set_watermark(Stage::Analyze, static_cast<std::int64_t>(db.reports().size()));
    }

    finish_summary(summary, db, config);
    return summary;
}

inline void finish_summary(RunSummary& summary, const Database& db, const RunConfig& config) {
    summary.articles = static_cast<std::int64_t>(db.articles().size());
    for (const auto& a : db.articles())
        if (a.scraped_ok) ++summary.scraped;
    for (const auto& [aid, v] : db.verdicts()) {
        if (v.relevant == TriState::True) ++summary.relevant;
        if (v.analyzable == TriState::True) ++summary.analyzable;
    }
    summary.incidents = static_cast<std::int64_t>(db.incidents().size());
    summary.reports = static_cast<std::int64_t>(db.reports().size());
    summary.stats = stats(db.snapshot(), config.analyze.budget_words);
    if (!config.token_rates.empty() && summary.incidents > 0) {
        auto usage = db.usage();
        if (!usage.empty()) {
            try {
                summary.cost = cost_report(usage, config.token_rates, summary.incidents);
            } catch (const ConfigError& e) {
                summary.warnings.push_back(e.what());
            }
        }
    }
}

}  // namespace failmine
