// failmine: collect software-failure news, screen it, merge it into
// incidents, and generate structured failure reports.
//
// Exit codes: 0 clean, 1 partial-stage failures, 2 config/integrity errors.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "failmine/fixtures.hpp"
#include "failmine/pipeline.hpp"
#include "failmine/providers_http.hpp"

namespace {

using namespace failmine;

struct CommonOptions {
    std::string config_file;
    std::string db_dir;
    std::string corpus_dir;
    std::string cassette_path;
    std::string provider_mode;
    std::optional<double> threshold;
    std::optional<int> max_candidates;
    std::optional<std::int64_t> budget_words;
    std::optional<int> top_k;
    std::optional<int> workers;
    std::optional<int> from_year;
    std::optional<int> to_year;
    std::vector<std::string> sources;
    std::vector<std::string> keywords;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_file, "JSON config file; flags override it");
    cmd->add_option("--db", opts.db_dir, "database directory");
    cmd->add_option("--corpus", opts.corpus_dir, "fixture corpus directory");
    cmd->add_option("--cassette", opts.cassette_path, "cassette file for replay/record");
    cmd->add_option("--provider", opts.provider_mode, "provider mode: replay, record, or live");
    cmd->add_option("--threshold", opts.threshold, "merge similarity threshold");
    cmd->add_option("--max-candidates", opts.max_candidates, "merge candidate cap");
    cmd->add_option("--budget-words", opts.budget_words, "full-context word budget");
    cmd->add_option("--top-k", opts.top_k, "chunks retrieved per prompt in rag mode");
    cmd->add_option("--workers", opts.workers, "worker cap for parallel stages");
    cmd->add_option("--from", opts.from_year, "first year searched");
    cmd->add_option("--to", opts.to_year, "last year searched");
    cmd->add_option("--sources", opts.sources, "source list override")->delimiter(',');
    cmd->add_option("--keywords", opts.keywords, "keyword list override")->delimiter(',');
}

RunConfig build_config(const CommonOptions& opts) {
    RunConfig config;
    if (!opts.config_file.empty()) {
        std::ifstream in(opts.config_file);
        if (!in) throw ConfigError("cannot read config file " + opts.config_file);
        config = decode_run_config(Json::parse(in));
    }
    if (!opts.db_dir.empty()) config.db_dir = opts.db_dir;
    if (!opts.corpus_dir.empty()) config.corpus_dir = opts.corpus_dir;
    if (!opts.cassette_path.empty()) config.cassette_path = opts.cassette_path;
    if (!opts.provider_mode.empty()) {
        if (opts.provider_mode == "replay")
            config.provider_mode = ProviderMode::Replay;
        else if (opts.provider_mode == "record")
            config.provider_mode = ProviderMode::Record;
        else if (opts.provider_mode == "live")
            config.provider_mode = ProviderMode::Live;
        else
            throw ConfigError("unknown provider mode " + opts.provider_mode);
    }
    if (opts.threshold) config.merge.similarity_threshold = *opts.threshold;
    if (opts.max_candidates) config.merge.max_candidates = *opts.max_candidates;
    if (opts.budget_words) config.analyze.budget_words = *opts.budget_words;
    if (opts.top_k) config.analyze.top_k = *opts.top_k;
    if (opts.workers) config.worker_cap = *opts.workers;
    if (opts.from_year) config.criteria.date_range.start = Date{*opts.from_year, 1, 1};
    if (opts.to_year) config.criteria.date_range.end = Date{*opts.to_year, 12, 31};
    if (!opts.sources.empty()) config.criteria.sources = opts.sources;
    if (!opts.keywords.empty()) config.criteria.keywords = opts.keywords;
    if (config.db_dir.empty()) throw ConfigError("--db is required");
    if (config.token_rates.empty()) {
        config.token_rates["replay"] = Rates{0.5e-6, 1.5e-6};
        config.token_rates["scripted"] = Rates{0.5e-6, 1.5e-6};
        config.token_rates["replay-embed"] = Rates{0.1e-6, 0.0};
        config.token_rates["gpt-3.5-turbo-0125"] = Rates{0.5e-6, 1.5e-6};
        config.token_rates["text-embedding-ada-002"] = Rates{0.1e-6, 0.0};
    }
    return config;
}

class NullBackend : public SearchBackend {
public:
    std::vector<ArticleStub> search(const QuerySpec&) override {
        throw ConfigError("no search backend configured; pass --corpus for the fixture backend");
    }
    std::optional<std::string> fetch_document(const ArticleStub&) override {
        throw ConfigError("no search backend configured");
    }
};

std::unique_ptr<SearchBackend> make_backend(const RunConfig& config) {
    if (!config.corpus_dir.empty())
        return std::make_unique<FixtureBackend>(config.corpus_dir);
    return std::make_unique<NullBackend>();
}

std::shared_ptr<HttpTransport> transport_for(const RunConfig& config) {
    if (config.provider_mode == ProviderMode::Replay) return nullptr;
    return make_httplib_transport();
}

void print_funnel(const StatsBundle& bundle) {
    std::cout << bundle.render_text();
}

int run_stage(const CommonOptions& opts, Stage stop_after, bool show_funnel) {
    RunConfig config = build_config(opts);
    auto backend = make_backend(config);
    ProviderSet providers = make_providers(config, transport_for(config));
    RunSummary summary = run_pipeline(config, *backend, *providers.completions,
                                      *providers.embedder, *providers.clock, stop_after);
    if (providers.cassette && config.provider_mode == ProviderMode::Record)
        providers.cassette->save();
    std::cout << summary.to_json().dump(1) << "\n";
    if (show_funnel) print_funnel(summary.stats);
    return summary.warnings.empty() ? 0 : 1;
}

std::vector<std::pair<ArticleId, std::string>> read_ground_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read ground truth file " + path);
    std::vector<std::pair<ArticleId, std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        Json j = Json::parse(line);
        std::string label = j.at("label").is_boolean()
                                ? (j.at("label").get<bool>() ? "true" : "false")
                                : j.at("label").get<std::string>();
        out.emplace_back(j.at("article_id").get<ArticleId>(), label);
    }
    return out;
}

std::string fmt_score(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"failmine: software-failure news mining pipeline"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::string eval_ground, rates_file, dump_out;
    std::string screen_stage = "relevance";
    std::string eval_stage = "relevance";
    std::int64_t analyze_incident = -1;
    bool analyze_all = false;
    bool stats_json = false;

    auto* cmd_search = app.add_subcommand("search", "step 1: search, scrape, dedupe");
    add_common(cmd_search, opts);

    auto* cmd_screen = app.add_subcommand("screen", "steps 2-3: relevance / analyzability");
    add_common(cmd_screen, opts);
    cmd_screen->add_option("--stage", screen_stage, "relevance or analyzability");

    auto* cmd_merge = app.add_subcommand("merge", "step 4: merge articles into incidents");
    add_common(cmd_merge, opts);

    auto* cmd_analyze = app.add_subcommand("analyze", "step 6: generate failure reports");
    add_common(cmd_analyze, opts);
    cmd_analyze->add_option("--incident", analyze_incident, "generate for one incident id");
    cmd_analyze->add_flag("--all", analyze_all, "generate for all incidents");

    auto* cmd_run = app.add_subcommand("run", "run the full pipeline (steps 1-6)");
    add_common(cmd_run, opts);

    auto* cmd_eval = app.add_subcommand("eval", "evaluation harness");
    auto* cmd_eval_classify = cmd_eval->add_subcommand("classify", "screening confusion metrics");
    add_common(cmd_eval_classify, opts);
    cmd_eval_classify->add_option("--ground", eval_ground, "JSONL {article_id, label}")->required();
    cmd_eval_classify->add_option("--stage", eval_stage, "relevance or analyzability");
    auto* cmd_eval_cluster = cmd_eval->add_subcommand("cluster", "clustering h/c/V metrics");
    add_common(cmd_eval_cluster, opts);
    cmd_eval_cluster->add_option("--ground", eval_ground, "JSONL {article_id, label}")->required();

    auto* cmd_stats = app.add_subcommand("stats", "database statistics bundle");
    add_common(cmd_stats, opts);
    cmd_stats->add_flag("--json", stats_json, "emit JSON instead of text tables");

    auto* cmd_cost = app.add_subcommand("cost", "usage-ledger cost report");
    add_common(cmd_cost, opts);
    cmd_cost->add_option("--rates", rates_file, "JSON rate table per provider id");

    auto* cmd_db = app.add_subcommand("db", "database maintenance");
    auto* cmd_db_verify = cmd_db->add_subcommand("verify", "check all invariants");
    add_common(cmd_db_verify, opts);

    auto* cmd_vecstore = app.add_subcommand("vecstore", "vector store maintenance");
    auto* cmd_vec_dump = cmd_vecstore->add_subcommand("dump", "dump chunks as JSONL");
    add_common(cmd_vec_dump, opts);

    auto* cmd_fixtures = app.add_subcommand("fixtures", "write the bundled demo corpus");
    std::string fixtures_out;
    cmd_fixtures->add_option("out", fixtures_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_search->parsed()) return run_stage(opts, Stage::Ingest, false);
        if (cmd_screen->parsed()) {
            Stage stage = screen_stage == "analyzability" ? Stage::Analyzability : Stage::Relevance;
            if (screen_stage != "relevance" && screen_stage != "analyzability")
                throw ConfigError("unknown screen stage " + screen_stage);
            return run_stage(opts, stage, true);
        }
        if (cmd_merge->parsed()) {
            int rc = run_stage(opts, Stage::Merge, false);
            RunConfig config = build_config(opts);
            std::ifstream in(std::filesystem::path(config.db_dir) / "merges.jsonl");
            std::string line;
            while (std::getline(in, line)) std::cout << line << "\n";
            return rc;
        }
        if (cmd_run->parsed()) return run_stage(opts, Stage::Analyze, false);
        if (cmd_analyze->parsed()) {
            if (analyze_all || analyze_incident < 0) return run_stage(opts, Stage::Analyze, false);
            RunConfig config = build_config(opts);
            Database db = Database::open(config.db_dir, config.fingerprint());
            const Incident* inc = db.incident(analyze_incident);
            if (!inc) throw ConfigError("no incident " + std::to_string(analyze_incident));
            if (db.reports().count(inc->id)) {
                std::cout << encode(db.reports().at(inc->id)).dump(1) << "\n";
                return 0;
            }
            ProviderSet providers = make_providers(config, transport_for(config));
            std::vector<const Article*> members;
            for (ArticleId aid : inc->article_ids)
                for (const auto& a : db.articles())
                    if (a.id == aid) members.push_back(&a);
            Ledger ledger;
            FailureReport report =
                generate_report(*inc, members, *providers.completions, *providers.embedder,
                                db.vectors(), config.analyze, ledger);
            db.commit_report(report);
            db.append_usage(ledger.snapshot());
            std::cout << encode(report).dump(1) << "\n";
            return 0;
        }
        if (cmd_eval_classify->parsed()) {
            RunConfig config = build_config(opts);
            Database db = Database::open(config.db_dir);
            if (eval_stage != "relevance" && eval_stage != "analyzability")
                throw ConfigError("unknown eval stage " + eval_stage);
            std::vector<std::pair<ArticleId, bool>> ground;
            for (const auto& [aid, label] : read_ground_labels(eval_ground))
                ground.emplace_back(aid, label == "true");
            ScreeningEvaluation eval = evaluate_screening(
                db.snapshot(), ground,
                eval_stage == "analyzability" ? Stage::Analyzability : Stage::Relevance);
            ClassificationScores s = classification_scores(eval.matrix);
            Json out;
            out["stage"] = eval_stage;
            out["tp"] = eval.matrix.tp;
            out["fp"] = eval.matrix.fp;
            out["fn"] = eval.matrix.fn;
            out["tn"] = eval.matrix.tn;
            out["accuracy"] = fmt_score(s.accuracy);
            out["precision"] = fmt_score(s.precision);
            out["recall"] = fmt_score(s.recall);
            out["f1"] = fmt_score(s.f1);
            out["skipped_unparseable_or_missing"] = eval.skipped;
            std::cout << out.dump(1) << "\n";
            return 0;
        }
        if (cmd_eval_cluster->parsed()) {
            RunConfig config = build_config(opts);
            Database db = Database::open(config.db_dir);
            auto scores = evaluate_clustering(db.snapshot(), read_ground_labels(eval_ground));
            Json out;
            out["homogeneity"] = scores.homogeneity;
            out["completeness"] = scores.completeness;
            out["v_measure"] = scores.v_measure;
            std::cout << out.dump(1) << "\n";
            return 0;
        }
        if (cmd_stats->parsed()) {
            RunConfig config = build_config(opts);
            Database db = Database::open(config.db_dir);
            StatsBundle bundle = stats(db.snapshot(), config.analyze.budget_words);
            if (stats_json)
                std::cout << bundle.to_json().dump(1) << "\n";
            else
                std::cout << bundle.render_text();
            return 0;
        }
        if (cmd_cost->parsed()) {
            RunConfig config = build_config(opts);
            Database db = Database::open(config.db_dir);
            std::map<std::string, Rates> rates = config.token_rates;
            if (!rates_file.empty()) {
                std::ifstream in(rates_file);
                if (!in) throw ConfigError("cannot read rates file " + rates_file);
                rates.clear();
                for (const auto& [id, r] : Json::parse(in).items())
                    rates[id] = Rates{r.at("prompt_per_token").get<double>(),
                                      r.at("completion_per_token").get<double>()};
            }
            CostReport report = cost_report(db.usage(), rates,
                                            static_cast<std::int64_t>(db.incidents().size()));
            Json out;
            out["total_dollars"] = report.total_dollars;
            out["per_incident"] = report.per_incident;
            out["incident_count"] = report.incident_count;
            for (const auto& [id, dollars] : report.by_provider) out["by_provider"][id] = dollars;
            std::cout << out.dump(1) << "\n";
            return 0;
        }
        if (cmd_db_verify->parsed()) {
            RunConfig config = build_config(opts);
            Database db = Database::open(config.db_dir);
            auto problems = db.verify();
            for (const auto& p : problems) std::cout << "violation: " << p << "\n";
            std::cout << (problems.empty() ? "ok" : "failed") << "\n";
            return problems.empty() ? 0 : 2;
        }
        if (cmd_vec_dump->parsed()) {
            RunConfig config = build_config(opts);
            Database db = Database::open(config.db_dir);
            db.vectors().dump_jsonl(std::cout);
            return 0;
        }
        if (cmd_fixtures->parsed()) {
            auto paths = fixtures::write_demo_corpus(fixtures_out);
            std::cout << "corpus: " << paths.corpus_dir.string() << "\n"
                      << "cassette: " << paths.cassette_path.string() << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const StoreError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
