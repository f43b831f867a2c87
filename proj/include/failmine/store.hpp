#pragma once

// Persistence and pipeline state. A database is a directory:
//
//   manifest.json   format version, config fingerprint, stage watermarks
//   articles.jsonl  one Article per line, append-only
//   verdicts.jsonl  ScreeningVerdicts; a later line for an article supersedes
//   incidents.jsonl merge-event log: "create" and "merge" events
//   merges.jsonl    MergeTrace audit log
//   usage.jsonl     UsageRecords, appended in deterministic batches
//   reports.jsonl   committed FailureReports, one per line
//   reports/<id>.json  the same reports as standalone canonical JSON
//   vectors.bin     the chunk vector store
//
// Appends flush before returning; cross-file ordering is fixed (articles ->
// verdicts -> incidents -> reports), so a crash leaves a prefix that replay
// completes idempotently: records are keyed by id, and rerunning a stage
// skips everything that is already present.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "failmine/cluster.hpp"
#include "failmine/common.hpp"
#include "failmine/metrics.hpp"
#include "failmine/model.hpp"
#include "failmine/providers.hpp"
#include "failmine/vectorstore.hpp"

namespace failmine {

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Stage { Ingest, Relevance, Analyzability, Merge, Index, Analyze };

inline const std::vector<std::pair<Stage, std::string>>& stage_names() {
    static const std::vector<std::pair<Stage, std::string>> names = {
        {Stage::Ingest, "ingest"},       {Stage::Relevance, "relevance"},
        {Stage::Analyzability, "analyzability"}, {Stage::Merge, "merge"},
        {Stage::Index, "index"},         {Stage::Analyze, "analyze"},
    };
    return names;
}

inline std::string stage_name(Stage s) {
    for (const auto& [stage, name] : stage_names())
        if (stage == s) return name;
    return "unknown";
}

struct Snapshot {
    std::vector<Article> articles;
    std::map<ArticleId, ScreeningVerdict> verdicts;
    std::vector<Incident> incidents;
    std::map<IncidentId, FailureReport> reports;
    std::vector<Chunk> chunks;

    const Article* article(ArticleId id) const {
        for (const auto& a : articles)
            if (a.id == id) return &a;
        return nullptr;
    }

    // incident containing an article, or nullptr
    const Incident* incident_of(ArticleId id) const {
        for (const auto& inc : incidents)
            for (ArticleId member : inc.article_ids)
                if (member == id) return &inc;
        return nullptr;
    }
};

class Database {
public:
    static constexpr int kFormatVersion = 1;

    // Opens or creates a database directory. When `config_fingerprint` is
    // given and the manifest already has a different one, the open refuses:
    // resuming under a changed config would corrupt the watermark semantics.
    static Database open(const std::filesystem::path& dir,
                         std::optional<std::string> config_fingerprint = std::nullopt,
                         int embedding_dimension = 64) {
        Database db;
        db.dir_ = dir;
        std::filesystem::create_directories(dir / "reports");
        const auto manifest_path = dir / "manifest.json";
        if (std::filesystem::exists(manifest_path)) {
            std::ifstream in(manifest_path);
            db.manifest_ = Json::parse(in);
            if (db.manifest_.at("format_version").get<int>() != kFormatVersion)
                throw StoreError("unsupported database format version");
            if (config_fingerprint &&
                db.manifest_.at("config_fingerprint").get<std::string>() != *config_fingerprint)
                throw StoreError("config fingerprint mismatch: this database was produced by a "
                                 "different configuration");
        } else {
            db.manifest_["format_version"] = kFormatVersion;
            db.manifest_["config_fingerprint"] = config_fingerprint.value_or("");
            db.manifest_["watermarks"] = Json::object();
            db.write_manifest();
        }
        db.load();
        db.vectors_ = VectorStore::open(dir / "vectors.bin", embedding_dimension);
        return db;
    }

    const std::filesystem::path& dir() const { return dir_; }
    std::string config_fingerprint() const {
        return manifest_.at("config_fingerprint").get<std::string>();
    }

    // ------------------------------------------------------------------ state

    const std::vector<Article>& articles() const { return articles_; }
    const std::map<ArticleId, ScreeningVerdict>& verdicts() const { return verdicts_; }
    const std::vector<Incident>& incidents() const { return incidents_; }
    const std::map<IncidentId, FailureReport>& reports() const { return reports_; }
    VectorStore& vectors() { return vectors_; }
    const VectorStore& vectors() const { return vectors_; }

    bool has_article(ArticleId id) const { return article_ids_.count(id) > 0; }

    const Incident* incident_of(ArticleId id) const {
        auto it = article_to_incident_.find(id);
        if (it == article_to_incident_.end()) return nullptr;
        return incident(it->second);
    }

    const Incident* incident(IncidentId id) const {
        for (const auto& inc : incidents_)
            if (inc.id == id) return &inc;
        return nullptr;
    }

    Snapshot snapshot() const {
        Snapshot s;
        s.articles = articles_;
        s.verdicts = verdicts_;
        s.incidents = incidents_;
        s.reports = reports_;
        s.chunks = vectors_.chunks();
        return s;
    }

    // ---------------------------------------------------------------- appends

    void append_article(const Article& a) {
        if (article_ids_.count(a.id))
            throw StoreError("duplicate article id " + std::to_string(a.id));
        if (a.word_count != word_count(a.body))
            throw StoreError("article " + std::to_string(a.id) + " word_count mismatch");
        append_line("articles.jsonl", encode(a));
        articles_.push_back(a);
        article_ids_.insert(a.id);
    }

    void append_verdict(const ScreeningVerdict& v) {
        if (!article_ids_.count(v.article_id))
            throw StoreError("verdict references unknown article " + std::to_string(v.article_id));
        if (v.analyzable && v.relevant != TriState::True)
            throw StoreError("analyzable verdict requires relevant=true");
        append_line("verdicts.jsonl", encode(v));
        verdicts_[v.article_id] = v;
    }

    IncidentId next_incident_id() const {
        IncidentId max_id = 0;
        for (const auto& inc : incidents_) max_id = std::max(max_id, inc.id);
        return max_id + 1;
    }

    // Applies a merge decision: creates the incident or appends to it, then
    // writes the audit trace. Returns the trace with the final incident id.
    MergeTrace apply_assignment(const Article& article, const Assignment& assignment,
                                const Clock& clock) {
        if (article_to_incident_.count(article.id))
            throw StoreError("article " + std::to_string(article.id) +
                             " is already assigned to an incident");
        MergeTrace trace = assignment.trace;
        if (trace.created_new) {
            Incident inc;
            inc.id = next_incident_id();
            inc.article_ids = {article.id};
            inc.representative_summary = assignment.summary;
            inc.representative_embedding = assignment.embedding.components;
            inc.created_at = clock.now_iso();
            inc.per_article_summaries[article.id] = assignment.summary;
            Json event;
            event["event"] = "create";
            event["incident_id"] = inc.id;
            event["article_id"] = article.id;
            event["summary"] = assignment.summary;
            event["embedding"] = inc.representative_embedding;
            event["created_at"] = inc.created_at;
            append_line("incidents.jsonl", event);
            trace.incident_id = inc.id;
            article_to_incident_[article.id] = inc.id;
            incidents_.push_back(std::move(inc));
        } else {
            Incident* inc = nullptr;
            for (auto& candidate : incidents_)
                if (candidate.id == trace.incident_id) inc = &candidate;
            if (!inc)
                throw StoreError("assignment targets unknown incident " +
                                 std::to_string(trace.incident_id));
            Json event;
            event["event"] = "merge";
            event["incident_id"] = inc->id;
            event["article_id"] = article.id;
            event["summary"] = assignment.summary;
            append_line("incidents.jsonl", event);
            inc->article_ids.push_back(article.id);
            inc->per_article_summaries[article.id] = assignment.summary;
            article_to_incident_[article.id] = inc->id;
        }
        append_line("merges.jsonl", encode(trace));
        return trace;
    }

    void append_usage(const std::vector<UsageRecord>& records) {
        for (const auto& r : records) append_line("usage.jsonl", encode(r));
    }

    std::vector<UsageRecord> usage() const {
        std::vector<UsageRecord> out;
        for (const auto& line : read_lines("usage.jsonl")) out.push_back(decode_usage(Json::parse(line)));
        return out;
    }

    // Atomic per incident: the standalone file lands via rename before the
    // combined log line. Re-committing an identical report is the idempotent
    // crash-recovery path; committing a different one for the same id is an
    // error.
    void commit_report(const FailureReport& report) {
        const Incident* inc = incident(report.incident_id);
        if (!inc) throw StoreError("report for unknown incident " +
                                   std::to_string(report.incident_id));
        auto violations = validate_report(report, *inc);
        if (!violations.empty())
            throw StoreError("invalid report for incident " + std::to_string(report.incident_id) +
                             ": " + violations.front());
        auto it = reports_.find(report.incident_id);
        if (it != reports_.end()) {
            if (!(it->second == report))
                throw StoreError("conflicting report for incident " +
                                 std::to_string(report.incident_id));
            return;
        }
        const auto path = dir_ / "reports" / (std::to_string(report.incident_id) + ".json");
        const auto tmp = dir_ / "reports" / (std::to_string(report.incident_id) + ".json.tmp");
        {
            std::ofstream out(tmp);
            out << encode(report).dump(1) << "\n";
            if (!out) throw StoreError("cannot write " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
        append_line("reports.jsonl", encode(report));
        reports_[report.incident_id] = report;
    }

    // ------------------------------------------------------------- watermarks

    std::optional<std::int64_t> watermark(Stage stage) const {
        const auto& w = manifest_.at("watermarks");
        auto it = w.find(stage_name(stage));
        if (it == w.end()) return std::nullopt;
        return it->get<std::int64_t>();
    }

    void set_watermark(Stage stage, std::int64_t value) {
        auto current = watermark(stage);
        if (current && value < *current)
            throw StoreError("watermark for " + stage_name(stage) + " may not regress");
        manifest_["watermarks"][stage_name(stage)] = value;
        write_manifest();
    }

    // ---------------------------------------------------------------- checks

    std::vector<std::string> verify() const {
        std::vector<std::string> problems;
        std::set<ArticleId> ids;
        for (const auto& a : articles_) {
            if (!ids.insert(a.id).second)
                problems.push_back("duplicate article id " + std::to_string(a.id));
            if (a.word_count != word_count(a.body))
                problems.push_back("article " + std::to_string(a.id) + " word_count mismatch");
            if (a.scraped_ok == a.body.empty())
                problems.push_back("article " + std::to_string(a.id) +
                                   " scraped_ok inconsistent with body");
        }
        for (const auto& [aid, v] : verdicts_) {
            if (!ids.count(aid))
                problems.push_back("verdict references unknown article " + std::to_string(aid));
            if (v.analyzable && v.relevant != TriState::True)
                problems.push_back("article " + std::to_string(aid) +
                                   " has analyzable verdict without relevant=true");
        }
        std::set<ArticleId> claimed;
        for (const auto& inc : incidents_) {
            if (inc.article_ids.empty())
                problems.push_back("incident " + std::to_string(inc.id) + " has no articles");
            std::set<ArticleId> members;
            for (ArticleId aid : inc.article_ids) {
                if (!members.insert(aid).second)
                    problems.push_back("incident " + std::to_string(inc.id) +
                                       " lists article " + std::to_string(aid) + " twice");
                if (!claimed.insert(aid).second)
                    problems.push_back("article " + std::to_string(aid) +
                                       " belongs to more than one incident");
                if (!ids.count(aid))
                    problems.push_back("incident " + std::to_string(inc.id) +
                                       " references unknown article " + std::to_string(aid));
                if (!inc.per_article_summaries.count(aid))
                    problems.push_back("incident " + std::to_string(inc.id) +
                                       " lacks a summary for article " + std::to_string(aid));
            }
            if (!inc.article_ids.empty()) {
                auto it = inc.per_article_summaries.find(inc.article_ids.front());
                if (it == inc.per_article_summaries.end() ||
                    it->second != inc.representative_summary)
                    problems.push_back("incident " + std::to_string(inc.id) +
                                       " representative summary is not the first article's");
            }
            EmbeddingVector e{inc.representative_embedding};
            if (std::abs(e.norm() - 1.0) > 1e-6)
                problems.push_back("incident " + std::to_string(inc.id) +
                                   " embedding is not unit norm");
        }
        for (const auto& [iid, report] : reports_) {
            const Incident* inc = incident(iid);
            if (!inc) {
                problems.push_back("report for unknown incident " + std::to_string(iid));
                continue;
            }
            for (const auto& v : validate_report(report, *inc))
                problems.push_back("incident " + std::to_string(iid) + ": " + v);
        }
        for (const auto& c : vectors_.chunks()) {
            const Incident* inc = incident(c.incident_id);
            if (!inc) {
                problems.push_back("chunk references unknown incident " +
                                   std::to_string(c.incident_id));
            } else if (std::find(inc->article_ids.begin(), inc->article_ids.end(),
                                 c.article_id) == inc->article_ids.end()) {
                problems.push_back("chunk references article " + std::to_string(c.article_id) +
                                   " outside incident " + std::to_string(c.incident_id));
            }
        }
        return problems;
    }

private:
    void write_manifest() const {
        const auto tmp = dir_ / "manifest.json.tmp";
        {
            std::ofstream out(tmp);
            out << manifest_.dump(1) << "\n";
            if (!out) throw StoreError("cannot write manifest");
        }
        std::filesystem::rename(tmp, dir_ / "manifest.json");
    }

    void append_line(const char* file, const Json& j) {
        std::ofstream out(dir_ / file, std::ios::app);
        if (!out) throw StoreError(std::string("cannot append to ") + file);
        out << j.dump() << "\n";
        out.flush();
        if (!out) throw StoreError(std::string("short write to ") + file);
    }

    std::vector<std::string> read_lines(const char* file) const {
        std::vector<std::string> lines;
        std::ifstream in(dir_ / file);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) lines.push_back(line);
        return lines;
    }

    void load() {
        for (const auto& line : read_lines("articles.jsonl")) {
            Article a = decode_article(Json::parse(line));
            articles_.push_back(a);
            article_ids_.insert(a.id);
        }
        for (const auto& line : read_lines("verdicts.jsonl")) {
            ScreeningVerdict v = decode_verdict(Json::parse(line));
            verdicts_[v.article_id] = v;  // last record wins
        }
        for (const auto& line : read_lines("incidents.jsonl")) {
            Json event = Json::parse(line);
            const std::string kind = event.at("event").get<std::string>();
            if (kind == "create") {
                Incident inc;
                inc.id = event.at("incident_id").get<IncidentId>();
                ArticleId aid = event.at("article_id").get<ArticleId>();
                inc.article_ids = {aid};
                inc.representative_summary = event.at("summary").get<std::string>();
                inc.representative_embedding = event.at("embedding").get<std::vector<float>>();
                inc.created_at = event.at("created_at").get<std::string>();
                inc.per_article_summaries[aid] = inc.representative_summary;
                article_to_incident_[aid] = inc.id;
                incidents_.push_back(std::move(inc));
            } else if (kind == "merge") {
                IncidentId iid = event.at("incident_id").get<IncidentId>();
                ArticleId aid = event.at("article_id").get<ArticleId>();
                for (auto& inc : incidents_) {
                    if (inc.id != iid) continue;
                    inc.article_ids.push_back(aid);
                    inc.per_article_summaries[aid] = event.at("summary").get<std::string>();
                }
                article_to_incident_[aid] = iid;
            } else {
                throw StoreError("unknown incident event: " + kind);
            }
        }
        for (const auto& line : read_lines("reports.jsonl")) {
            FailureReport r = decode_report(Json::parse(line));
            reports_[r.incident_id] = r;
        }
    }

    std::filesystem::path dir_;
    Json manifest_;
    std::vector<Article> articles_;
    std::set<ArticleId> article_ids_;
    std::map<ArticleId, ScreeningVerdict> verdicts_;
    std::vector<Incident> incidents_;
    std::map<ArticleId, IncidentId> article_to_incident_;
    std::map<IncidentId, FailureReport> reports_;
    VectorStore vectors_;
};

// The merge decision applied straight to a database, exclusively owned by the
// caller for the duration. Candidate eligibility honors the optional
// time-window knob using member article publish dates.
inline MergeTrace assign_incident(const Article& article, Database& db, const MergeConfig& config,
                                  CompletionProvider& completions, EmbeddingProvider& embedder,
                                  Ledger& ledger, const Clock& clock) {
    std::function<bool(const Incident&)> eligible;
    if (config.candidate_window_days && article.published_at) {
        const std::int64_t day = days_from_epoch(*article.published_at);
        const std::int64_t window = *config.candidate_window_days;
        eligible = [&db, day, window](const Incident& inc) {
            for (ArticleId aid : inc.article_ids) {
                for (const auto& a : db.articles()) {
                    if (a.id != aid || !a.published_at) continue;
                    if (std::llabs(days_from_epoch(*a.published_at) - day) <= window) return true;
                }
            }
            return false;
        };
    }
    Assignment plan =
        plan_assignment(article, db.incidents(), config, completions, embedder, ledger, eligible);
    return db.apply_assignment(article, plan, clock);
}

// ---------------------------------------------------------------------------
// Resume planning

struct ResumePlan {
    bool ingest_pending = false;
    std::vector<ArticleId> relevance_pending;
    std::vector<ArticleId> analyzability_pending;
    std::vector<ArticleId> merge_pending;
    std::vector<std::pair<IncidentId, ArticleId>> index_pending;
    std::vector<IncidentId> analyze_pending;

    bool empty() const {
        return !ingest_pending && relevance_pending.empty() && analyzability_pending.empty() &&
               merge_pending.empty() && index_pending.empty() && analyze_pending.empty();
    }
};

// Work remaining per stage, up to and including `target`. Completed items are
// recognized by the presence of their outputs, so the plan is correct even
// after a mid-stage crash. Ordering is deterministic (article id order,
// incident id order).
inline ResumePlan resume_plan(const Database& db, Stage target = Stage::Analyze) {
    ResumePlan plan;
    plan.ingest_pending = !db.watermark(Stage::Ingest).has_value();
    if (target == Stage::Ingest) return plan;

    std::vector<const Article*> ordered;
    for (const auto& a : db.articles()) ordered.push_back(&a);
    std::sort(ordered.begin(), ordered.end(),
              [](const Article* a, const Article* b) { return a->id < b->id; });

    for (const Article* a : ordered) {
        if (!a->scraped_ok) continue;
        auto it = db.verdicts().find(a->id);
        if (it == db.verdicts().end()) {
            plan.relevance_pending.push_back(a->id);
            continue;
        }
        if (target == Stage::Relevance) continue;
        const ScreeningVerdict& v = it->second;
        if (v.relevant == TriState::True && !v.analyzable) {
            plan.analyzability_pending.push_back(a->id);
            continue;
        }
        if (target == Stage::Analyzability) continue;
        if (v.relevant == TriState::True && v.analyzable == TriState::True &&
            db.incident_of(a->id) == nullptr)
            plan.merge_pending.push_back(a->id);
    }
    if (target == Stage::Relevance || target == Stage::Analyzability || target == Stage::Merge)
        return plan;

    std::vector<const Incident*> incidents;
    for (const auto& inc : db.incidents()) incidents.push_back(&inc);
    std::sort(incidents.begin(), incidents.end(),
              [](const Incident* a, const Incident* b) { return a->id < b->id; });
    for (const Incident* inc : incidents)
        for (ArticleId aid : inc->article_ids)
            if (!db.vectors().has_article(inc->id, aid)) plan.index_pending.emplace_back(inc->id, aid);
    if (target == Stage::Index) return plan;

    for (const Incident* inc : incidents)
        if (!db.reports().count(inc->id)) plan.analyze_pending.push_back(inc->id);
    return plan;
}

// ---------------------------------------------------------------------------
// Clustering evaluation against a ground-truth labeling file

struct ScreeningEvaluation {
    ConfusionMatrix matrix;
    int skipped = 0;  // unparseable or missing predictions, excluded
};

// Compares stored verdicts against boolean ground labels for one screening
// stage. Articles without a parseable prediction are skipped, not counted.
inline ScreeningEvaluation evaluate_screening(
    const Snapshot& snapshot, const std::vector<std::pair<ArticleId, bool>>& ground,
    Stage stage) {
    if (stage != Stage::Relevance && stage != Stage::Analyzability)
        throw StoreError("evaluate_screening expects the relevance or analyzability stage");
    ScreeningEvaluation eval;
    std::vector<bool> g, p;
    for (const auto& [aid, label] : ground) {
        auto it = snapshot.verdicts.find(aid);
        if (it == snapshot.verdicts.end())
            throw StoreError("no verdict recorded for article " + std::to_string(aid));
        const ScreeningVerdict& v = it->second;
        std::optional<bool> predicted;
        if (stage == Stage::Analyzability) {
            if (v.analyzable && *v.analyzable != TriState::Unparseable)
                predicted = *v.analyzable == TriState::True;
        } else if (v.relevant != TriState::Unparseable) {
            predicted = v.relevant == TriState::True;
        }
        if (!predicted) {
            ++eval.skipped;
            continue;
        }
        g.push_back(label);
        p.push_back(*predicted);
    }
    eval.matrix = confusion(g, p);
    return eval;
}

// Ground truth: (article id, cluster label) pairs. Every listed article must
// exist in the snapshot and be assigned to an incident.
inline ClusteringScores evaluate_clustering(
    const Snapshot& snapshot, const std::vector<std::pair<ArticleId, std::string>>& ground) {
    Labeling labeling;
    for (const auto& [aid, label] : ground) {
        if (!snapshot.article(aid))
            throw StoreError("ground truth references article " + std::to_string(aid) +
                             " missing from the snapshot");
        const Incident* inc = snapshot.incident_of(aid);
        if (!inc)
            throw StoreError("ground truth article " + std::to_string(aid) +
                             " is not assigned to any incident");
        labeling.ground.push_back(label);
        labeling.predicted.push_back(std::to_string(inc->id));
    }
    if (labeling.ground.empty()) throw StoreError("ground truth is empty");
    return v_measure(labeling);
}

}  // namespace failmine
