#pragma once

// Domain types shared by every pipeline stage, the taxonomy catalogs, the
// report schema, and their canonical JSON encodings.
//
// Canonical JSON: every type serializes through nlohmann::ordered_json with a
// fixed field order, so encode(x) is byte-stable and decode(encode(x)) == x.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "failmine/common.hpp"

namespace failmine {

using Json = nlohmann::ordered_json;
using ArticleId = std::int64_t;
using IncidentId = std::int64_t;

// ---------------------------------------------------------------------------
// Search criteria

struct DateRange {
    Date start;
    Date end;

    bool valid() const { return date_valid(start) && date_valid(end) && start <= end; }
    friend bool operator==(const DateRange&, const DateRange&) = default;
};

struct SearchCriteria {
    std::vector<std::string> keywords;
    std::vector<std::string> sources;
    DateRange date_range;

    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        if (keywords.empty()) problems.push_back("keywords must be non-empty");
        for (const auto& k : keywords)
            if (trim(k).empty()) problems.push_back("keyword is empty after trimming");
        if (sources.empty()) problems.push_back("sources must be non-empty");
        if (!date_range.valid()) problems.push_back("date_range.start must be <= date_range.end");
        return problems;
    }
    friend bool operator==(const SearchCriteria&, const SearchCriteria&) = default;
};

// The default source and keyword catalog the pipeline searches with.
inline SearchCriteria default_catalog() {
    SearchCriteria c;
    c.sources = {
        "Wired",
        "The New York Times",
        "CNN",
        "Daily Mail",
        "The Guardian",
        "BBC News",
        "Fox News",
        "The Washington Post",
        "CNET",
        "Reuters",
        "AP News",
    };
    c.keywords = {
        "software flaw",
        "software bug",
        "software mistake",
        "software anomaly",
        "software fault",
        "software error",
        "software exception",
        "software crash",
        "software glitch",
        "software defect",
        "software incident",
        "software side effect",
        "software hack",
    };
    c.date_range = {Date{2010, 1, 1}, Date{2022, 12, 31}};
    return c;
}

// ---------------------------------------------------------------------------
// Articles and screening verdicts

struct Article {
    ArticleId id = 0;
    std::string url;  // canonical form (see ingest::canonicalize_url)
    std::string source;
    std::string matched_keyword;
    std::string title;
    std::string body;  // paragraphs separated by blank lines
    std::optional<Date> published_at;
    bool scraped_ok = false;
    std::int64_t word_count = 0;

    friend bool operator==(const Article&, const Article&) = default;
};

enum class TriState { True, False, Unparseable };

inline std::string tristate_to_string(TriState t) {
    switch (t) {
        case TriState::True: return "true";
        case TriState::False: return "false";
        default: return "unparseable";
    }
}

inline std::optional<TriState> tristate_from_string(std::string_view s) {
    if (s == "true") return TriState::True;
    if (s == "false") return TriState::False;
    if (s == "unparseable") return TriState::Unparseable;
    return std::nullopt;
}

struct ScreeningVerdict {
    ArticleId article_id = 0;
    TriState relevant = TriState::Unparseable;
    std::optional<TriState> analyzable;  // present only when relevant == True
    std::string raw_response;
    int attempts = 0;

    friend bool operator==(const ScreeningVerdict&, const ScreeningVerdict&) = default;
};

// ---------------------------------------------------------------------------
// Incidents

struct Incident {
    IncidentId id = 0;
    std::vector<ArticleId> article_ids;  // insertion order, no duplicates
    std::string representative_summary;  // summary of the first article; frozen on merge
    std::vector<float> representative_embedding;  // unit Euclidean norm
    std::string created_at;                       // ISO-8601
    std::map<ArticleId, std::string> per_article_summaries;

    friend bool operator==(const Incident&, const Incident&) = default;
};

// ---------------------------------------------------------------------------
// Failure report schema

// Open-ended postmortem fields, in report order.
inline const std::vector<std::string>& open_field_names() {
    static const std::vector<std::string> names = {
        "timeline",           "system",       "responsible_org", "impacted_org",
        "software_causes",    "nonsoftware_causes", "impacts",  "preventions_fixes",
        "references",
    };
    return names;
}

struct TaxonomyFieldSpec {
    std::string name;
    std::vector<std::string> options;
    std::string definition;  // rendered into the coding prompts
};

// The 16 coded fields, in report order. cps precedes the three fields it
// gates (perception, communication, application).
inline const std::vector<TaxonomyFieldSpec>& taxonomy_catalog() {
    static const std::vector<TaxonomyFieldSpec> fields = {
        {"recurring",
         {"one_organization", "multiple_organizations"},
         "whether a similar failure has happened again: within the same organization, or at "
         "multiple organizations"},
        {"phase",
         {"design", "operation"},
         "the phase that introduced the contributing factors: system design and development, or "
         "system operation"},
        {"boundary",
         {"within_system", "outside_system"},
         "where the contributing factors originate: within the failing system, or outside of it"},
        {"nature",
         {"human_actions", "nonhuman_actions"},
         "whether the contributing factors involve human actions (by participating humans) or "
         "non-human actions"},
        {"dimension",
         {"hardware", "software"},
         "whether the contributing factors originate in hardware or in software"},
        {"objective",
         {"malicious", "nonmalicious"},
         "whether any contributing factor was introduced by a human with intent to harm the "
         "system (malicious) or without such intent"},
        {"intent",
         {"poor_decisions", "accidental_decisions"},
         "whether the contributing factors were introduced deliberately through poor decisions, "
         "or through accidental decisions"},
        {"capability",
         {"development_incompetence", "accidental"},
         "whether the contributing factors were introduced through lack of professional "
         "competence, or accidentally"},
        {"duration",
         {"permanent", "temporary", "intermittent"},
         "how long the contributing factors persisted: permanent, temporary, or intermittent"},
        {"behaviour",
         {"crash", "omission", "timing", "value", "byzantine", "other"},
         "how the failed system behaved: crashing, omitting its function, responding too early or "
         "too late, delivering incorrect values, behaving inconsistently (byzantine), or in a way "
         "not covered by these options"},
        {"domain",
         {"information", "transportation", "finance", "government", "entertainment", "health",
          "manufacturing", "knowledge", "utilities", "sales", "other", "unknown"},
         "the industry the failed system supports: information, transportation, finance, "
         "government, entertainment, health, manufacturing, knowledge, utilities, sales, another "
         "industry, or unclear"},
        {"consequence",
         {"death", "harm", "property", "delay", "basic", "none"},
         "the consequences of the failure: people losing their lives, physical harm, impact to "
         "property (material goods, money, or data), delayed activities, impact to basic needs, "
         "or no consequences"},
        {"cps",
         {"true", "false"},
         "whether the failed system is a cyber-physical system: software controlling physical "
         "components"},
        {"perception",
         {"sensors", "actuators", "processing_unit", "network_communication", "embedded_software",
          "na"},
         "for cyber-physical systems, which perception-layer components contributed to the "
         "failure: sensors, actuators, processing units, network communication, embedded "
         "software, or not applicable"},
        {"communication",
         {"link_level", "connectivity_level", "na"},
         "for cyber-physical systems, which communication-layer factors contributed to the "
         "failure: link level, connectivity level, or not applicable"},
        {"application",
         {"true", "false", "na"},
         "for cyber-physical systems, whether application-layer factors contributed to the "
         "failure"},
    };
    return fields;
}

inline const TaxonomyFieldSpec* find_taxonomy_field(std::string_view name) {
    for (const auto& f : taxonomy_catalog())
        if (f.name == name) return &f;
    return nullptr;
}

struct OpenField {
    std::string text;                    // the answer, usually a numbered fact list
    std::vector<ArticleId> citations;    // ordered, unique, members of the incident
    std::vector<std::string> quotes;     // supporting quotes emitted by the model
    bool unknown = false;                // the model answered "unknown"
    bool flagged = false;                // kept, but citation-free or unparseable

    friend bool operator==(const OpenField&, const OpenField&) = default;
};

struct TaxonomyField {
    std::vector<std::string> selections;          // supported options, catalog order
    std::map<std::string, std::string> evidence;  // option -> stage-A evidence text
    bool unknown = false;
    bool flagged = false;

    friend bool operator==(const TaxonomyField&, const TaxonomyField&) = default;
};

struct FailureReport {
    IncidentId incident_id = 0;
    std::string title;
    std::string summary;
    std::string context_mode;  // "full" or "rag"
    std::map<std::string, OpenField> open;
    std::map<std::string, TaxonomyField> taxonomy;

    friend bool operator==(const FailureReport&, const FailureReport&) = default;
};

// Checks every report invariant against its incident. Empty result == valid.
inline std::vector<std::string> validate_report(const FailureReport& report,
                                                const Incident& incident) {
    std::vector<std::string> violations;
    if (report.incident_id != incident.id)
        violations.push_back("report incident_id does not match incident");

    std::set<ArticleId> members(incident.article_ids.begin(), incident.article_ids.end());
    for (const auto& name : open_field_names()) {
        auto it = report.open.find(name);
        if (it == report.open.end()) {
            violations.push_back("missing open field: " + name);
            continue;
        }
        for (ArticleId cid : it->second.citations)
            if (!members.count(cid))
                violations.push_back("field " + name + " cites non-member article " +
                                     std::to_string(cid));
    }

    for (const auto& spec : taxonomy_catalog()) {
        auto it = report.taxonomy.find(spec.name);
        if (it == report.taxonomy.end()) {
            violations.push_back("missing taxonomy field: " + spec.name);
            continue;
        }
        const TaxonomyField& f = it->second;
        for (const auto& sel : f.selections) {
            if (std::find(spec.options.begin(), spec.options.end(), sel) == spec.options.end())
                violations.push_back("field " + spec.name + " selects unknown option " + sel);
            if (sel == "unknown" || f.unknown) {
                // "unknown" may not coexist with a concrete selection.
                if (f.selections.size() > 1 || (f.unknown && !f.selections.empty()))
                    violations.push_back("field " + spec.name +
                                         " mixes unknown with concrete selections");
            }
        }
    }

    auto selected = [&](const char* field) -> std::vector<std::string> {
        auto it = report.taxonomy.find(field);
        return it == report.taxonomy.end() ? std::vector<std::string>{} : it->second.selections;
    };
    auto cps = selected("cps");
    const bool cps_false = cps.size() == 1 && cps[0] == "false";
    if (cps_false) {
        for (const char* field : {"perception", "communication", "application"}) {
            auto sels = selected(field);
            if (!(sels.size() == 1 && sels[0] == "na"))
                violations.push_back(std::string("field ") + field +
                                     " must be na when cps is false");
        }
    }
    return violations;
}

// ---------------------------------------------------------------------------
// Usage ledger

struct UsageRecord {
    std::string op;        // operation name, e.g. "relevance"
    std::string tag;       // item key, e.g. "article:42" or "incident:3/system"
    std::string provider;  // model/provider id the call went to
    std::int64_t prompt_tokens = 0;
    std::int64_t response_tokens = 0;
    std::int64_t wall_ms = 0;

    friend bool operator==(const UsageRecord&, const UsageRecord&) = default;
};

// Thread-safe append-only record list. Aggregate totals are always the sum of
// the records; no call escapes accounting because providers append before
// returning.
class Ledger {
public:
    Ledger() = default;
    Ledger(const Ledger& other) : records_(other.snapshot()) {}
    Ledger& operator=(const Ledger& other) {
        if (this != &other) {
            auto copy = other.snapshot();
            std::lock_guard<std::mutex> lock(mutex_);
            records_ = std::move(copy);
        }
        return *this;
    }

    void append(UsageRecord rec) {
        std::lock_guard<std::mutex> lock(mutex_);
        records_.push_back(std::move(rec));
    }

    void extend(const Ledger& other) {
        auto theirs = other.snapshot();
        std::lock_guard<std::mutex> lock(mutex_);
        records_.insert(records_.end(), theirs.begin(), theirs.end());
    }

    std::vector<UsageRecord> snapshot() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return records_;
    }

    size_t size() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return records_.size();
    }

    std::int64_t total_prompt_tokens() const {
        std::lock_guard<std::mutex> lock(mutex_);
        std::int64_t t = 0;
        for (const auto& r : records_) t += r.prompt_tokens;
        return t;
    }

    std::int64_t total_response_tokens() const {
        std::lock_guard<std::mutex> lock(mutex_);
        std::int64_t t = 0;
        for (const auto& r : records_) t += r.response_tokens;
        return t;
    }

private:
    mutable std::mutex mutex_;
    std::vector<UsageRecord> records_;
};

// ---------------------------------------------------------------------------
// Canonical JSON encodings

inline Json encode(const Date& d) { return date_to_string(d); }

inline Date decode_date(const Json& j) {
    auto d = parse_date(j.get<std::string>());
    if (!d) throw ConfigError("invalid date: " + j.dump());
    return *d;
}

inline Json encode(const SearchCriteria& c) {
    Json j;
    j["keywords"] = c.keywords;
    j["sources"] = c.sources;
    j["date_range"] = Json{{"start", encode(c.date_range.start)}, {"end", encode(c.date_range.end)}};
    return j;
}

inline SearchCriteria decode_search_criteria(const Json& j) {
    SearchCriteria c;
    c.keywords = j.at("keywords").get<std::vector<std::string>>();
    c.sources = j.at("sources").get<std::vector<std::string>>();
    c.date_range.start = decode_date(j.at("date_range").at("start"));
    c.date_range.end = decode_date(j.at("date_range").at("end"));
    return c;
}

inline Json encode(const Article& a) {
    Json j;
    j["id"] = a.id;
    j["url"] = a.url;
    j["source"] = a.source;
    j["matched_keyword"] = a.matched_keyword;
    j["title"] = a.title;
    j["body"] = a.body;
    j["published_at"] = a.published_at ? Json(date_to_string(*a.published_at)) : Json(nullptr);
    j["scraped_ok"] = a.scraped_ok;
    j["word_count"] = a.word_count;
    return j;
}

inline Article decode_article(const Json& j) {
    Article a;
    a.id = j.at("id").get<ArticleId>();
    a.url = j.at("url").get<std::string>();
    a.source = j.at("source").get<std::string>();
    a.matched_keyword = j.at("matched_keyword").get<std::string>();
    a.title = j.at("title").get<std::string>();
    a.body = j.at("body").get<std::string>();
    if (!j.at("published_at").is_null()) a.published_at = decode_date(j.at("published_at"));
    a.scraped_ok = j.at("scraped_ok").get<bool>();
    a.word_count = j.at("word_count").get<std::int64_t>();
    return a;
}

inline Json encode(const ScreeningVerdict& v) {
    Json j;
    j["article_id"] = v.article_id;
    j["relevant"] = tristate_to_string(v.relevant);
    j["analyzable"] = v.analyzable ? Json(tristate_to_string(*v.analyzable)) : Json(nullptr);
    j["raw_response"] = v.raw_response;
    j["attempts"] = v.attempts;
    return j;
}

inline ScreeningVerdict decode_verdict(const Json& j) {
    ScreeningVerdict v;
    v.article_id = j.at("article_id").get<ArticleId>();
    v.relevant = *tristate_from_string(j.at("relevant").get<std::string>());
    if (!j.at("analyzable").is_null())
        v.analyzable = *tristate_from_string(j.at("analyzable").get<std::string>());
    v.raw_response = j.at("raw_response").get<std::string>();
    v.attempts = j.at("attempts").get<int>();
    return v;
}

inline Json encode(const Incident& inc) {
    Json j;
    j["id"] = inc.id;
    j["article_ids"] = inc.article_ids;
    j["representative_summary"] = inc.representative_summary;
    j["representative_embedding"] = inc.representative_embedding;
    j["created_at"] = inc.created_at;
    Json summaries = Json::object();
    for (const auto& [aid, text] : inc.per_article_summaries)
        summaries[std::to_string(aid)] = text;
    j["per_article_summaries"] = summaries;
    return j;
}

inline Incident decode_incident(const Json& j) {
    Incident inc;
    inc.id = j.at("id").get<IncidentId>();
    inc.article_ids = j.at("article_ids").get<std::vector<ArticleId>>();
    inc.representative_summary = j.at("representative_summary").get<std::string>();
    inc.representative_embedding = j.at("representative_embedding").get<std::vector<float>>();
    inc.created_at = j.at("created_at").get<std::string>();
    for (const auto& [key, val] : j.at("per_article_summaries").items())
        inc.per_article_summaries[std::stoll(key)] = val.get<std::string>();
    return inc;
}

inline Json encode(const OpenField& f) {
    Json j;
    j["text"] = f.text;
    j["citations"] = f.citations;
    j["quotes"] = f.quotes;
    j["unknown"] = f.unknown;
    j["flagged"] = f.flagged;
    return j;
}

inline OpenField decode_open_field(const Json& j) {
    OpenField f;
    f.text = j.at("text").get<std::string>();
    f.citations = j.at("citations").get<std::vector<ArticleId>>();
    f.quotes = j.at("quotes").get<std::vector<std::string>>();
    f.unknown = j.at("unknown").get<bool>();
    f.flagged = j.at("flagged").get<bool>();
    return f;
}

inline Json encode(const TaxonomyField& f) {
    Json j;
    j["selections"] = f.selections;
    Json ev = Json::object();
    for (const auto& [opt, text] : f.evidence) ev[opt] = text;
    j["evidence"] = ev;
    j["unknown"] = f.unknown;
    j["flagged"] = f.flagged;
    return j;
}

inline TaxonomyField decode_taxonomy_field(const Json& j) {
    TaxonomyField f;
    f.selections = j.at("selections").get<std::vector<std::string>>();
    for (const auto& [opt, text] : j.at("evidence").items()) f.evidence[opt] = text.get<std::string>();
    f.unknown = j.at("unknown").get<bool>();
    f.flagged = j.at("flagged").get<bool>();
    return f;
}

inline Json encode(const FailureReport& r) {
    Json j;
    j["incident_id"] = r.incident_id;
    j["title"] = r.title;
    j["summary"] = r.summary;
    j["context_mode"] = r.context_mode;
    Json open = Json::object();
    for (const auto& name : open_field_names()) {
        auto it = r.open.find(name);
        if (it != r.open.end()) open[name] = encode(it->second);
    }
    j["open"] = open;
    Json tax = Json::object();
    for (const auto& spec : taxonomy_catalog()) {
        auto it = r.taxonomy.find(spec.name);
        if (it != r.taxonomy.end()) tax[spec.name] = encode(it->second);
    }
    j["taxonomy"] = tax;
    return j;
}

inline FailureReport decode_report(const Json& j) {
    FailureReport r;
    r.incident_id = j.at("incident_id").get<IncidentId>();
    r.title = j.at("title").get<std::string>();
    r.summary = j.at("summary").get<std::string>();
    r.context_mode = j.at("context_mode").get<std::string>();
    for (const auto& [name, val] : j.at("open").items()) r.open[name] = decode_open_field(val);
    for (const auto& [name, val] : j.at("taxonomy").items())
        r.taxonomy[name] = decode_taxonomy_field(val);
    return r;
}

inline Json encode(const UsageRecord& u) {
    Json j;
    j["op"] = u.op;
    j["tag"] = u.tag;
    j["provider"] = u.provider;
    j["prompt_tokens"] = u.prompt_tokens;
    j["response_tokens"] = u.response_tokens;
    j["wall_ms"] = u.wall_ms;
    return j;
}

inline UsageRecord decode_usage(const Json& j) {
    UsageRecord u;
    u.op = j.at("op").get<std::string>();
    u.tag = j.at("tag").get<std::string>();
    u.provider = j.at("provider").get<std::string>();
    u.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
    u.response_tokens = j.at("response_tokens").get<std::int64_t>();
    u.wall_ms = j.at("wall_ms").get<std::int64_t>();
    return u;
}

}  // namespace failmine
