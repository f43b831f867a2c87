#pragma once

// The bundled demo corpus: 20 synthetic news articles engineered to flow
// through every pipeline stage offline, plus the cassette that scripts the
// model's answers for them.
//
// Ground truth, by design:
//   * 21 search stubs, one a duplicate URL -> 20 unique articles
//   * 2 scrape failures (missing document, empty document)
//   * 3 irrelevant articles, 2 relevant-but-thin articles
//   * 13 analyzable articles forming 3 incidents:
//       incident 1 "Aurora"    - 6 articles, total body text over the 12k-word
//                                budget, so its report runs in rag mode
//       incident 2 "MediSched" - 4 articles
//       incident 3 "Northbank" - 3 articles
//
// The cassette is produced by recording a pipeline run against
// ScriptedProvider, a rule-based stand-in that answers each prompt from the
// tables below, plus pre-recorded merge confirmations for every summary pair
// so threshold variations replay without misses.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "failmine/pipeline.hpp"

namespace failmine::fixtures {

// ---------------------------------------------------------------------------
// Document table

enum class DocKind { Fare, Medi, North, Thin, Irrelevant, DeadMissing, DeadEmpty };

struct DemoDoc {
    std::string key;       // doc id in the corpus index
    DocKind kind;
    int variant;           // 1-based index within its kind
    std::string title;
    std::string url;
    std::string source;
    std::string keyword;   // the query cell that lists it
    int year;
    std::string published;
};

inline const std::vector<DemoDoc>& demo_docs() {
    static const std::vector<DemoDoc> docs = {
        {"fare1", DocKind::Fare, 1,
         "Aurora fare machines overcharge thousands after botched update",
         "https://WWW.BBC.example/news/aurora-fare-1?utm_source=feed", "BBC News",
         "software glitch", 2021, "2021-10-02"},
        {"fare2", DocKind::Fare, 2,
         "Aurora transit glitch refunds begin as fare system stabilises",
         "https://www.bbc.example/news/aurora-fare-2", "BBC News", "software glitch", 2022,
         "2022-01-15"},
        {"medi1", DocKind::Medi, 1,
         "MediSched outage leaves clinics unable to book patients",
         "https://www.cnet.example/health/medisched-outage", "CNET", "software glitch", 2021,
         "2021-11-14"},
        {"medi2", DocKind::Medi, 2,
         "MediSched restores scheduling platform after two-day failure",
         "https://www.cnet.example/health/medisched-restored", "CNET", "software glitch", 2022,
         "2022-03-05"},
        {"north1", DocKind::North, 1,
         "Northbank app crashes lock customers out of their accounts",
         "https://www.reuters.example/business/northbank-crash", "Reuters", "software glitch",
         2021, "2021-08-20"},
        {"thin1", DocKind::Thin, 1, "Council website briefly hit by software glitch",
         "https://www.theguardian.example/uk/council-glitch", "The Guardian", "software glitch",
         2021, "2021-05-10"},
        {"irrel1", DocKind::Irrelevant, 1, "Toaster oven recall expands over heating element",
         "https://www.bbc.example/news/toaster-recall", "BBC News", "software bug", 2021,
         "2021-03-08"},
        {"fare4", DocKind::Fare, 4, "Aurora confirms refund totals for fare overcharges",
         "https://www.bbc.example/news/aurora-fare-4", "BBC News", "software bug", 2022,
         "2022-01-16"},
        {"fare3", DocKind::Fare, 3, "Aurora riders describe days of duplicate fare charges",
         "https://www.cnet.example/tech/aurora-fare-3", "CNET", "software bug", 2021,
         "2021-10-03"},
        {"north2", DocKind::North, 2, "Northbank audit traces app crashes to flawed release",
         "https://www.cnet.example/finance/northbank-audit", "CNET", "software bug", 2022,
         "2022-06-11"},
        {"medi3", DocKind::Medi, 3, "Hospital staff recount manual workarounds during MediSched outage",
         "https://www.reuters.example/health/medisched-manual", "Reuters", "software bug", 2021,
         "2021-11-15"},
        {"thin2", DocKind::Thin, 2, "Ticketing vendor apologises for brief software bug",
         "https://www.reuters.example/business/ticket-bug", "Reuters", "software bug", 2022,
         "2022-09-01"},
        {"dead1", DocKind::DeadMissing, 1, "Archived report on billing system defect",
         "https://www.theguardian.example/archive/billing-defect", "The Guardian", "software bug",
         2021, "2021-02-14"},
        {"irrel2", DocKind::Irrelevant, 2, "Software hiring surges across the region",
         "https://www.theguardian.example/business/software-hiring", "The Guardian",
         "software bug", 2022, "2022-04-22"},
        {"medi4", DocKind::Medi, 4, "Regulator asks MediSched for incident review after outage",
         "https://www.bbc.example/health/medisched-review", "BBC News", "software crash", 2021,
         "2021-11-16"},
        {"north3", DocKind::North, 3, "Northbank compensation plan follows app crash complaints",
         "https://www.bbc.example/business/northbank-compensation", "BBC News", "software crash",
         2022, "2022-06-12"},
        {"irrel3", DocKind::Irrelevant, 3, "Opinion: the software industry needs more apprenticeships",
         "https://www.cnet.example/opinion/apprenticeships", "CNET", "software crash", 2021,
         "2021-07-30"},
        {"fare6", DocKind::Fare, 6, "Kiosktech engineers detail fix for Aurora fare defect",
         "https://www.cnet.example/tech/aurora-fare-6", "CNET", "software crash", 2022,
         "2022-01-17"},
        {"dead2", DocKind::DeadEmpty, 2, "Exchange outage coverage page",
         "https://www.reuters.example/markets/exchange-outage", "Reuters", "software crash", 2021,
         "2021-09-09"},
        {"fare5", DocKind::Fare, 5, "Inquiry into Aurora fare failures widens",
         "https://www.theguardian.example/uk/aurora-fare-5", "The Guardian", "software crash",
         2022, "2022-01-18"},
    };
    return docs;
}

inline SearchCriteria demo_criteria() {
    SearchCriteria c;
    c.keywords = {"software glitch", "software bug", "software crash"};
    c.sources = {"BBC News", "CNET", "Reuters", "The Guardian"};
    c.date_range = {Date{2021, 1, 1}, Date{2022, 12, 31}};
    return c;
}

// ---------------------------------------------------------------------------
// Bodies and summaries

namespace detail {

inline std::string fare_paragraph(int article, int index) {
    std::string a = std::to_string(article);
    std::string i = std::to_string(index);
    std::string p =
        "Aurora transit riders reported overcharge case number " + i +
        " while the fare system review continued across the network. Engineers from vendor "
        "Kiosktech traced the duplicate charge pattern to update batch " + i +
        " and refunds for the affected Aurora accounts were queued for processing. City "
        "officials said the Aurora light rail network would keep manual fare checks in place "
        "until independent audits confirmed stable fare collection at every station.";
    switch (index % 3) {
        case 0:
            p += " Commuter groups collecting Aurora receipts asked for interim credits while the "
                 "fix from report " + a + " was verified.";
            break;
        case 1:
            p += " The council noted that Aurora staffing at ticket halls was doubled during the "
                 "disruption described in briefing " + a + ".";
            break;
        default:
            p += " Kiosktech said its Aurora deployment pipeline would gain a staged rollout gate "
                 "after review " + a + ".";
            break;
    }
    return p;
}

inline std::string medi_paragraph(int article, int index) {
    std::string i = std::to_string(index);
    switch (index) {
        case 0:
            return "The MediSched hospital appointment scheduling platform went down overnight "
                   "after a configuration error, leaving clinics across the region unable to "
                   "book or confirm patient visits.";
        case 1:
            return "Staff at affected hospitals kept paper lists while the MediSched operators "
                   "worked to restore the booking service from backups, a process that took "
                   "nearly two days to complete.";
        case 2:
            return "MediSched Systems apologised for the outage and said article " +
                   std::to_string(article) +
                   " of its service review would cover the configuration change that triggered "
                   "the failure.";
        default:
            return "Health regulators asked MediSched for a full incident review covering cause "
                   "number " + i + " and the delays to patient treatment that followed.";
    }
}

inline std::string north_paragraph(int article, int index) {
    switch (index) {
        case 0:
            return "Customers of Northbank reported repeated crashes in the bank's mobile app "
                   "that locked them out of accounts and delayed scheduled payments.";
        case 1:
            return "Northbank acknowledged that a flawed release caused the app failures and "
                   "promised fixes, compensation, and an external audit of its development "
                   "process.";
        default:
            return "The Northbank audit note numbered " + std::to_string(article + index) +
                   " described intermittent crash loops affecting sign-in and payment screens "
                   "for several days.";
    }
}

}  // namespace detail

inline std::string demo_body(const DemoDoc& doc) {
    std::vector<std::string> paragraphs;
    switch (doc.kind) {
        case DocKind::Fare:
            // Long-form coverage: the six fare articles together exceed the
            // 12,000-word context budget and force rag mode.
            for (int i = 0; i < 38; ++i)
                paragraphs.push_back(detail::fare_paragraph(doc.variant, i));
            break;
        case DocKind::Medi:
            for (int i = 0; i < 4; ++i) paragraphs.push_back(detail::medi_paragraph(doc.variant, i));
            break;
        case DocKind::North:
            for (int i = 0; i < 3; ++i)
                paragraphs.push_back(detail::north_paragraph(doc.variant, i));
            break;
        case DocKind::Thin:
            paragraphs.push_back(
                "A brief note said a software glitch affected an online service for part of the "
                "day. No details about the system, the cause, or the impact were available.");
            break;
        case DocKind::Irrelevant:
            paragraphs.push_back(
                "This story covers general industry and consumer news without describing any "
                "software failure incident.");
            paragraphs.push_back(
                "Analysts quoted in the piece discussed market trends for the coming year.");
            break;
        case DocKind::DeadMissing:
        case DocKind::DeadEmpty:
            break;
    }
    std::string body;
    for (size_t i = 0; i < paragraphs.size(); ++i) {
        if (i) body += "\n\n";
        body += paragraphs[i];
    }
    return body;
}

inline std::string demo_summary(const DemoDoc& doc) {
    static const std::string fare_base =
        "A faulty software update from vendor Kiosktech caused the Aurora transit agency fare "
        "payment machines to overcharge thousands of commuters with duplicate charges across the "
        "light rail network prompting refunds a vendor apology and a council inquiry into the "
        "failure.";
    static const std::string medi_base =
        "An overnight configuration error took down the MediSched hospital appointment "
        "scheduling platform leaving clinics across the region unable to book or confirm patient "
        "visits for two days delaying treatments until operators restored service from backups.";
    static const std::string north_base =
        "Repeated crashes in the Northbank mobile banking app locked customers out of accounts "
        "and delayed payments after a flawed release and the bank promised fixes compensation "
        "and an external audit of its development process.";
    switch (doc.kind) {
        case DocKind::Fare:
            switch (doc.variant) {
                case 1: return fare_base;
                case 2: return fare_base;  // identical on purpose: cosine exactly 1
                case 3: return fare_base + " Coverage follows the initial reports.";
                case 4: return fare_base + " Officials confirmed the refund totals.";
                case 5: return fare_base + " The inquiry scope widened further.";
                default: return fare_base + " Vendor engineers detailed the applied fix.";
            }
        case DocKind::Medi:
            switch (doc.variant) {
                case 1: return medi_base;
                case 2: return medi_base + " Follow up reporting added clinic counts.";
                case 3: return medi_base + " Staff described manual workarounds.";
                default: return medi_base + " Regulators asked for an incident review.";
            }
        case DocKind::North:
            switch (doc.variant) {
                case 1: return north_base;
                case 2: return north_base + " The audit findings were summarised.";
                default: return north_base + " Compensation details emerged later.";
            }
        default:
            return "";
    }
}

// ---------------------------------------------------------------------------
// Per-incident report answers

struct IncidentScript {
    std::string marker;  // token present in every member paragraph and summary
    std::string title;
    std::string summary;
    std::map<std::string, std::string> open_facts;  // field -> fact sentence ("" = unknown)
    std::string timeline_answer;
    std::map<std::string, std::vector<std::string>> selections;  // field -> supported options
    std::set<std::string> unknown_fields;                        // stage B answers all-unknown
};

inline const std::vector<IncidentScript>& incident_scripts() {
    static const std::vector<IncidentScript> scripts = [] {
        std::vector<IncidentScript> s(3);

        s[0].marker = "Aurora";
        s[0].title = "Aurora fare system overcharges riders after faulty Kiosktech update";
        s[0].summary =
            "A faulty Kiosktech update made Aurora fare machines issue duplicate charges to "
            "thousands of riders until a rollback and refunds resolved the failure.";
        s[0].open_facts = {
            {"system", "Kiosktech fare payment machines across the Aurora light rail network"},
            {"responsible_org", "Aurora transit agency and its payment vendor Kiosktech"},
            {"impacted_org", "Commuters on the Aurora light rail network"},
            {"software_causes",
             "A faulty update introduced a duplicate charge defect in the Aurora fare software"},
            {"nonsoftware_causes",
             "Slow vendor escalation kept the Aurora fare machines overcharging riders"},
            {"impacts", "Thousands of Aurora riders were overcharged and refunds took weeks"},
            {"preventions_fixes",
             "Kiosktech rolled back the update and Aurora added staged deployment checks"},
            {"references",
             "Statements from the Aurora transit agency and the Kiosktech incident notice"},
        };
        s[0].timeline_answer = "October 2021";
        s[0].selections = {
            {"recurring", {"one_organization", "multiple_organizations"}},
            {"phase", {"design", "operation"}},
            {"boundary", {"within_system"}},
            {"nature", {"human_actions", "nonhuman_actions"}},
            {"dimension", {"software"}},
            {"objective", {"nonmalicious"}},
            {"intent", {"poor_decisions"}},
            {"capability", {"accidental"}},
            {"duration", {"temporary"}},
            {"behaviour", {"omission", "value"}},
            {"domain", {"transportation", "finance"}},
            {"consequence", {"property"}},
            {"cps", {"true"}},
            {"perception", {"processing_unit", "embedded_software"}},
            {"communication", {"na"}},
            {"application", {"true"}},
        };

        s[1].marker = "MediSched";
        s[1].title = "MediSched outage halts hospital appointment booking for two days";
        s[1].summary =
            "A configuration error took the MediSched scheduling platform offline for two days, "
            "blocking clinic bookings until operators restored service from backups.";
        s[1].open_facts = {
            {"system", "MediSched hospital appointment scheduling platform"},
            {"responsible_org", "MediSched Systems which operates the scheduling platform"},
            {"impacted_org", "Regional clinics and patients using MediSched bookings"},
            {"software_causes",
             "An overnight configuration error broke the MediSched booking service"},
            {"nonsoftware_causes", "Understaffed overnight operations delayed the MediSched recovery"},
            {"impacts", "Clinics could not book or confirm patient visits for two days"},
            {"preventions_fixes",
             "Operators restored MediSched from backups and added configuration review gates"},
            {"references", "The MediSched status page and a regulator request for a review"},
        };
        s[1].timeline_answer = "2021-11-14";
        s[1].selections = {
            {"recurring", {"one_organization"}},
            {"phase", {"operation"}},
            {"boundary", {"within_system", "outside_system"}},
            {"nature", {"nonhuman_actions"}},
            {"dimension", {"software"}},
            {"objective", {"nonmalicious"}},
            {"intent", {"accidental_decisions"}},
            {"capability", {"accidental"}},
            {"duration", {"temporary"}},
            {"behaviour", {"crash", "omission"}},
            {"domain", {"health"}},
            {"consequence", {"delay", "harm"}},
            {"cps", {"false"}},
        };

        s[2].marker = "Northbank";
        s[2].title = "Northbank app crashes lock customers out of accounts";
        s[2].summary =
            "A flawed release made the Northbank mobile banking app crash repeatedly, locking "
            "customers out and delaying payments until fixes and an audit were arranged.";
        s[2].open_facts = {
            {"system", "Northbank mobile banking app"},
            {"responsible_org", "Northbank and its app development team"},
            {"impacted_org", "Northbank customers locked out of accounts"},
            {"software_causes", "A flawed release caused repeated crashes in the Northbank app"},
            {"nonsoftware_causes", ""},  // answered "unknown"
            {"impacts", "Customers were locked out of Northbank accounts and payments were delayed"},
            {"preventions_fixes", "Northbank promised fixes compensation and an external audit"},
            {"references", "The Northbank apology statement and the external audit summary"},
        };
        s[2].timeline_answer = "July 2021";
        s[2].selections = {
            {"recurring", {"multiple_organizations"}},
            {"phase", {"design"}},
            {"boundary", {"within_system"}},
            {"nature", {"nonhuman_actions"}},
            {"dimension", {"software"}},
            {"objective", {"nonmalicious"}},
            {"capability", {"development_incompetence"}},
            {"duration", {"intermittent"}},
            {"behaviour", {"crash"}},
            {"domain", {"finance", "information"}},
            {"consequence", {"property", "delay"}},
            {"cps", {"false"}},
        };
        s[2].unknown_fields = {"intent"};
        return s;
    }();
    return scripts;
}

// ---------------------------------------------------------------------------
// Scripted provider: answers every pipeline prompt from the tables above.

class ScriptedProvider : public CompletionProvider {
public:
    ScriptedProvider() {
        for (const auto& doc : demo_docs()) {
            by_title_[doc.title] = &doc;
            std::string summary = demo_summary(doc);
            if (!summary.empty()) summary_by_title_[doc.title] = summary;
        }
    }

    std::string id() const override { return "scripted"; }

    std::string complete(const CompletionRequest& req, Ledger& ledger) override {
        std::string response = answer(req.prompt);
        UsageRecord rec;
        split_tag(req.tag, rec.op, rec.tag);
        rec.tag = rec.tag.empty() ? rec.op : rec.tag;
        rec.provider = id();
        rec.prompt_tokens = estimate_tokens(req.prompt);
        rec.response_tokens = estimate_tokens(response);
        ledger.append(std::move(rec));
        return response;
    }

private:
    const DemoDoc* find_doc(const std::string& prompt) const {
        for (const auto& [title, doc] : by_title_)
            if (prompt.find(title) != std::string::npos) return doc;
        return nullptr;
    }

    const IncidentScript* find_incident(const std::string& text) const {
        for (const auto& script : incident_scripts())
            if (text.find(script.marker) != std::string::npos) return &script;
        return nullptr;
    }

    static std::string citation_list(const std::string& prompt) {
        std::set<long long> ids;
        size_t pos = 0;
        const std::string needle = "Article ";
        while ((pos = prompt.find(needle, pos)) != std::string::npos) {
            pos += needle.size();
            size_t end = pos;
            while (end < prompt.size() && std::isdigit(static_cast<unsigned char>(prompt[end])))
                ++end;
            if (end > pos) ids.insert(std::stoll(prompt.substr(pos, end - pos)));
            pos = end;
        }
        std::string out = "[";
        int n = 0;
        for (long long id : ids) {
            if (n == 3) break;
            if (n++) out += ", ";
            out += std::to_string(id);
        }
        return out + "]";
    }

    std::string answer(const std::string& prompt) const {
        // Step 2: relevance.
        if (prompt.find("does this article report on a software failure incident") !=
            std::string::npos) {
            const DemoDoc* doc = find_doc(prompt);
            if (!doc) throw std::logic_error("scripted provider: unknown article in relevance prompt");
            const bool relevant = doc->kind == DocKind::Fare || doc->kind == DocKind::Medi ||
                                  doc->kind == DocKind::North || doc->kind == DocKind::Thin;
            return relevant ? "true - the article reports a software failure."
                            : "false - the article does not describe a software failure.";
        }
        // Step 3: analyzability.
        if (prompt.find("does the article carry enough detail to analyze the failure") !=
            std::string::npos) {
            const DemoDoc* doc = find_doc(prompt);
            if (!doc)
                throw std::logic_error("scripted provider: unknown article in analyzability prompt");
            const bool analyzable = doc->kind == DocKind::Fare || doc->kind == DocKind::Medi ||
                                    doc->kind == DocKind::North;
            return analyzable ? "true - system, cause, and impact are identifiable."
                              : "false - the note names no system, cause, or impact.";
        }
        // Step 4: per-article summary.
        if (prompt.find("Summarize the software failure incident reported in this article") !=
            std::string::npos) {
            const DemoDoc* doc = find_doc(prompt);
            if (!doc) throw std::logic_error("scripted provider: unknown article in summary prompt");
            auto it = summary_by_title_.find(doc->title);
            if (it == summary_by_title_.end())
                throw std::logic_error("scripted provider: no summary scripted for " + doc->key);
            return it->second;
        }
        // Step 4: merge confirmation.
        if (prompt.find("do they describe the same real-world incident") != std::string::npos) {
            auto a_pos = prompt.find("Summary A:");
            auto b_pos = prompt.find("Summary B:");
            const IncidentScript* a = find_incident(prompt.substr(a_pos, b_pos - a_pos));
            const IncidentScript* b = find_incident(prompt.substr(b_pos));
            return (a && b && a == b) ? "true" : "false";
        }
        // Step 6 prompts all carry incident context.
        const IncidentScript* script = find_incident(prompt);
        if (!script) throw std::logic_error("scripted provider: unrecognized prompt:\n" + prompt);

        if (prompt.find("Write a single-line headline") != std::string::npos) return script->title;
        if (prompt.find("Write a one-paragraph summary of the software failure incident") !=
            std::string::npos)
            return script->summary;
        if (prompt.find("When did the software failure incident") != std::string::npos) {
            return "Step: the context publication dates bound the incident window.\nStep: "
                   "relative phrases resolve against the earliest coverage.\nANSWER: " +
                   script->timeline_answer;
        }
        // Taxonomy stage A.
        if (prompt.find("extract the information relevant to classifying") != std::string::npos) {
            const std::string field = field_after(prompt, "classifying the incident's ");
            const TaxonomyFieldSpec* spec = find_taxonomy_field(field);
            if (!spec) throw std::logic_error("scripted provider: bad stage-A field " + field);
            std::string out;
            auto sel = script->selections.find(field);
            for (const auto& opt : spec->options) {
                bool supported = sel != script->selections.end() &&
                                 std::find(sel->second.begin(), sel->second.end(), opt) !=
                                     sel->second.end();
                out += "OPTION " + opt + ": " +
                       (supported ? script->marker + " coverage supports " + opt : "none") + "\n";
            }
            return out;
        }
        // Taxonomy stage B.
        if (prompt.find("Evidence extracted about the incident's ") != std::string::npos) {
            const std::string field = field_after(prompt, "Evidence extracted about the incident's ");
            const TaxonomyFieldSpec* spec = find_taxonomy_field(field);
            if (!spec) throw std::logic_error("scripted provider: bad stage-B field " + field);
            std::string out;
            const bool all_unknown = script->unknown_fields.count(field) > 0;
            auto sel = script->selections.find(field);
            for (const auto& opt : spec->options) {
                std::string verdict = "no";
                if (all_unknown) {
                    verdict = "unknown";
                } else if (sel != script->selections.end() &&
                           std::find(sel->second.begin(), sel->second.end(), opt) !=
                               sel->second.end()) {
                    verdict = "yes";
                }
                out += opt + ": " + verdict + "\n";
            }
            return out;
        }
        // Open postmortem fields: match by question text.
        for (const auto& [field, fact] : script->open_facts) {
            const std::string question = detail_question(field);
            if (prompt.find(question) == std::string::npos) continue;
            if (fact.empty()) return "unknown";
            return "1. " + fact + " " + citation_list(prompt) + "\n> " + fact + ".";
        }
        throw std::logic_error("scripted provider: unrecognized prompt:\n" + prompt);
    }

    static std::string field_after(const std::string& prompt, const std::string& anchor) {
        auto pos = prompt.find(anchor);
        pos += anchor.size();
        std::string field;
        while (pos < prompt.size() &&
               (std::isalnum(static_cast<unsigned char>(prompt[pos])) || prompt[pos] == '_'))
            field += prompt[pos++];
        return field;
    }

    static std::string detail_question(const std::string& field) {
        // First sentence of each open-field template, enough to identify it.
        const std::string& tmpl = default_prompt_catalog().open_fields.at(field);
        return tmpl.substr(0, tmpl.find('\n'));
    }

    std::map<std::string, const DemoDoc*> by_title_;
    std::map<std::string, std::string> summary_by_title_;
};

// ---------------------------------------------------------------------------
// Expected outcomes, for tests

struct DemoExpectations {
    std::vector<std::vector<ArticleId>> incident_members;
    std::map<std::string, std::array<std::int64_t, 5>> funnel;  // year -> s/s/r/a/i
    std::int64_t stub_count = 0;
    std::int64_t article_count = 0;
};

inline DemoExpectations demo_expectations() {
    DemoExpectations e;
    e.incident_members = {{1, 2, 9, 10, 19, 21}, {3, 4, 12, 16}, {5, 11, 17}};
    e.funnel["2021"] = {11, 9, 7, 6, 3};
    e.funnel["2022"] = {9, 9, 8, 7, 0};
    e.stub_count = 21;
    e.article_count = 20;
    return e;
}

// Ground-truth clustering labels over the analyzable articles.
inline std::vector<std::pair<ArticleId, std::string>> demo_cluster_ground_truth() {
    std::vector<std::pair<ArticleId, std::string>> out;
    const auto expected = demo_expectations().incident_members;
    const char* labels[] = {"fare", "medi", "north"};
    for (size_t i = 0; i < expected.size(); ++i)
        for (ArticleId aid : expected[i]) out.emplace_back(aid, labels[i]);
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Corpus generation

namespace detail {

inline void check(bool ok, const std::string& what) {
    if (!ok) throw std::logic_error("demo corpus self-check failed: " + what);
}

inline std::string html_escapeless_paragraphs(const std::string& body) {
    std::string html = "<html><body>\n";
    std::string para;
    for (const auto& line : split_lines(body)) {
        if (trim(line).empty()) {
            if (!para.empty()) html += "<p>" + para + "</p>\n";
            para.clear();
        } else {
            if (!para.empty()) para += " ";
            para += line;
        }
    }
    if (!para.empty()) html += "<p>" + para + "</p>\n";
    return html + "</body></html>\n";
}

}  // namespace detail

struct DemoPaths {
    std::filesystem::path corpus_dir;
    std::filesystem::path cassette_path;
};

inline RunConfig demo_run_config(const std::filesystem::path& base) {
    RunConfig config;
    config.criteria = demo_criteria();
    config.provider_mode = ProviderMode::Replay;
    config.db_dir = (base / "db").string();
    config.corpus_dir = (base / "corpus").string();
    config.cassette_path = (base / "cassette.json").string();
    config.token_rates["replay"] = Rates{0.5e-6, 1.5e-6};
    config.token_rates["scripted"] = Rates{0.5e-6, 1.5e-6};
    config.token_rates["replay-embed"] = Rates{0.1e-6, 0.0};
    return config;
}

// Writes corpus/ and cassette.json under `base`, verifying the engineered
// structure as it goes. Deterministic: regeneration produces identical bytes.
inline DemoPaths write_demo_corpus(const std::filesystem::path& base) {
    namespace fs = std::filesystem;
    DemoPaths paths{base / "corpus", base / "cassette.json"};
    fs::create_directories(paths.corpus_dir);

    // Documents and index.
    Json documents = Json::object();
    for (const auto& doc : demo_docs()) {
        Json d;
        d["url"] = doc.url;
        d["title"] = doc.title;
        d["published"] = doc.published;
        d["file"] = doc.key + ".html";
        documents[doc.key] = d;
        if (doc.kind == DocKind::DeadMissing) continue;  // listed but absent
        std::ofstream out(paths.corpus_dir / (doc.key + ".html"));
        if (doc.kind == DocKind::DeadEmpty) {
            out << "<html><body><script>var keep = 1;</script></body></html>\n";
        } else {
            out << detail::html_escapeless_paragraphs(demo_body(doc));
        }
    }
    Json queries = Json::array();
    auto cell = [&](const char* kw, const char* src, int year, std::vector<std::string> docs) {
        queries.push_back(Json{{"keyword", kw}, {"source", src}, {"year", year}, {"docs", docs}});
    };
    cell("software glitch", "BBC News", 2021, {"fare1"});
    cell("software glitch", "BBC News", 2022, {"fare2"});
    cell("software glitch", "CNET", 2021, {"medi1"});
    cell("software glitch", "CNET", 2022, {"medi2"});
    cell("software glitch", "Reuters", 2021, {"north1"});
    cell("software glitch", "The Guardian", 2021, {"thin1"});
    cell("software bug", "BBC News", 2021, {"irrel1", "fare1"});  // duplicate URL
    cell("software bug", "BBC News", 2022, {"fare4"});
    cell("software bug", "CNET", 2021, {"fare3"});
    cell("software bug", "CNET", 2022, {"north2"});
    cell("software bug", "Reuters", 2021, {"medi3"});
    cell("software bug", "Reuters", 2022, {"thin2"});
    cell("software bug", "The Guardian", 2021, {"dead1"});
    cell("software bug", "The Guardian", 2022, {"irrel2"});
    cell("software crash", "BBC News", 2021, {"medi4"});
    cell("software crash", "BBC News", 2022, {"north3"});
    cell("software crash", "CNET", 2021, {"irrel3"});
    cell("software crash", "CNET", 2022, {"fare6"});
    cell("software crash", "Reuters", 2021, {"dead2"});
    cell("software crash", "The Guardian", 2022, {"fare5"});
    {
        Json index;
        index["documents"] = documents;
        index["queries"] = queries;
        std::ofstream out(paths.corpus_dir / "index.json");
        out << index.dump(1) << "\n";
    }

    // Self-checks on the engineered embedding structure.
    HashEmbeddingProvider embedder;
    Ledger scratch;
    std::vector<std::pair<const DemoDoc*, EmbeddingVector>> summaries;
    for (const auto& doc : demo_docs()) {
        std::string s = demo_summary(doc);
        if (s.empty()) continue;
        summaries.emplace_back(&doc, embedder.embed(s, scratch));
    }
    detail::check(summaries.size() == 13, "expected 13 analyzable summaries");
    for (size_t i = 0; i < summaries.size(); ++i) {
        for (size_t j = i + 1; j < summaries.size(); ++j) {
            const double cos = cosine_similarity(summaries[i].second.components,
                                                 summaries[j].second.components);
            const bool same = summaries[i].first->kind == summaries[j].first->kind;
            if (same) {
                detail::check(cos >= 0.82, "within-incident similarity too low: " +
                                               summaries[i].first->key + " vs " +
                                               summaries[j].first->key);
                const bool identical =
                    demo_summary(*summaries[i].first) == demo_summary(*summaries[j].first);
                if (!identical)
                    detail::check(cos < 0.99, "distinct summaries too similar: " +
                                                  summaries[i].first->key + " vs " +
                                                  summaries[j].first->key);
            } else {
                detail::check(cos < 0.70, "cross-incident similarity too high: " +
                                              summaries[i].first->key + " vs " +
                                              summaries[j].first->key);
            }
        }
    }
    std::int64_t fare_words = 0, medi_words = 0;
    for (const auto& doc : demo_docs()) {
        if (doc.kind == DocKind::Fare) fare_words += word_count(demo_body(doc));
        if (doc.kind == DocKind::Medi) medi_words += word_count(demo_body(doc));
    }
    detail::check(fare_words > 12000, "fare incident must exceed the 12k-word budget");
    detail::check(medi_words <= 12000, "medi incident must fit the 12k-word budget");

    // Record the cassette by running the pipeline against the scripted
    // provider in a scratch database.
    auto cassette = std::make_shared<ReplayCassette>(CassetteMode::Record);
    {
        auto scripted = std::make_shared<ScriptedProvider>();
        CassetteCompletionProvider recorder(cassette, scripted, "replay");
        RunConfig config = demo_run_config(base);
        const fs::path scratch_db = base / "__record_db";
        fs::remove_all(scratch_db);
        config.db_dir = scratch_db.string();
        FixtureBackend backend(paths.corpus_dir);
        FixedClock clock;
        RunSummary summary = run_pipeline(config, backend, recorder, embedder, clock);
        const auto expected = demo_expectations();
        detail::check(summary.stubs_found == expected.stub_count, "stub count drifted");
        detail::check(summary.articles == expected.article_count, "article count drifted");
        detail::check(summary.incidents == 3, "expected exactly 3 incidents");
        detail::check(summary.reports == 3, "expected exactly 3 reports");
        {
            Database db = Database::open(scratch_db);
            detail::check(db.verify().empty(), "recorded database failed verification");
            for (size_t i = 0; i < expected.incident_members.size(); ++i)
                detail::check(db.incidents()[i].article_ids == expected.incident_members[i],
                              "incident membership drifted");
        }
        fs::remove_all(scratch_db);
    }

    // Pre-record every summary-pair confirmation so merges replay at any
    // threshold without cassette misses.
    {
        ScriptedProvider scripted;
        Ledger ignore;
        const std::string tmpl = MergeConfig().confirmation_prompt_template;
        for (const auto& [doc_a, vec_a] : summaries) {
            for (const auto& [doc_b, vec_b] : summaries) {
                CompletionRequest req;
                req.prompt = render_template(tmpl, {{"summary_a", demo_summary(*doc_a)},
                                                    {"summary_b", demo_summary(*doc_b)}});
                req.tag = "confirm|pair";
                const std::string fp = request_fingerprint(req.prompt, req.temperature, "replay");
                cassette->record(fp, scripted.complete(req, ignore));
            }
        }
    }
    cassette->save(paths.cassette_path);
    {
        std::ofstream out(base / "config.json");
        out << encode(demo_run_config(base)).dump(1) << "\n";
    }
    return paths;
}

}  // namespace failmine::fixtures
