#pragma once

// The full prompt catalog. Slots use {name} placeholders and are filled with
// render(). One catalog entry exists per screening stage, per merge step, per
// report field, and per taxonomy coding stage; total_prompt_count() is the
// number of distinct templates the pipeline runs with.

#include <map>
#include <string>
#include <vector>

#include "failmine/common.hpp"
#include "failmine/model.hpp"

namespace failmine {

inline std::string render_template(std::string tmpl,
                                   const std::map<std::string, std::string>& slots) {
    for (const auto& [key, value] : slots) tmpl = replace_all(std::move(tmpl), "{" + key + "}", value);
    return tmpl;
}

struct PromptCatalog {
    // Screening (steps 2-3).
    std::string relevance;
    std::string analyzability;

    // Merging (step 4).
    std::string article_summary;
    std::string confirm_same_incident;

    // Report header fields.
    std::string title;
    std::string incident_summary;

    // One extraction template per open postmortem field (timeline included,
    // with its chain-of-thought walk and exemplars).
    std::map<std::string, std::string> open_fields;

    // Taxonomy coding: a shared stage-A evidence-extraction template plus one
    // stage-B option-marking template per field.
    std::string taxonomy_stage_a;
    std::map<std::string, std::string> taxonomy_stage_b;

    size_t total_prompt_count() const {
        return 6 + open_fields.size() + 1 + taxonomy_stage_b.size();
    }
};

namespace detail {

inline std::string open_field_question(const std::string& field) {
    if (field == "system")
        return "What system, product, component, or service failed in the incident? Include "
               "specific models and versions when reported.";
    if (field == "responsible_org")
        return "Which organizations or entities were responsible for the failure, i.e. developed "
               "or operated the software that failed?";
    if (field == "impacted_org")
        return "Which organizations, groups, or people were impacted by the failure?";
    if (field == "software_causes")
        return "What software causes of the failure are reported: bugs, design flaws, "
               "misconfigurations, or exploited vulnerabilities?";
    if (field == "nonsoftware_causes")
        return "What non-software causes contributed to the failure: hardware faults, human "
               "error, process failures, or environmental factors?";
    if (field == "impacts")
        return "What were the impacts of the failure on users, operations, money, data, or "
               "safety?";
    if (field == "preventions_fixes")
        return "What preventions, fixes, or mitigations are reported or recommended for the "
               "failure?";
    if (field == "references")
        return "Which reports, statements, investigations, or documents does the coverage "
               "reference in connection with the incident?";
    throw ConfigError("no question for open field " + field);
}

inline std::string open_field_instructions() {
    return "Return the facts as a numbered list. Follow every item with citations to the source "
           "articles in the format: [#, #, ...], where # is an article id from the context. "
           "After the list you may add supporting quotes, one per line, each starting with \"> \". "
           "If the context contains no information for this question, answer with the single word "
           "\"unknown\".";
}

inline std::string timeline_template() {
    return "When did the software failure incident described in the context happen?\n"
           "Work through the evidence step by step before answering:\n"
           "1. List any explicit incident dates stated in the context.\n"
           "2. List each article's publication date from its header.\n"
           "3. Resolve relative phrases (\"last month\", \"on Tuesday\") against the publication "
           "dates using explicit date arithmetic.\n"
           "4. Conclude with the incident date or date range.\n"
           "Write the final line as \"ANSWER: <date expression>\", or \"ANSWER: unknown\" when "
           "the context has no temporal cues.\n"
           "\n"
           "Example 1:\n"
           "An article published 2021-06-10 says the outage began \"two days earlier\".\n"
           "Step: 2021-06-10 minus 2 days = 2021-06-08.\n"
           "ANSWER: 2021-06-08\n"
           "\n"
           "Example 2:\n"
           "An article published 2020-03-15 says customers \"were locked out since last month\".\n"
           "Step: the month before March 2020 is February 2020.\n"
           "ANSWER: February 2020\n"
           "\n"
           "Context:\n"
           "{context}\n";
}

}  // namespace detail

inline const PromptCatalog& default_prompt_catalog() {
    static const PromptCatalog catalog = [] {
        PromptCatalog c;

        c.relevance =
            "You are reviewing a news article.\n"
            "Question: does this article report on a software failure incident, i.e. a software "
            "bug, glitch, outage, exploited vulnerability, or malfunction that caused a "
            "real-world problem?\n"
            "Answer on the first line with exactly \"true\" or \"false\", then give a "
            "one-sentence rationale.\n"
            "\n"
            "Article:\n"
            "{article}\n";

        c.analyzability =
            "You are reviewing a news article that reports on a software failure.\n"
            "Question: does the article carry enough detail to analyze the failure? Answer "
            "\"true\" only if all three of the following are identifiable from the text: (1) the "
            "system or product that failed, (2) the cause or suspected cause, and (3) the impact "
            "on people or organizations.\n"
            "Answer on the first line with exactly \"true\" or \"false\", then give a "
            "one-sentence rationale.\n"
            "\n"
            "Article:\n"
            "{article}\n";

        c.article_summary =
            "Summarize the software failure incident reported in this article in one paragraph.\n"
            "Cover: when the failure happened, what system failed, the cause of the failure, the "
            "impact of the failure, the organization responsible, and the organizations or "
            "people impacted.\n"
            "\n"
            "Article:\n"
            "{article}\n";

        c.confirm_same_incident =
            "Two summaries of software failure reports follow.\n"
            "Question: do they describe the same real-world incident?\n"
            "Answer on the first line with exactly \"true\" or \"false\".\n"
            "\n"
            "Summary A:\n"
            "{summary_a}\n"
            "\n"
            "Summary B:\n"
            "{summary_b}\n";

        c.title =
            "Write a single-line headline of at most 15 words for the software failure incident "
            "described in the context below.\n"
            "\n"
            "Context:\n"
            "{context}\n";

        c.incident_summary =
            "Write a one-paragraph summary of the software failure incident described in the "
            "context below, covering what failed, why it failed, and with what impact.\n"
            "\n"
            "Context:\n"
            "{context}\n";

        for (const auto& field : open_field_names()) {
            if (field == "timeline") {
                c.open_fields[field] = detail::timeline_template();
            } else {
                c.open_fields[field] = detail::open_field_question(field) + "\n" +
                                       detail::open_field_instructions() +
                                       "\n\nContext:\n{context}\n";
            }
        }

        c.taxonomy_stage_a =
            "Read the context and extract the information relevant to classifying the incident's "
            "{field_label}.\n"
            "{field_label} here means: {definition}.\n"
            "The options are: {options}.\n"
            "For each option, write one line starting with \"OPTION <name>:\" followed by the "
            "evidence from the context that bears on that option, or \"none\" when the context "
            "offers none.\n"
            "\n"
            "Context:\n"
            "{context}\n";

        for (const auto& spec : taxonomy_catalog()) {
            std::string options;
            for (size_t i = 0; i < spec.options.size(); ++i) {
                if (i) options += ", ";
                options += spec.options[i];
            }
            c.taxonomy_stage_b[spec.name] =
                "Evidence extracted about the incident's " + spec.name + " (" + spec.definition +
                "):\n"
                "{evidence}\n"
                "\n"
                "Decide which options characterize the incident. Any number of options may "
                "apply.\n"
                "Answer with one line per option, in the exact format \"<option>: yes\", "
                "\"<option>: no\", or \"<option>: unknown\".\n"
                "Options: " + options + "\n";
        }
        return c;
    }();
    return catalog;
}

}  // namespace failmine
