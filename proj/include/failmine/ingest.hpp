#pragma once

// Search-and-scrape stage: build (keyword, source, yearly window) queries,
// fetch result stubs from a pluggable backend, scrape article bodies from
// HTML, and deduplicate by canonical URL.
//
// The only backend shipped is the offline fixture backend, which reads a
// corpus directory:
//   index.json  — {"documents": {id: {url, title, source, published, file}},
//                  "queries": [{keyword, source, year, docs: [id, ...]}]}
//   *.html      — the documents themselves
// A live adapter can implement SearchBackend against a real search service.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "failmine/common.hpp"
#include "failmine/model.hpp"

namespace failmine {

struct QuerySpec {
    std::string keyword;
    std::string source;
    DateRange window;

    friend bool operator==(const QuerySpec&, const QuerySpec&) = default;
};

struct ArticleStub {
    std::string url;
    std::string title;
    std::string source;
    std::string matched_keyword;
    std::optional<Date> published_at;
    std::string doc_id;  // backend-internal handle for fetch_document
};

class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual std::vector<ArticleStub> search(const QuerySpec& spec) = 0;
    // Raw HTML, or nullopt when the document is unreachable.
    virtual std::optional<std::string> fetch_document(const ArticleStub& stub) = 0;
};

// Cartesian product keyword x source x yearly windows covering the range.
// Order is keyword-major, then source, then window; byte-identical per input.
inline std::vector<QuerySpec> build_queries(const SearchCriteria& criteria) {
    auto problems = criteria.validate();
    if (!problems.empty()) throw ConfigError("invalid criteria: " + problems.front());

    std::vector<DateRange> windows;
    for (int y = criteria.date_range.start.year; y <= criteria.date_range.end.year; ++y) {
        DateRange w{Date{y, 1, 1}, Date{y, 12, 31}};
        if (w.start < criteria.date_range.start) w.start = criteria.date_range.start;
        if (criteria.date_range.end < w.end) w.end = criteria.date_range.end;
        windows.push_back(w);
    }

    std::vector<QuerySpec> specs;
    specs.reserve(criteria.keywords.size() * criteria.sources.size() * windows.size());
    for (const auto& keyword : criteria.keywords)
        for (const auto& source : criteria.sources)
            for (const auto& window : windows) specs.push_back({keyword, source, window});
    return specs;
}

// ---------------------------------------------------------------------------
// URL canonicalization: lowercase scheme and host, drop the fragment, drop
// known tracking query parameters (utm_*, fbclid, gclid).

inline std::string canonicalize_url(const std::string& raw) {
    std::string url = trim(raw);
    // Fragment.
    if (auto pos = url.find('#'); pos != std::string::npos) url.resize(pos);

    // Lowercase scheme://host.
    auto scheme_end = url.find("://");
    size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    size_t host_end = url.find_first_of("/?", host_start);
    if (host_end == std::string::npos) host_end = url.size();
    for (size_t i = 0; i < host_end; ++i)
        url[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(url[i])));

    // Tracking params.
    auto qpos = url.find('?');
    if (qpos == std::string::npos) return url;
    std::string base = url.substr(0, qpos);
    std::string query = url.substr(qpos + 1);
    std::vector<std::string> kept;
    size_t start = 0;
    while (start <= query.size()) {
        size_t amp = query.find('&', start);
        std::string param = query.substr(start, amp == std::string::npos ? std::string::npos
                                                                         : amp - start);
        if (!param.empty()) {
            std::string key = to_lower(param.substr(0, param.find('=')));
            bool tracking = key.rfind("utm_", 0) == 0 || key == "fbclid" || key == "gclid";
            if (!tracking) kept.push_back(param);
        }
        if (amp == std::string::npos) break;
        start = amp + 1;
    }
    if (kept.empty()) return base;
    std::string out = base + "?";
    for (size_t i = 0; i < kept.size(); ++i) {
        if (i) out += "&";
        out += kept[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// HTML to text. A tolerant scanner, not a real DOM: drops script/style,
// treats block-level tags as paragraph breaks, strips the rest, and decodes
// the common entities. Malformed input degrades, it never throws.

namespace detail {

inline bool tag_name_is(std::string_view tag, std::string_view name) {
    size_t i = 0;
    while (i < tag.size() && (tag[i] == '/' || std::isspace(static_cast<unsigned char>(tag[i]))))
        ++i;
    if (tag.size() - i < name.size()) return false;
    for (size_t j = 0; j < name.size(); ++j)
        if (std::tolower(static_cast<unsigned char>(tag[i + j])) != name[j]) return false;
    size_t end = i + name.size();
    return end == tag.size() || !std::isalnum(static_cast<unsigned char>(tag[end]));
}

inline std::string decode_entities(std::string text) {
    static const std::pair<const char*, const char*> table[] = {
        {"&amp;", "&"}, {"&lt;", "<"},    {"&gt;", ">"},   {"&quot;", "\""},
        {"&#39;", "'"}, {"&apos;", "'"},  {"&nbsp;", " "}, {"&#34;", "\""},
    };
    for (const auto& [from, to] : table) text = replace_all(std::move(text), from, to);
    return text;
}

}  // namespace detail

inline std::string html_to_text(const std::string& html) {
    static const char* kBlockTags[] = {"p", "div", "br", "li", "h1", "h2", "h3",
                                       "h4", "h5", "h6", "tr", "article", "section"};
    std::vector<std::string> paragraphs;
    std::string current;
    auto flush = [&] {
        // Collapse intra-paragraph whitespace.
        std::string collapsed;
        for (const auto& tok : split_whitespace(detail::decode_entities(current))) {
            if (!collapsed.empty()) collapsed += " ";
            collapsed += tok;
        }
        if (!collapsed.empty()) paragraphs.push_back(std::move(collapsed));
        current.clear();
    };

    size_t i = 0;
    bool skipping = false;  // inside script/style
    std::string skip_until;
    while (i < html.size()) {
        if (html[i] == '<') {
            size_t close = html.find('>', i + 1);
            if (close == std::string::npos) break;  // unterminated tag: drop the tail
            std::string_view tag(html.data() + i + 1, close - i - 1);
            if (skipping) {
                if (!tag.empty() && tag[0] == '/' && detail::tag_name_is(tag, skip_until))
                    skipping = false;
            } else if (detail::tag_name_is(tag, "script") && tag[0] != '/') {
                skipping = true;
                skip_until = "script";
            } else if (detail::tag_name_is(tag, "style") && tag[0] != '/') {
                skipping = true;
                skip_until = "style";
            } else if (detail::tag_name_is(tag, "title") && tag[0] != '/') {
                skipping = true;
                skip_until = "title";
            } else {
                for (const char* name : kBlockTags) {
                    if (detail::tag_name_is(tag, name)) {
                        flush();
                        break;
                    }
                }
            }
            i = close + 1;
        } else {
            if (!skipping) current += html[i];
            ++i;
        }
    }
    flush();

    std::string out;
    for (size_t p = 0; p < paragraphs.size(); ++p) {
        if (p) out += "\n\n";
        out += paragraphs[p];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fixture backend

class FixtureBackend : public SearchBackend {
public:
    explicit FixtureBackend(const std::filesystem::path& dir) : dir_(dir) {
        std::ifstream in(dir / "index.json");
        if (!in) throw ConfigError("fixture corpus index not found: " + (dir / "index.json").string());
        index_ = Json::parse(in);
    }

    std::vector<ArticleStub> search(const QuerySpec& spec) override {
        std::vector<ArticleStub> stubs;
        for (const auto& q : index_.at("queries")) {
            if (q.at("keyword").get<std::string>() != spec.keyword) continue;
            if (q.at("source").get<std::string>() != spec.source) continue;
            int year = q.at("year").get<int>();
            if (year < spec.window.start.year || year > spec.window.end.year) continue;
            for (const auto& doc_id : q.at("docs")) {
                const auto& doc = index_.at("documents").at(doc_id.get<std::string>());
                ArticleStub stub;
                stub.url = doc.at("url").get<std::string>();
                stub.title = doc.at("title").get<std::string>();
                stub.source = spec.source;
                stub.matched_keyword = spec.keyword;
                stub.published_at = parse_date(doc.at("published").get<std::string>());
                stub.doc_id = doc_id.get<std::string>();
                stubs.push_back(std::move(stub));
            }
        }
        return stubs;
    }

    std::optional<std::string> fetch_document(const ArticleStub& stub) override {
        const auto& doc = index_.at("documents").at(stub.doc_id);
        std::filesystem::path file = dir_ / doc.at("file").get<std::string>();
        std::ifstream in(file, std::ios::binary);
        if (!in) return std::nullopt;
        std::string html((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return html;
    }

private:
    std::filesystem::path dir_;
    Json index_;
};

// ---------------------------------------------------------------------------
// Stage operations

// Runs one query. Backend failures are recorded, not fatal; the stub list is
// empty for a failed spec.
inline std::vector<ArticleStub> fetch(const QuerySpec& spec, SearchBackend& backend,
                                      std::vector<std::string>* failures = nullptr) {
    try {
        auto stubs = backend.search(spec);
        for (auto& s : stubs) {
            s.matched_keyword = spec.keyword;
            s.source = spec.source;
        }
        return stubs;
    } catch (const std::exception& e) {
        if (failures)
            failures->push_back("query '" + spec.keyword + "' x '" + spec.source +
                                "' failed: " + e.what());
        return {};
    }
}

// Fetches and parses one article. Any failure yields scraped_ok = false with
// an empty body; scrape itself never throws on bad input.
inline Article scrape(const ArticleStub& stub, SearchBackend& backend, ArticleId id) {
    Article a;
    a.id = id;
    a.url = canonicalize_url(stub.url);
    a.source = stub.source;
    a.matched_keyword = stub.matched_keyword;
    a.title = stub.title;
    a.published_at = stub.published_at;
    std::optional<std::string> html;
    try {
        html = backend.fetch_document(stub);
    } catch (const std::exception&) {
        html = std::nullopt;
    }
    if (html) a.body = html_to_text(*html);
    a.scraped_ok = !a.body.empty();
    if (!a.scraped_ok) a.body.clear();
    a.word_count = word_count(a.body);
    return a;
}

// Unique by canonical URL; the first occurrence wins and keeps its keyword.
// Output preserves input order; idempotent.
inline std::vector<Article> dedupe(const std::vector<Article>& articles) {
    std::vector<Article> out;
    std::set<std::string> seen;
    for (const auto& a : articles) {
        std::string key = canonicalize_url(a.url);
        if (seen.insert(key).second) out.push_back(a);
    }
    return out;
}

}  // namespace failmine
