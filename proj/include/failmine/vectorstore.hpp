#pragma once

// Paragraph chunking and a flat-file vector store with exact full-scan
// retrieval.
//
// Store file layout (little-endian), version 1:
//   header:  magic "FMVS" | u32 version | u32 dimension | u64 record count
//   record:  i64 incident_id | i64 article_id | u32 order_index
//            | u32 text_len | text bytes | dimension * f32 components
//
// Records keep insertion order. Rewrites go through a temp file plus rename,
// so readers never observe a torn store.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "failmine/common.hpp"
#include "failmine/model.hpp"
#include "failmine/providers.hpp"

namespace failmine {

class VectorStoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Chunk {
    IncidentId incident_id = 0;
    ArticleId article_id = 0;
    int order_index = 0;  // 0-based position within the article
    std::string text;
    std::vector<float> embedding;

    friend bool operator==(const Chunk&, const Chunk&) = default;
};

// cosine(u, v) = dot(u, v) / (|u| |v|), accumulated in double.
inline double cosine_similarity(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size())
        throw VectorStoreError("cosine_similarity: dimension mismatch (" +
                               std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u[i]) * v[i];
        nu += static_cast<double>(u[i]) * u[i];
        nv += static_cast<double>(v[i]) * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw VectorStoreError("cosine_similarity: zero vector");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

namespace detail {

// Splits an oversized paragraph at the sentence boundary nearest its midpoint;
// recurses until every piece fits. Concatenating the pieces with single
// spaces reproduces the paragraph's token stream.
inline void split_paragraph(const std::string& para, int max_tokens,
                            std::vector<std::string>& out) {
    if (estimate_tokens(para) <= max_tokens) {
        out.push_back(para);
        return;
    }
    // Candidate split points: just after '.', '!' or '?' followed by a space.
    std::vector<size_t> boundaries;
    for (size_t i = 0; i + 1 < para.size(); ++i) {
        if ((para[i] == '.' || para[i] == '!' || para[i] == '?') && para[i + 1] == ' ')
            boundaries.push_back(i + 1);
    }
    const size_t mid = para.size() / 2;
    size_t cut = std::string::npos;
    for (size_t b : boundaries) {
        if (cut == std::string::npos ||
            std::llabs(static_cast<long long>(b) - static_cast<long long>(mid)) <
                std::llabs(static_cast<long long>(cut) - static_cast<long long>(mid)))
            cut = b;
    }
    if (cut == std::string::npos || cut == 0 || cut >= para.size()) {
        // No sentence boundary: cut at the whitespace nearest the midpoint.
        size_t best = std::string::npos;
        for (size_t i = 1; i + 1 < para.size(); ++i) {
            if (para[i] == ' ' &&
                (best == std::string::npos ||
                 std::llabs(static_cast<long long>(i) - static_cast<long long>(mid)) <
                     std::llabs(static_cast<long long>(best) - static_cast<long long>(mid))))
                best = i;
        }
        if (best == std::string::npos) {  // one giant token; keep as-is
            out.push_back(para);
            return;
        }
        cut = best;
    }
    std::string left = trim(para.substr(0, cut));
    std::string right = trim(para.substr(cut));
    if (left.empty() || right.empty()) {
        out.push_back(para);
        return;
    }
    split_paragraph(left, max_tokens, out);
    split_paragraph(right, max_tokens, out);
}

}  // namespace detail

// Splits a body on blank lines; paragraphs over `max_tokens` estimated tokens
// are further split at sentence boundaries. Never yields an empty chunk.
inline std::vector<std::string> chunk_article(const Article& article, int max_tokens = 300) {
    if (article.body.empty()) throw VectorStoreError("chunk_article: empty body");
    std::vector<std::string> paragraphs;
    std::string current;
    auto flush = [&] {
        std::string t = trim(current);
        if (!t.empty()) paragraphs.push_back(std::move(t));
        current.clear();
    };
    for (const auto& line : split_lines(article.body)) {
        if (trim(line).empty()) {
            flush();
        } else {
            if (!current.empty()) current += "\n";
            current += line;
        }
    }
    flush();

    std::vector<std::string> chunks;
    for (const auto& p : paragraphs) detail::split_paragraph(p, max_tokens, chunks);
    return chunks;
}

class VectorStore {
public:
    VectorStore() = default;

    static VectorStore open(const std::filesystem::path& path, int dimension) {
        VectorStore s;
        s.path_ = path;
        s.dimension_ = dimension;
        if (std::filesystem::exists(path)) s.load();
        return s;
    }

    int dimension() const { return dimension_; }
    size_t size() const { return chunks_.size(); }
    const std::vector<Chunk>& chunks() const { return chunks_; }

    bool has_article(IncidentId incident_id, ArticleId article_id) const {
        for (const auto& c : chunks_)
            if (c.incident_id == incident_id && c.article_id == article_id) return true;
        return false;
    }

    // Replaces any existing chunks for (incident, article), then embeds and
    // appends the new ones. Returns the number stored.
    size_t upsert_chunks(IncidentId incident_id, ArticleId article_id,
                         const std::vector<std::string>& texts, EmbeddingProvider& embedder,
                         Ledger& ledger) {
        std::vector<Chunk> fresh;
        fresh.reserve(texts.size());
        int order = 0;
        for (const auto& text : texts) {
            Chunk c;
            c.incident_id = incident_id;
            c.article_id = article_id;
            c.order_index = order++;
            c.text = text;
            c.embedding = embedder.embed(text, ledger).components;
            if (static_cast<int>(c.embedding.size()) != dimension_)
                throw VectorStoreError("embedding dimension " +
                                       std::to_string(c.embedding.size()) +
                                       " does not match store dimension " +
                                       std::to_string(dimension_));
            fresh.push_back(std::move(c));
        }
        chunks_.erase(std::remove_if(chunks_.begin(), chunks_.end(),
                                     [&](const Chunk& c) {
                                         return c.incident_id == incident_id &&
                                                c.article_id == article_id;
                                     }),
                      chunks_.end());
        for (auto& c : fresh) chunks_.push_back(std::move(c));
        persist();
        return texts.size();
    }

    // The k highest-cosine chunks within an incident, regrouped by source
    // article (in article insertion order) and ordered by order_index within
    // each group. Ties break on (article_id, order_index) ascending.
    std::vector<Chunk> query_top_k(IncidentId incident_id, const EmbeddingVector& query,
                                   int k) const {
        if (k < 1) throw VectorStoreError("query_top_k: k must be >= 1");
        std::vector<const Chunk*> members;
        for (const auto& c : chunks_)
            if (c.incident_id == incident_id) members.push_back(&c);
        if (members.empty())
            throw VectorStoreError("query_top_k: incident " + std::to_string(incident_id) +
                                   " has no stored chunks");

        std::vector<std::pair<double, const Chunk*>> scored;
        scored.reserve(members.size());
        for (const Chunk* c : members)
            scored.emplace_back(cosine_similarity(c->embedding, query.components), c);
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            if (a.second->article_id != b.second->article_id)
                return a.second->article_id < b.second->article_id;
            return a.second->order_index < b.second->order_index;
        });
        if (static_cast<size_t>(k) < scored.size()) scored.resize(static_cast<size_t>(k));

        std::set<const Chunk*> selected;
        for (const auto& [score, c] : scored) selected.insert(c);

        // Regroup: articles in store insertion order, chunks by order_index.
        std::vector<ArticleId> article_order;
        std::map<ArticleId, std::vector<const Chunk*>> groups;
        for (const Chunk* c : members) {
            if (!selected.count(c)) continue;
            if (!groups.count(c->article_id)) article_order.push_back(c->article_id);
            groups[c->article_id].push_back(c);
        }
        std::vector<Chunk> out;
        for (ArticleId aid : article_order) {
            auto& g = groups[aid];
            std::sort(g.begin(), g.end(),
                      [](const Chunk* a, const Chunk* b) { return a->order_index < b->order_index; });
            for (const Chunk* c : g) out.push_back(*c);
        }
        return out;
    }

    void dump_jsonl(std::ostream& out) const {
        for (const auto& c : chunks_) {
            Json j;
            j["incident_id"] = c.incident_id;
            j["article_id"] = c.article_id;
            j["order_index"] = c.order_index;
            j["text"] = c.text;
            j["embedding"] = c.embedding;
            out << j.dump() << "\n";
        }
    }

private:
    static constexpr char kMagic[4] = {'F', 'M', 'V', 'S'};
    static constexpr std::uint32_t kVersion = 1;

    template <typename T>
    static void write_pod(std::ostream& out, T v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    template <typename T>
    static void read_pod(std::istream& in, T& v) {
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
    }

    void persist() const {
        if (path_.empty()) return;  // in-memory store (tests)
        const std::filesystem::path tmp = path_.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw VectorStoreError("cannot write " + tmp.string());
            out.write(kMagic, 4);
            write_pod(out, kVersion);
            write_pod(out, static_cast<std::uint32_t>(dimension_));
            write_pod(out, static_cast<std::uint64_t>(chunks_.size()));
            for (const auto& c : chunks_) {
                write_pod(out, static_cast<std::int64_t>(c.incident_id));
                write_pod(out, static_cast<std::int64_t>(c.article_id));
                write_pod(out, static_cast<std::uint32_t>(c.order_index));
                write_pod(out, static_cast<std::uint32_t>(c.text.size()));
                out.write(c.text.data(), static_cast<std::streamsize>(c.text.size()));
                out.write(reinterpret_cast<const char*>(c.embedding.data()),
                          static_cast<std::streamsize>(c.embedding.size() * sizeof(float)));
            }
            if (!out) throw VectorStoreError("short write to " + tmp.string());
        }
        std::filesystem::rename(tmp, path_);
    }

    void load() {
        std::ifstream in(path_, std::ios::binary);
        if (!in) throw VectorStoreError("cannot open " + path_.string());
        char magic[4];
        in.read(magic, 4);
        if (std::memcmp(magic, kMagic, 4) != 0)
            throw VectorStoreError("bad magic in " + path_.string());
        std::uint32_t version = 0, dim = 0;
        std::uint64_t count = 0;
        read_pod(in, version);
        read_pod(in, dim);
        read_pod(in, count);
        if (version != kVersion)
            throw VectorStoreError("unsupported store version " + std::to_string(version));
        if (static_cast<int>(dim) != dimension_)
            throw VectorStoreError("store dimension " + std::to_string(dim) +
                                   " does not match configured dimension " +
                                   std::to_string(dimension_));
        chunks_.clear();
        chunks_.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            Chunk c;
            std::int64_t iid = 0, aid = 0;
            std::uint32_t order = 0, len = 0;
            read_pod(in, iid);
            read_pod(in, aid);
            read_pod(in, order);
            read_pod(in, len);
            c.incident_id = iid;
            c.article_id = aid;
            c.order_index = static_cast<int>(order);
            c.text.resize(len);
            in.read(c.text.data(), len);
            c.embedding.resize(dim);
            in.read(reinterpret_cast<char*>(c.embedding.data()),
                    static_cast<std::streamsize>(dim * sizeof(float)));
            if (!in) throw VectorStoreError("truncated store file " + path_.string());
            chunks_.push_back(std::move(c));
        }
    }

    std::filesystem::path path_;
    int dimension_ = 64;
    std::vector<Chunk> chunks_;
};

}  // namespace failmine
