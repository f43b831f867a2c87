#pragma once

// Text-completion and text-embedding provider contracts, plus the two
// implementations the pipeline runs with:
//
//  * CassetteCompletionProvider — record/replay against a content-addressed
//    JSON map on disk. Replay mode performs no network I/O at all.
//  * HttpCompletionProvider / HttpEmbeddingProvider — a chat-completion-style
//    HTTP backend, configured through environment variables.
//
// Every call appends a UsageRecord to the caller's ledger before returning.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "failmine/common.hpp"
#include "failmine/model.hpp"

namespace failmine {

// ---------------------------------------------------------------------------
// Errors

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CassetteMissError : public std::runtime_error {
public:
    explicit CassetteMissError(const std::string& fingerprint)
        : std::runtime_error("cassette miss for fingerprint " + fingerprint),
          fingerprint_(fingerprint) {}
    const std::string& fingerprint() const { return fingerprint_; }

private:
    std::string fingerprint_;
};

class EmptyTextError : public std::runtime_error {
public:
    EmptyTextError() : std::runtime_error("cannot embed empty text") {}
};

// ---------------------------------------------------------------------------
// Requests and vectors

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.0;  // the pipeline always runs deterministic completions
    int max_response_tokens = 1024;
    std::string tag;  // "op" or "op|item" for the ledger
};

struct EmbeddingVector {
    std::vector<float> components;

    int dimension() const { return static_cast<int>(components.size()); }

    double norm() const {
        double s = 0.0;
        for (float c : components) s += static_cast<double>(c) * c;
        return std::sqrt(s);
    }
};

// Token estimate: ceil(words * 4/3). The pipeline measures its context budget
// in words and converts to tokens only at the provider boundary.
inline std::int64_t estimate_tokens(std::string_view text) {
    std::int64_t words = word_count(text);
    return (words * 4 + 2) / 3;
}

inline void split_tag(const std::string& tag, std::string& op, std::string& item) {
    auto pos = tag.find('|');
    if (pos == std::string::npos) {
        op = tag;
        item.clear();
    } else {
        op = tag.substr(0, pos);
        item = tag.substr(pos + 1);
    }
}

// ---------------------------------------------------------------------------
// Clock: wall time for ledger records and incident timestamps. The replay
// clock is fixed so hermetic runs are byte-identical.

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::string now_iso() const = 0;
    virtual std::int64_t now_ms() const = 0;
};

class SystemClock : public Clock {
public:
    std::string now_iso() const override {
        auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }
    std::int64_t now_ms() const override {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now().time_since_epoch())
            .count();
    }
};

class FixedClock : public Clock {
public:
    explicit FixedClock(std::string iso = "2024-01-01T00:00:00Z") : iso_(std::move(iso)) {}
    std::string now_iso() const override { return iso_; }
    std::int64_t now_ms() const override { return 0; }

private:
    std::string iso_;
};

// ---------------------------------------------------------------------------
// Provider interfaces

class CompletionProvider {
public:
    virtual ~CompletionProvider() = default;
    virtual std::string id() const = 0;
    // Appends one UsageRecord to `ledger`. Throws TransportError after the
    // retry budget, or CassetteMissError in replay mode.
    virtual std::string complete(const CompletionRequest& req, Ledger& ledger) = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual int dimension() const = 0;
    // Returns a unit-norm vector. Throws EmptyTextError on empty input.
    virtual EmbeddingVector embed(const std::string& text, Ledger& ledger) = 0;
};

// ---------------------------------------------------------------------------
// Replay cassette
//
// On disk a cassette is a single JSON object mapping request fingerprints to
// recorded response text. The fingerprint is the FNV-1a hash of the prompt
// text, the temperature rendered with two decimals, and the provider id.

enum class CassetteMode { Record, Replay, Hybrid };

inline std::string request_fingerprint(const std::string& prompt, double temperature,
                                       const std::string& provider_id) {
    char temp[16];
    std::snprintf(temp, sizeof(temp), "%.2f", temperature);
    std::uint64_t h = fnv1a64(prompt);
    h = fnv1a64(temp, h);
    h = fnv1a64(provider_id, h);
    return hex64(h);
}

class ReplayCassette {
public:
    ReplayCassette() : mode_(CassetteMode::Replay) {}
    explicit ReplayCassette(CassetteMode mode) : mode_(mode) {}

    // Loads the map from `path` when the file exists; otherwise starts empty
    // with `path` as the backing file for save().
    ReplayCassette(const std::filesystem::path& path, CassetteMode mode)
        : mode_(mode), path_(path) {
        if (std::filesystem::exists(path)) {
            std::ifstream in(path);
            Json j = Json::parse(in);
            for (const auto& [key, val] : j.items()) entries_[key] = val.get<std::string>();
        }
    }

    CassetteMode mode() const { return mode_; }
    size_t size() const { return entries_.size(); }

    std::optional<std::string> lookup(const std::string& fingerprint) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = entries_.find(fingerprint);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void record(const std::string& fingerprint, const std::string& response) {
        std::lock_guard<std::mutex> lock(mutex_);
        entries_[fingerprint] = response;
    }

    void save(const std::filesystem::path& path) const {
        Json j = Json::object();
        {
            std::lock_guard<std::mutex> lock(mutex_);
            for (const auto& [key, val] : entries_) j[key] = val;  // std::map: sorted keys
        }
        std::ofstream out(path);
        out << j.dump(1) << "\n";
    }

    void save() const {
        if (path_.empty()) throw ConfigError("cassette has no backing path");
        save(path_);
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::string> entries_;
    CassetteMode mode_;
    std::filesystem::path path_;
};

// Completion provider backed by a cassette. Record and hybrid modes forward
// misses to `inner`; replay mode has no inner provider and therefore cannot
// touch the network.
class CassetteCompletionProvider : public CompletionProvider {
public:
    CassetteCompletionProvider(std::shared_ptr<ReplayCassette> cassette,
                               std::shared_ptr<CompletionProvider> inner = nullptr,
                               std::string id = "replay")
        : cassette_(std::move(cassette)), inner_(std::move(inner)), id_(std::move(id)) {
        if (cassette_->mode() != CassetteMode::Replay && !inner_)
            throw ConfigError("record/hybrid cassette requires an inner provider");
    }

    std::string id() const override { return id_; }

    std::string complete(const CompletionRequest& req, Ledger& ledger) override {
        if (req.prompt.empty()) throw ConfigError("completion prompt is empty");
        const std::string fp = request_fingerprint(req.prompt, req.temperature, id_);
        if (cassette_->mode() != CassetteMode::Record) {
            if (auto hit = cassette_->lookup(fp)) {
                append_usage(req, *hit, ledger);
                return *hit;
            }
            if (cassette_->mode() == CassetteMode::Replay) throw CassetteMissError(fp);
        }
        // Record, or hybrid miss: delegate and capture. The inner call accounts
        // its own usage.
        std::string response = inner_->complete(req, ledger);
        cassette_->record(fp, response);
        return response;
    }

private:
    void append_usage(const CompletionRequest& req, const std::string& response, Ledger& ledger) {
        UsageRecord rec;
        split_tag(req.tag, rec.op, rec.tag);
        rec.tag = rec.tag.empty() ? rec.op : rec.tag;
        rec.op = rec.op.empty() ? "complete" : rec.op;
        rec.provider = id_;
        rec.prompt_tokens = estimate_tokens(req.prompt);
        rec.response_tokens = estimate_tokens(response);
        rec.wall_ms = 0;
        ledger.append(std::move(rec));
    }

    std::shared_ptr<ReplayCassette> cassette_;
    std::shared_ptr<CompletionProvider> inner_;
    std::string id_;
};

// ---------------------------------------------------------------------------
// Replay embedder: a seeded pseudo-random projection of the lowercased token
// multiset, normalized to unit length. Deterministic per text, offline, and
// similarity tracks token overlap, which is what the merge fixtures rely on.

class HashEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(std::uint64_t seed = 0x66a1c4e9, int dim = 64)
        : seed_(seed), dim_(dim) {}

    std::string id() const override { return "replay-embed"; }
    int dimension() const override { return dim_; }

    EmbeddingVector embed(const std::string& text, Ledger& ledger) override {
        if (trim(text).empty()) throw EmptyTextError();
        std::vector<double> acc(static_cast<size_t>(dim_), 0.0);
        for (const auto& token : split_whitespace(to_lower(text))) {
            SplitMix64 rng(fnv1a64(token) ^ seed_);
            for (auto& a : acc) a += rng.next_signed_unit();
        }
        double norm = 0.0;
        for (double a : acc) norm += a * a;
        norm = std::sqrt(norm);
        EmbeddingVector v;
        v.components.resize(acc.size());
        if (norm == 0.0) {
            // A single token can in principle hash to the zero vector; nudge it.
            v.components[0] = 1.0f;
        } else {
            for (size_t i = 0; i < acc.size(); ++i)
                v.components[i] = static_cast<float>(acc[i] / norm);
        }
        UsageRecord rec;
        rec.op = "embed";
        rec.tag = "embed";
        rec.provider = id();
        rec.prompt_tokens = estimate_tokens(text);
        ledger.append(std::move(rec));
        return v;
    }

private:
    std::uint64_t seed_;
    int dim_;
};

// ---------------------------------------------------------------------------
// HTTP transport seam. Tests inject FailOnUseTransport to prove a code path
// is network-free.

struct HttpResponse {
    int status = 0;
    std::string body;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& base_url, const std::string& path,
                              const std::string& json_body,
                              const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

class FailOnUseTransport : public HttpTransport {
public:
    HttpResponse post(const std::string&, const std::string&, const std::string&,
                      const std::vector<std::pair<std::string, std::string>>&) override {
        ++uses_;
        throw TransportError("network use is forbidden in this configuration");
    }
    int uses() const { return uses_; }

private:
    int uses_ = 0;
};

// Declared here, defined in providers_http.hpp to keep httplib out of every
// translation unit.
std::shared_ptr<HttpTransport> make_httplib_transport();

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::function<void(std::chrono::milliseconds)> sleeper = [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
    };
};

template <typename F>
auto with_retries(const RetryPolicy& policy, F&& fn) {
    auto backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const TransportError&) {
            if (attempt >= policy.max_attempts) throw;
            policy.sleeper(backoff);
            backoff *= 2;
        }
    }
}

struct HttpProviderConfig {
    std::string base_url;   // e.g. https://api.example.com
    std::string api_key;
    std::string model;      // completion or embedding model id
    RetryPolicy retry;

    // Reads FAILMINE_API_BASE, FAILMINE_API_KEY and the given model variable.
    static HttpProviderConfig from_env(const char* model_var, const char* fallback_model) {
        HttpProviderConfig c;
        if (const char* v = std::getenv("FAILMINE_API_BASE")) c.base_url = v;
        if (const char* v = std::getenv("FAILMINE_API_KEY")) c.api_key = v;
        if (const char* v = std::getenv(model_var)) c.model = v;
        if (c.model.empty()) c.model = fallback_model;
        if (c.base_url.empty())
            throw ConfigError("FAILMINE_API_BASE is required for the live provider");
        return c;
    }
};

// Chat-completion-style live backend.
class HttpCompletionProvider : public CompletionProvider {
public:
    HttpCompletionProvider(HttpProviderConfig config, std::shared_ptr<HttpTransport> transport,
                           std::shared_ptr<Clock> clock)
        : config_(std::move(config)), transport_(std::move(transport)), clock_(std::move(clock)) {}

    std::string id() const override { return config_.model; }

    std::string complete(const CompletionRequest& req, Ledger& ledger) override {
        if (req.prompt.empty()) throw ConfigError("completion prompt is empty");
        Json payload;
        payload["model"] = config_.model;
        payload["temperature"] = req.temperature;
        payload["max_tokens"] = req.max_response_tokens;
        payload["messages"] = Json::array({Json{{"role", "user"}, {"content", req.prompt}}});

        const std::int64_t start = clock_->now_ms();
        HttpResponse resp = with_retries(config_.retry, [&] {
            auto r = transport_->post(config_.base_url, "/v1/chat/completions", payload.dump(),
                                      headers());
            if (r.status < 200 || r.status >= 300)
                throw TransportError("completion endpoint returned status " +
                                     std::to_string(r.status));
            return r;
        });
        std::string text;
        try {
            Json j = Json::parse(resp.body);
            text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            throw TransportError(std::string("malformed completion response: ") + e.what());
        }
        UsageRecord rec;
        split_tag(req.tag, rec.op, rec.tag);
        rec.tag = rec.tag.empty() ? rec.op : rec.tag;
        rec.op = rec.op.empty() ? "complete" : rec.op;
        rec.provider = config_.model;
        rec.prompt_tokens = estimate_tokens(req.prompt);
        rec.response_tokens = estimate_tokens(text);
        rec.wall_ms = clock_->now_ms() - start;
        ledger.append(std::move(rec));
        return text;
    }

private:
    std::vector<std::pair<std::string, std::string>> headers() const {
        std::vector<std::pair<std::string, std::string>> h;
        h.emplace_back("Content-Type", "application/json");
        if (!config_.api_key.empty()) h.emplace_back("Authorization", "Bearer " + config_.api_key);
        return h;
    }

    HttpProviderConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    std::shared_ptr<Clock> clock_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(HttpProviderConfig config, std::shared_ptr<HttpTransport> transport,
                          std::shared_ptr<Clock> clock, int dim = 1536)
        : config_(std::move(config)),
          transport_(std::move(transport)),
          clock_(std::move(clock)),
          dim_(dim) {}

    std::string id() const override { return config_.model; }
    int dimension() const override { return dim_; }

    EmbeddingVector embed(const std::string& text, Ledger& ledger) override {
        if (trim(text).empty()) throw EmptyTextError();
        Json payload;
        payload["model"] = config_.model;
        payload["input"] = text;

        const std::int64_t start = clock_->now_ms();
        HttpResponse resp = with_retries(config_.retry, [&] {
            auto r = transport_->post(config_.base_url, "/v1/embeddings", payload.dump(),
                                      {{"Content-Type", "application/json"},
                                       {"Authorization", "Bearer " + config_.api_key}});
            if (r.status < 200 || r.status >= 300)
                throw TransportError("embedding endpoint returned status " +
                                     std::to_string(r.status));
            return r;
        });
        EmbeddingVector v;
        try {
            Json j = Json::parse(resp.body);
            v.components = j.at("data").at(0).at("embedding").get<std::vector<float>>();
        } catch (const std::exception& e) {
            throw TransportError(std::string("malformed embedding response: ") + e.what());
        }
        double norm = v.norm();
        if (norm > 0)
            for (auto& c : v.components) c = static_cast<float>(c / norm);
        UsageRecord rec;
        rec.op = "embed";
        rec.tag = "embed";
        rec.provider = config_.model;
        rec.prompt_tokens = estimate_tokens(text);
        rec.wall_ms = clock_->now_ms() - start;
        ledger.append(std::move(rec));
        return v;
    }

private:
    HttpProviderConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    std::shared_ptr<Clock> clock_;
    int dim_;
};

}  // namespace failmine
