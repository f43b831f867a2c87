#include <catch2/catch_amalgamated.hpp>

#include "failmine/providers.hpp"
#include "support/temp_dir.hpp"

using namespace failmine;

TEST_CASE("token estimate is ceil(words * 4/3) and monotone") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens("one two three") == 4);
    std::string twelve_k;
    for (int i = 0; i < 12000; ++i) twelve_k += "w ";
    CHECK(estimate_tokens(twelve_k) == 16000);

    std::string text;
    std::int64_t prev = 0;
    for (int i = 0; i < 200; ++i) {
        text += "word ";
        std::int64_t now = estimate_tokens(text);
        CHECK(now >= prev);
        prev = now;
    }
}

TEST_CASE("replay cassette answers recorded fingerprints") {
    auto cassette = std::make_shared<ReplayCassette>(CassetteMode::Replay);
    CompletionRequest req;
    req.prompt = "some prompt";
    req.tag = "confirm|x";
    cassette->record(request_fingerprint(req.prompt, req.temperature, "replay"), "true");

    CassetteCompletionProvider provider(cassette, nullptr, "replay");
    Ledger ledger;
    CHECK(provider.complete(req, ledger) == "true");

    SECTION("identical requests yield identical responses") {
        std::string a = provider.complete(req, ledger);
        std::string b = provider.complete(req, ledger);
        CHECK(a == b);
    }
    SECTION("an unrecorded request is a cassette miss naming the fingerprint") {
        CompletionRequest other;
        other.prompt = "never recorded";
        const std::string fp = request_fingerprint(other.prompt, 0.0, "replay");
        try {
            provider.complete(other, ledger);
            FAIL("expected CassetteMissError");
        } catch (const CassetteMissError& e) {
            CHECK(e.fingerprint() == fp);
            CHECK(std::string(e.what()).find(fp) != std::string::npos);
        }
    }
    SECTION("every call appends a ledger record") {
        Ledger fresh;
        provider.complete(req, fresh);
        provider.complete(req, fresh);
        CHECK(fresh.size() == 2);
        auto records = fresh.snapshot();
        CHECK(records[0].op == "confirm");
        CHECK(records[0].provider == "replay");
        CHECK(records[0].prompt_tokens == estimate_tokens(req.prompt));
    }
}

TEST_CASE("cassette files round-trip through disk") {
    testsupport::TempDir tmp;
    const auto path = tmp / "cassette.json";
    {
        ReplayCassette cassette(CassetteMode::Record);
        cassette.record("aaaa", "first");
        cassette.record("bbbb", "second");
        cassette.save(path);
    }
    ReplayCassette loaded(path, CassetteMode::Replay);
    CHECK(loaded.size() == 2);
    CHECK(loaded.lookup("aaaa") == std::optional<std::string>("first"));
    CHECK(loaded.lookup("missing") == std::nullopt);
}

namespace {

class CannedProvider : public CompletionProvider {
public:
    explicit CannedProvider(std::string answer) : answer_(std::move(answer)) {}
    std::string id() const override { return "canned"; }
    std::string complete(const CompletionRequest& req, Ledger& ledger) override {
        ++calls;
        UsageRecord rec;
        rec.op = "canned";
        rec.tag = req.tag;
        rec.provider = id();
        ledger.append(std::move(rec));
        return answer_;
    }
    int calls = 0;

private:
    std::string answer_;
};

}  // namespace

TEST_CASE("hybrid mode serves hits from the cassette and records misses") {
    auto cassette = std::make_shared<ReplayCassette>(CassetteMode::Hybrid);
    auto inner = std::make_shared<CannedProvider>("from inner");
    CassetteCompletionProvider provider(cassette, inner, "replay");
    Ledger ledger;
    CompletionRequest req;
    req.prompt = "novel prompt";
    CHECK(provider.complete(req, ledger) == "from inner");
    CHECK(inner->calls == 1);
    CHECK(provider.complete(req, ledger) == "from inner");
    CHECK(inner->calls == 1);  // second call replays, no delegation
    CHECK(cassette->size() == 1);
}

TEST_CASE("record mode requires an inner provider") {
    auto cassette = std::make_shared<ReplayCassette>(CassetteMode::Record);
    CHECK_THROWS_AS(CassetteCompletionProvider(cassette, nullptr, "replay"), ConfigError);
}

TEST_CASE("hash embedder contract") {
    HashEmbeddingProvider embedder;
    Ledger ledger;

    SECTION("unit norm for arbitrary text") {
        for (const char* text : {"a", "one two three", "The Quick Brown Fox", "x y z w " }) {
            EmbeddingVector v = embedder.embed(text, ledger);
            CHECK(v.dimension() == 64);
            CHECK_THAT(v.norm(), Catch::Matchers::WithinAbs(1.0, 1e-6));
        }
    }
    SECTION("deterministic per text") {
        auto a = embedder.embed("the system crashed on tuesday", ledger);
        auto b = embedder.embed("the system crashed on tuesday", ledger);
        CHECK(a.components == b.components);
        double dot = 0, na = 0, nb = 0;
        for (int i = 0; i < a.dimension(); ++i) {
            dot += static_cast<double>(a.components[i]) * b.components[i];
            na += static_cast<double>(a.components[i]) * a.components[i];
            nb += static_cast<double>(b.components[i]) * b.components[i];
        }
        CHECK_THAT(dot / std::sqrt(na * nb), Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
    SECTION("token order does not matter, token multiset does") {
        auto a = embedder.embed("alpha beta gamma", ledger);
        auto b = embedder.embed("gamma alpha beta", ledger);
        CHECK(a.components == b.components);
        auto c = embedder.embed("alpha beta delta", ledger);
        CHECK(a.components != c.components);
    }
    SECTION("empty text is rejected") {
        CHECK_THROWS_AS(embedder.embed("   ", ledger), EmptyTextError);
    }
    SECTION("embedding calls are accounted") {
        Ledger fresh;
        embedder.embed("count me", fresh);
        CHECK(fresh.size() == 1);
        CHECK(fresh.snapshot()[0].op == "embed");
    }
}

namespace {

class FlakyTransport : public HttpTransport {
public:
    explicit FlakyTransport(int failures_before_success, std::string body)
        : remaining_failures_(failures_before_success), body_(std::move(body)) {}

    HttpResponse post(const std::string&, const std::string& path, const std::string&,
                      const std::vector<std::pair<std::string, std::string>>&) override {
        ++calls_;
        last_path_ = path;
        if (remaining_failures_-- > 0) throw TransportError("connection reset");
        return {200, body_};
    }

    int calls() const { return calls_; }
    const std::string& last_path() const { return last_path_; }

private:
    int remaining_failures_;
    std::string body_;
    int calls_ = 0;
    std::string last_path_;
};

RetryPolicy instant_retries() {
    RetryPolicy p;
    p.sleeper = [](std::chrono::milliseconds) {};
    return p;
}

}  // namespace

TEST_CASE("http completion provider parses the chat response and retries") {
    Json body;
    body["choices"] = Json::array(
        {Json{{"message", Json{{"role", "assistant"}, {"content", "hello there"}}}}});

    HttpProviderConfig config;
    config.base_url = "https://api.example.test";
    config.api_key = "k";
    config.model = "test-model";
    config.retry = instant_retries();

    SECTION("success after transient failures") {
        auto transport = std::make_shared<FlakyTransport>(2, body.dump());
        HttpCompletionProvider provider(config, transport, std::make_shared<FixedClock>());
        Ledger ledger;
        CompletionRequest req;
        req.prompt = "hi";
        req.tag = "summary|article:1";
        CHECK(provider.complete(req, ledger) == "hello there");
        CHECK(transport->calls() == 3);
        CHECK(transport->last_path() == "/v1/chat/completions");
        CHECK(ledger.snapshot()[0].provider == "test-model");
    }
    SECTION("gives up after the retry budget") {
        auto transport = std::make_shared<FlakyTransport>(10, body.dump());
        HttpCompletionProvider provider(config, transport, std::make_shared<FixedClock>());
        Ledger ledger;
        CompletionRequest req;
        req.prompt = "hi";
        CHECK_THROWS_AS(provider.complete(req, ledger), TransportError);
        CHECK(transport->calls() == 3);  // default budget
    }
}

TEST_CASE("http embedding provider normalizes the returned vector") {
    Json body;
    body["data"] = Json::array({Json{{"embedding", std::vector<float>{3.0f, 4.0f}}}});
    HttpProviderConfig config;
    config.base_url = "https://api.example.test";
    config.api_key = "k";
    config.model = "embed-model";
    config.retry = instant_retries();
    auto transport = std::make_shared<FlakyTransport>(0, body.dump());
    HttpEmbeddingProvider provider(config, transport, std::make_shared<FixedClock>(), 2);
    Ledger ledger;
    EmbeddingVector v = provider.embed("text", ledger);
    REQUIRE(v.dimension() == 2);
    CHECK_THAT(v.components[0], Catch::Matchers::WithinAbs(0.6, 1e-6));
    CHECK_THAT(v.components[1], Catch::Matchers::WithinAbs(0.8, 1e-6));
}

TEST_CASE("fail-on-use transport proves a path is offline") {
    FailOnUseTransport transport;
    CHECK_THROWS_AS(transport.post("h", "/p", "{}", {}), TransportError);
    CHECK(transport.uses() == 1);
}
