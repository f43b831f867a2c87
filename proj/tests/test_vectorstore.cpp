#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "failmine/vectorstore.hpp"
#include "support/temp_dir.hpp"

using namespace failmine;

TEST_CASE("cosine similarity") {
    SECTION("identity is exactly 1") {
        std::vector<float> v{0.3f, -1.2f, 4.0f};
        CHECK_THAT(cosine_similarity(v, v), Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
    SECTION("orthogonal vectors score 0") {
        std::vector<float> a{1.0f, 0.0f}, b{0.0f, 1.0f};
        CHECK_THAT(cosine_similarity(a, b), Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
    SECTION("(1,2,2) vs (2,1,2) is 8/9") {
        std::vector<float> a{1, 2, 2}, b{2, 1, 2};
        CHECK_THAT(cosine_similarity(a, b), Catch::Matchers::WithinAbs(8.0 / 9.0, 1e-9));
    }
    SECTION("symmetric and scale-invariant, |result| <= 1") {
        std::mt19937 rng(5);
        std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<float> a(16), b(16);
            for (auto& x : a) x = dist(rng);
            for (auto& x : b) x = dist(rng);
            double ab = cosine_similarity(a, b);
            double ba = cosine_similarity(b, a);
            CHECK(ab == ba);
            CHECK(std::abs(ab) <= 1.0 + 1e-9);
            std::vector<float> a3 = a, b7 = b;
            for (auto& x : a3) x *= 3.0f;
            for (auto& x : b7) x *= 7.0f;
            // float scaling rounds each component, so exactness is ~1e-6
            CHECK_THAT(cosine_similarity(a3, b7), Catch::Matchers::WithinAbs(ab, 1e-6));
        }
    }
    SECTION("zero vectors and dimension mismatches are errors") {
        std::vector<float> z{0, 0}, v{1, 0}, w{1, 0, 0};
        CHECK_THROWS_AS(cosine_similarity(z, v), VectorStoreError);
        CHECK_THROWS_AS(cosine_similarity(v, w), VectorStoreError);
    }
}

namespace {

Article article_with_body(std::string body) {
    Article a;
    a.id = 1;
    a.body = std::move(body);
    a.scraped_ok = true;
    a.word_count = word_count(a.body);
    return a;
}

}  // namespace

TEST_CASE("chunk_article") {
    SECTION("one chunk per paragraph, in order") {
        Article a = article_with_body("First paragraph.\n\nSecond paragraph.\n\nThird one.");
        auto chunks = chunk_article(a);
        REQUIRE(chunks.size() == 3);
        CHECK(chunks[0] == "First paragraph.");
        CHECK(chunks[2] == "Third one.");
    }
    SECTION("consecutive blank lines produce no empty chunks") {
        Article a = article_with_body("One.\n\n\n\nTwo.");
        auto chunks = chunk_article(a);
        REQUIRE(chunks.size() == 2);
        for (const auto& c : chunks) CHECK_FALSE(trim(c).empty());
    }
    SECTION("an oversized paragraph splits at sentence boundaries and rejoins") {
        std::string para;
        for (int i = 0; i < 60; ++i)
            para += "Sentence number " + std::to_string(i) + " has exactly seven words here. ";
        para = trim(para);
        REQUIRE(estimate_tokens(para) > 300);
        Article a = article_with_body(para);
        auto chunks = chunk_article(a);
        CHECK(chunks.size() >= 2);
        for (const auto& c : chunks) CHECK(estimate_tokens(c) <= 300);
        std::string rejoined;
        for (const auto& c : chunks) {
            if (!rejoined.empty()) rejoined += " ";
            rejoined += c;
        }
        CHECK(rejoined == para);
    }
    SECTION("empty body is an error") {
        Article a = article_with_body("");
        CHECK_THROWS_AS(chunk_article(a), VectorStoreError);
    }
}

namespace {

struct StoreFixture {
    testsupport::TempDir tmp;
    HashEmbeddingProvider embedder;
    Ledger ledger;
    VectorStore store;

    StoreFixture() { store = VectorStore::open(tmp / "vectors.bin", embedder.dimension()); }

    std::vector<std::string> texts(int count, const std::string& noun) {
        std::vector<std::string> out;
        for (int i = 0; i < count; ++i)
            out.push_back("Paragraph " + std::to_string(i) + " about " + noun + " topic " +
                          std::to_string(i % 4));
        return out;
    }
};

}  // namespace

TEST_CASE_METHOD(StoreFixture, "upsert is idempotent per (incident, article)") {
    CHECK(store.upsert_chunks(1, 10, texts(5, "fare"), embedder, ledger) == 5);
    CHECK(store.size() == 5);
    CHECK(store.upsert_chunks(1, 10, texts(5, "fare"), embedder, ledger) == 5);
    CHECK(store.size() == 5);

    SECTION("chunks for two articles of one incident are retrievable by incident") {
        store.upsert_chunks(1, 11, texts(3, "refund"), embedder, ledger);
        EmbeddingVector q = embedder.embed("fare topic", ledger);
        auto all = store.query_top_k(1, q, 100);
        CHECK(all.size() == 8);
    }
    SECTION("the store file round-trips") {
        store.upsert_chunks(2, 20, texts(2, "outage"), embedder, ledger);
        VectorStore reopened = VectorStore::open(tmp / "vectors.bin", embedder.dimension());
        REQUIRE(reopened.size() == store.size());
        CHECK(reopened.chunks() == store.chunks());
    }
    SECTION("dimension mismatch is an error") {
        HashEmbeddingProvider other(123, 32);
        CHECK_THROWS_AS(store.upsert_chunks(3, 30, texts(1, "x"), other, ledger),
                        VectorStoreError);
    }
}

TEST_CASE_METHOD(StoreFixture, "query_top_k basics") {
    store.upsert_chunks(1, 10, texts(4, "fare"), embedder, ledger);
    store.upsert_chunks(1, 11, texts(4, "refund"), embedder, ledger);
    EmbeddingVector q = embedder.embed("refund topic 1", ledger);

    SECTION("k of 1 returns the single best chunk") {
        auto top = store.query_top_k(1, q, 1);
        REQUIRE(top.size() == 1);
        double best = cosine_similarity(top[0].embedding, q.components);
        for (const auto& c : store.chunks())
            CHECK(best >= cosine_similarity(c.embedding, q.components) - 1e-12);
    }
    SECTION("k >= total returns everything grouped and ordered") {
        auto all = store.query_top_k(1, q, 50);
        REQUIRE(all.size() == 8);
        // Article 10's chunks first (store insertion order), each group by
        // order_index.
        for (int i = 0; i < 4; ++i) {
            CHECK(all[static_cast<size_t>(i)].article_id == 10);
            CHECK(all[static_cast<size_t>(i)].order_index == i);
            CHECK(all[static_cast<size_t>(i + 4)].article_id == 11);
            CHECK(all[static_cast<size_t>(i + 4)].order_index == i);
        }
    }
    SECTION("unknown incident is an error") {
        CHECK_THROWS_AS(store.query_top_k(99, q, 3), VectorStoreError);
    }
    SECTION("k below 1 is an error") {
        CHECK_THROWS_AS(store.query_top_k(1, q, 0), VectorStoreError);
    }
}

namespace {

// Returns predetermined unit vectors per text; lets tests pin the ranking.
class MapEmbedder : public EmbeddingProvider {
public:
    explicit MapEmbedder(std::map<std::string, std::vector<float>> table)
        : table_(std::move(table)) {}
    std::string id() const override { return "map-embed"; }
    int dimension() const override { return 3; }
    EmbeddingVector embed(const std::string& text, Ledger&) override {
        return EmbeddingVector{table_.at(text)};
    }

private:
    std::map<std::string, std::vector<float>> table_;
};

}  // namespace

TEST_CASE("selected chunks regroup by article with ascending order_index") {
    // Cosines against the query (1,0,0): A=1.0, B=0.0, C=0.8, D=0.9, E=0.0.
    // Ranks 1 and 3 (A and C) share article 10; rank 2 (D) is article 11.
    testsupport::TempDir tmp;
    MapEmbedder embedder({{"A", {1, 0, 0}},
                          {"B", {0, 1, 0}},
                          {"C", {0.8f, 0.6f, 0}},
                          {"D", {0.9f, 0.43589f, 0}},
                          {"E", {0, 0, 1}}});
    Ledger ledger;
    VectorStore store = VectorStore::open(tmp / "v.bin", 3);
    store.upsert_chunks(7, 10, {"A", "B", "C"}, embedder, ledger);
    store.upsert_chunks(7, 11, {"D", "E"}, embedder, ledger);

    EmbeddingVector q{{1, 0, 0}};
    auto top = store.query_top_k(7, q, 3);
    REQUIRE(top.size() == 3);
    // Article 10's two selected chunks come adjacent in order_index order,
    // then article 11's, despite D outranking C.
    CHECK(top[0].article_id == 10);
    CHECK(top[0].order_index == 0);
    CHECK(top[1].article_id == 10);
    CHECK(top[1].order_index == 2);
    CHECK(top[2].article_id == 11);
    CHECK(top[2].order_index == 0);
    CHECK(top[0].text == "A");
    CHECK(top[1].text == "C");
    CHECK(top[2].text == "D");
}

TEST_CASE("query_top_k matches brute force on random stores") {
    testsupport::TempDir tmp;
    HashEmbeddingProvider embedder;
    Ledger ledger;
    VectorStore store = VectorStore::open(tmp / "v.bin", embedder.dimension());

    std::mt19937 rng(2024);
    std::uniform_int_distribution<int> word(0, 40);
    auto random_text = [&] {
        std::string t;
        for (int i = 0; i < 6; ++i) t += "w" + std::to_string(word(rng)) + " ";
        return t;
    };
    // ~300 chunks across 3 articles of one incident.
    for (ArticleId aid : {1, 2, 3}) {
        std::vector<std::string> texts;
        for (int i = 0; i < 100; ++i) texts.push_back(random_text());
        store.upsert_chunks(42, aid, texts, embedder, ledger);
    }

    for (int trial = 0; trial < 100; ++trial) {
        EmbeddingVector q = embedder.embed(random_text(), ledger);
        const int k = 1 + static_cast<int>(rng() % 20);
        auto got = store.query_top_k(42, q, k);

        std::vector<std::pair<double, const Chunk*>> ranked;
        for (const auto& c : store.chunks())
            ranked.emplace_back(cosine_similarity(c.embedding, q.components), &c);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            if (a.second->article_id != b.second->article_id)
                return a.second->article_id < b.second->article_id;
            return a.second->order_index < b.second->order_index;
        });
        std::set<std::pair<ArticleId, int>> expected, actual;
        for (int i = 0; i < k; ++i)
            expected.insert({ranked[static_cast<size_t>(i)].second->article_id,
                             ranked[static_cast<size_t>(i)].second->order_index});
        for (const auto& c : got) actual.insert({c.article_id, c.order_index});
        CAPTURE(trial, k);
        CHECK(expected == actual);
    }
}

TEST_CASE("chunk concatenation reproduces the scraped body") {
    Article a;
    a.id = 9;
    a.body = "Lead paragraph with details.\n\nSecond paragraph here.\n\nClosing notes.";
    a.scraped_ok = true;
    a.word_count = word_count(a.body);
    auto chunks = chunk_article(a);
    std::string rebuilt;
    for (size_t i = 0; i < chunks.size(); ++i) {
        if (i) rebuilt += "\n\n";
        rebuilt += chunks[i];
    }
    CHECK(rebuilt == a.body);
}
