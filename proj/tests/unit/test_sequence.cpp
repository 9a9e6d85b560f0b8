#include "doctest_torch.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "advent/error.hpp"
#include "advent/sequence.hpp"
#include "support.hpp"

using namespace advent;

namespace {

FrameSequence scalar_sequence(const std::vector<float>& values) {
    FrameSequence s;
    s.sequence_id = "scalar";
    s.num_classes = 2;
    s.frames = torch::tensor(values).reshape({static_cast<std::int64_t>(values.size()), 1, 1, 1});
    s.labels = torch::zeros({static_cast<std::int64_t>(values.size()), 1, 1}, torch::kInt64);
    return s;
}

}  // namespace

TEST_SUITE("sequence") {

TEST_CASE("ten frames at depth three give seven windows starting at index three") {
    Rng rng(1);
    auto seq = testing::random_sequence(rng, 10, 3, 4, 4, 3);
    auto w = build_windows(seq, 3);
    REQUIRE(w.size() == 7);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i].anchor_index == 3 + static_cast<std::int64_t>(i));
}

TEST_CASE("scalar frames 0..4 at depth two") {
    // Direct arithmetic: mean of the two previous values and the difference.
    auto seq = scalar_sequence({0, 1, 2, 3, 4});
    auto w = build_windows(seq, 2);
    REQUIRE(w.size() == 3);
    const double expect[3][3] = {{2, 0.5, 1.5}, {3, 1.5, 1.5}, {4, 2.5, 1.5}};
    for (int i = 0; i < 3; ++i) {
        CHECK(w[i].anchor_index == i + 2);
        CHECK(w[i].insu.item<float>() == static_cast<float>(expect[i][0]));
        CHECK(w[i].intu.item<float>() == static_cast<float>(expect[i][1]));
        CHECK(w[i].du.item<float>() == static_cast<float>(expect[i][2]));
    }
}

TEST_CASE("constant sequence has intu equal to insu and zero du") {
    FrameSequence s;
    s.sequence_id = "const";
    s.num_classes = 2;
    s.frames = torch::full({6, 3, 4, 4}, 0.37f);
    s.labels = torch::zeros({6, 4, 4}, torch::kInt64);
    for (const auto& w : build_windows(s, 4)) {
        CHECK(torch::equal(w.intu, w.insu));
        CHECK(w.du.abs().max().item<float>() == 0.0f);
    }
}

TEST_CASE("window count law and linear identity on random sequences") {
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        const auto len = 2 + static_cast<std::int64_t>(rng.below(10));
        const auto depth = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(len - 1)));
        auto seq = testing::random_sequence(rng, len, 3, 5, 6, 4);
        auto w = build_windows(seq, depth);
        REQUIRE(static_cast<std::int64_t>(w.size()) == len - depth);
        for (const auto& win : w) {
            CHECK((win.du + win.intu - win.insu).abs().max().item<float>() <= 1e-6f);
            CHECK(torch::equal(win.label, seq.labels[win.anchor_index]));
            CHECK(torch::equal(win.insu, seq.frames[win.anchor_index]));
        }
    }
}

TEST_CASE("invalid depth and short sequences") {
    Rng rng(2);
    auto seq = testing::random_sequence(rng, 3, 1, 2, 2, 2);
    CHECK_THROWS_AS(build_windows(seq, 0), ConfigError);
    CHECK_THROWS_AS(build_windows(seq, 3), ContractError);
    CHECK_THROWS_AS(build_windows(seq, 5), ContractError);
}

TEST_CASE("multi-sequence windows are concatenated in sequence then anchor order") {
    Rng rng(3);
    std::vector<FrameSequence> seqs{testing::random_sequence(rng, 5, 1, 2, 2, 2, "a"),
                                    testing::random_sequence(rng, 4, 1, 2, 2, 2, "b")};
    auto w = build_windows(seqs, 2);
    REQUIRE(w.size() == 5);
    CHECK(w[0].sequence_id == "a");
    CHECK(w[2].sequence_id == "a");
    CHECK(w[3].sequence_id == "b");
    CHECK(w[3].anchor_index == 2);
}

TEST_CASE("shuffle is a permutation and a pure function of seed and epoch") {
    auto p = gsm_shuffle(5, 99, 0);
    auto sorted = p.order;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::int64_t>{0, 1, 2, 3, 4});

    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = 1 + static_cast<std::int64_t>(rng.below(300));
        const auto seed = rng.next();
        const auto epoch = static_cast<std::int64_t>(rng.below(50));
        auto a = gsm_shuffle(n, seed, epoch);
        auto b = gsm_shuffle(n, seed, epoch);
        CHECK(a.order == b.order);
        std::vector<std::int64_t> seen;
        for (const auto& mb : make_batches(a, n)) seen.insert(seen.end(), mb.indices.begin(), mb.indices.end());
        CHECK(seen == a.order);
        std::sort(seen.begin(), seen.end());
        for (std::int64_t i = 0; i < n; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);
    }
}

TEST_CASE("consecutive epochs draw different orders") {
    CHECK(gsm_shuffle(1000, 5, 0).order != gsm_shuffle(1000, 5, 1).order);
    CHECK(gsm_shuffle(1000, 5, 0).order != gsm_shuffle(1000, 6, 0).order);
}

TEST_CASE("empty pool is rejected") {
    CHECK_THROWS_AS(gsm_shuffle(0, 1, 0), ContractError);
}

TEST_CASE("sequential plan is the identity") {
    auto p = sequential_plan(6, 4);
    CHECK(p.order == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("batch sizes follow ceiling division") {
    auto p = gsm_shuffle(5, 3, 0, 2);
    auto b = make_batches(p, 5);
    REQUIRE(b.size() == 3);
    CHECK(b[0].indices.size() == 2);
    CHECK(b[1].indices.size() == 2);
    CHECK(b[2].indices.size() == 1);

    auto whole = make_batches(gsm_shuffle(5, 3, 0, 5), 5);
    REQUIRE(whole.size() == 1);
    CHECK(whole[0].indices == gsm_shuffle(5, 3, 0).order);

    auto p1 = gsm_shuffle(7, 3, 2, 1);
    auto singles = make_batches(p1, 7);
    REQUIRE(singles.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(singles[i].indices == std::vector<std::int64_t>{p1.order[i]});

    CHECK_THROWS_AS(make_batches(p, 6), ContractError);
}

TEST_CASE("stack_windows batches units and labels") {
    Rng rng(4);
    auto w = build_windows(testing::random_sequence(rng, 6, 3, 4, 8, 3), 2);
    auto b = stack_windows(w, {3, 0});
    CHECK(b.size() == 2);
    CHECK(b.insu.sizes() == torch::IntArrayRef{2, 3, 4, 8});
    CHECK(torch::equal(b.du[0], w[3].du));
    CHECK(torch::equal(b.labels[1], w[0].label));
}

TEST_CASE("ingestion round-trip is exact") {
    testing::TempDir dir("ingest");
    Rng rng(5);
    std::vector<FrameSequence> originals;
    std::ofstream manifest(dir.path() / "data.manifest");
    manifest << "# two sequences\n\n";
    for (int i = 0; i < 2; ++i) {
        const auto id = "s" + std::to_string(i);
        originals.push_back(testing::random_sequence(rng, 4 + i, i == 0 ? 3 : 1, 6, 5, 6, id));
        write_sequence(originals.back(), dir.path() / id);
        manifest << id << "\n";
    }
    manifest.close();
    auto back = ingest_dataset(dir.path(), dir.path() / "data.manifest", 6);
    REQUIRE(back.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(back[i].length() == originals[i].length());
        CHECK(torch::equal(back[i].frames, originals[i].frames));
        CHECK(torch::equal(back[i].labels, originals[i].labels));
    }
}

TEST_CASE("ingestion errors name the sequence") {
    testing::TempDir dir("ingest-bad");
    Rng rng(6);
    auto s = testing::random_sequence(rng, 3, 1, 4, 4, 3, "bad");
    s.labels[1][0][0] = 2;
    write_sequence(s, dir.path() / "bad");
    {
        std::ofstream m(dir.path() / "m");
        m << "bad\n";
    }
    SUBCASE("label value equal to the class count") {
        try {
            ingest_dataset(dir.path(), dir.path() / "m", 2);
            FAIL("expected an ingestion error");
        } catch (const IngestionError& e) {
            CHECK(std::string(e.what()).find("bad") != std::string::npos);
        }
    }
    SUBCASE("frame and label counts differ") {
        std::filesystem::remove(dir.path() / "bad" / "labels" / "0002.png");
        CHECK_THROWS_AS(ingest_dataset(dir.path(), dir.path() / "m", 3), IngestionError);
    }
    SUBCASE("missing sequence directory") {
        std::ofstream(dir.path() / "m2") << "nowhere\n";
        CHECK_THROWS_WITH_AS(ingest_dataset(dir.path(), dir.path() / "m2", 3), doctest::Contains("nowhere"),
                             IngestionError);
    }
}

}  // TEST_SUITE
