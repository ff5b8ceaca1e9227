#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "mtlforge/data.hpp"
#include "mtlforge/error.hpp"
#include "mtlforge/rng.hpp"

using namespace mtlforge;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content) : path(name) {
        std::ofstream out(path, std::ios::binary);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::string phm_record(int i, const std::string& label) {
    return "{\"id\":\"" + std::to_string(i) + "\",\"text\":\"tweet number " + std::to_string(i) +
           "\",\"label\":\"" + label + "\"}\n";
}

}  // namespace

TEST_CASE("well-formed file loads in order") {
    TempFile f("data_ok_test.jsonl", phm_record(0, "non-health") + phm_record(1, "awareness") +
                                         phm_record(2, "self-mention"));
    Dataset ds = load_dataset(f.path, schema_by_name("phm2017"));
    REQUIRE(ds.size() == 3);
    CHECK(ds.examples[0].id == "0");
    CHECK(ds.examples[1].label == "awareness");
    CHECK(ds.examples[2].label == "self-mention");
}

TEST_CASE("unknown label is rejected with line number and label") {
    TempFile f("data_badlabel_test.jsonl", phm_record(0, "non-health") + phm_record(1, "happy"));
    try {
        load_dataset(f.path, schema_by_name("phm2017"));
        FAIL("expected ValueError");
    } catch (const ValueError& e) {
        std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("happy") != std::string::npos);
    }
}

TEST_CASE("malformed line is a parse error with line number") {
    TempFile f("data_malformed_test.jsonl", phm_record(0, "non-health") + "this is not json\n");
    try {
        load_dataset(f.path, schema_by_name("phm2017"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("duplicate ids are rejected") {
    TempFile f("data_dupid_test.jsonl",
               "{\"id\":\"x\",\"text\":\"a\",\"label\":\"non-health\"}\n"
               "{\"id\":\"x\",\"text\":\"b\",\"label\":\"awareness\"}\n");
    CHECK_THROWS_AS(load_dataset(f.path, schema_by_name("phm2017")), ValueError);
}

TEST_CASE("a 4987-record corpus loads with size 4987") {
    std::string content;
    const auto& labels = schema_by_name("phm2017").labels;
    for (int i = 0; i < 4987; ++i) content += phm_record(i, labels[static_cast<size_t>(i % 4)]);
    TempFile f("data_phmsize_test.jsonl", content);
    Dataset ds = load_dataset(f.path, schema_by_name("phm2017"));
    CHECK(ds.size() == 4987);
}

TEST_CASE("builtin schemas match the published label inventories") {
    CHECK(schema_by_name("phm2017").labels ==
          std::vector<std::string>{"non-health", "awareness", "other-mention", "self-mention"});
    CHECK(schema_by_name("hmc2019").labels ==
          std::vector<std::string>{"health mention", "other mention", "figurative mention"});
    CHECK(schema_by_name("self2020").labels ==
          std::vector<std::string>{"no self-disclosure", "possible self-disclosure",
                                   "clear self-disclosure"});
    CHECK(schema_by_name("ill2021").labels == std::vector<std::string>{"negative", "positive"});
    CHECK(schema_by_name("goemotions").labels ==
          std::vector<std::string>{"anger", "disgust", "fear", "joy", "sadness", "surprise",
                                   "neutral"});
    CHECK(schema_by_name("phm2017").num_classes() == 4);
    CHECK(schema_by_name("hmc2019").num_classes() == 3);
    CHECK(schema_by_name("self2020").num_classes() == 3);
    CHECK(schema_by_name("ill2021").num_classes() == 2);
    CHECK(schema_by_name("goemotions").num_classes() == 7);
    CHECK(builtin_schemas().size() == 5);  // exactly the published corpora
    CHECK(synth_schemas().size() == 2);
    CHECK(schema_by_name("synth-health").num_classes() == 4);
    CHECK(schema_by_name("synth-emotion").num_classes() == 7);
    CHECK_THROWS_AS(schema_by_name("nope"), ValueError);
}

namespace {

Dataset make_dataset(size_t n) {
    Dataset ds;
    ds.name = "synthetic";
    ds.label_space = schema_by_name("ill2021");
    for (size_t i = 0; i < n; ++i) {
        ds.examples.push_back(
            {std::to_string(i), "text " + std::to_string(i), i % 2 ? "positive" : "negative"});
    }
    return ds;
}

void check_partition(const Dataset& ds, const DatasetSplits& s) {
    CHECK(s.train.size() + s.val.size() + s.test.size() == ds.size());
    std::set<std::string> seen;
    for (const Dataset* part : {&s.train, &s.val, &s.test}) {
        for (const auto& ex : part->examples) CHECK(seen.insert(ex.id).second);
    }
    CHECK(seen.size() == ds.size());
}

}  // namespace

TEST_CASE("split sizes follow the floor rule") {
    {
        Dataset ds = make_dataset(10);
        auto s = split(ds, {0.8, 0.1, 1});
        CHECK(s.train.size() == 8);
        CHECK(s.val.size() == 1);
        CHECK(s.test.size() == 1);
    }
    {
        Dataset ds = make_dataset(4987);
        auto s = split(ds, {0.8, 0.1, 69556});
        // Independent arithmetic: floor(0.8*4987), floor(0.1*4987), rest.
        const size_t want_train = static_cast<size_t>(0.8 * 4987.0);
        const size_t want_val = static_cast<size_t>(0.1 * 4987.0);
        CHECK(want_train == 3989);
        CHECK(want_val == 498);
        CHECK(s.train.size() == 3989);
        CHECK(s.val.size() == 498);
        CHECK(s.test.size() == 500);
        check_partition(ds, s);
    }
}

TEST_CASE("split is deterministic per seed and differs across seeds") {
    Dataset ds = make_dataset(200);
    auto a = split(ds, {0.8, 0.1, 69556});
    auto b = split(ds, {0.8, 0.1, 69556});
    auto c = split(ds, {0.8, 0.1, 79719});
    CHECK(serialize_dataset(a.train) == serialize_dataset(b.train));
    CHECK(serialize_dataset(a.val) == serialize_dataset(b.val));
    CHECK(serialize_dataset(a.test) == serialize_dataset(b.test));
    CHECK(serialize_dataset(a.train) != serialize_dataset(c.train));
}

TEST_CASE("split partition property holds across random sizes and the paper seeds") {
    Rng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const size_t n = 10 + rng.bounded(19991);
        Dataset ds = make_dataset(n);
        auto s = split(ds, {0.8, 0.1, rng.next_u64()});
        check_partition(ds, s);
        CHECK(s.train.size() == static_cast<size_t>(0.8 * static_cast<double>(n)));
        CHECK(s.val.size() == static_cast<size_t>(0.1 * static_cast<double>(n)));
    }
    Dataset ds = make_dataset(4987);
    for (uint64_t seed : {69556ULL, 79719ULL, 30010ULL, 46921ULL, 25577ULL}) {
        auto s = split(ds, {0.8, 0.1, seed});
        check_partition(ds, s);
        CHECK(s.train.size() == 3989);
    }
}

TEST_CASE("split rejects tiny datasets") {
    Dataset ds = make_dataset(9);
    CHECK_THROWS_AS(split(ds, {0.8, 0.1, 1}), ValueError);
}

TEST_CASE("goemotions official splits load without reshuffling") {
    std::string train_content, val_content, test_content;
    const auto& labels = schema_by_name("goemotions").labels;
    auto rec = [&](int i) {
        return "{\"id\":\"" + std::to_string(i) + "\",\"text\":\"comment " + std::to_string(i) +
               "\",\"label\":\"" + labels[static_cast<size_t>(i % 7)] + "\"}\n";
    };
    for (int i = 0; i < 1000; ++i) train_content += rec(i);
    for (int i = 0; i < 100; ++i) val_content += rec(i);
    for (int i = 0; i < 100; ++i) test_content += rec(i);
    TempFile tr("goem_train_test.jsonl", train_content);
    TempFile va("goem_val_test.jsonl", val_content);
    TempFile te("goem_test_test.jsonl", test_content);

    auto s = goemotions_splits(tr.path, va.path, te.path);
    CHECK(s.train.size() == 1000);
    CHECK(s.val.size() == 100);
    CHECK(s.test.size() == 100);
    CHECK(s.train.examples[0].id == "0");  // file order preserved

    TempFile empty("goem_empty_test.jsonl", "");
    auto s2 = goemotions_splits(tr.path, empty.path, te.path);
    CHECK(s2.val.size() == 0);
}

TEST_CASE("dataset load then save round-trips byte-identically") {
    SynthPair pair = synth_generate(50, 40, 7, 0.5);
    const std::string path = "data_roundtrip_test.jsonl";
    save_dataset(pair.primary, path);
    Dataset loaded = load_dataset(path, pair.primary.label_space, pair.primary.name);
    CHECK(serialize_dataset(loaded) == serialize_dataset(pair.primary));
    std::ifstream in(path, std::ios::binary);
    std::string on_disk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(on_disk == serialize_dataset(loaded));
    std::remove(path.c_str());
}

TEST_CASE("synth correlation=1 makes the emotion a function of the health class") {
    SynthPair pair = synth_generate(100, 60, 11, 1.0);
    REQUIRE(pair.primary.size() == 100);
    REQUIRE(pair.auxiliary.size() == 100);
    const auto& canon = synth_canonical_emotions();
    for (size_t i = 0; i < 100; ++i) {
        CHECK(pair.primary.examples[i].text == pair.auxiliary.examples[i].text);
        CHECK(pair.auxiliary.examples[i].label == canon.at(pair.primary.examples[i].label));
    }
}

TEST_CASE("synth correlation=0 passes the chi-square independence test") {
    SynthPair pair = synth_generate(5000, 60, 13, 0.0);
    long long table[4][7] = {};
    long long row[4] = {}, col[7] = {};
    for (size_t i = 0; i < 5000; ++i) {
        const int p = pair.primary.label_space.index_of(pair.primary.examples[i].label);
        const int a = pair.auxiliary.label_space.index_of(pair.auxiliary.examples[i].label);
        ++table[p][a];
        ++row[p];
        ++col[a];
    }
    double chi2 = 0.0;
    for (int p = 0; p < 4; ++p) {
        for (int a = 0; a < 7; ++a) {
            const double expected = static_cast<double>(row[p]) * col[a] / 5000.0;
            const double diff = static_cast<double>(table[p][a]) - expected;
            chi2 += diff * diff / expected;
        }
    }
    // df = (4-1)(7-1) = 18; 99th percentile of chi-square(18) = 34.805.
    CHECK(chi2 < 34.805);
}

TEST_CASE("synth generation is byte-identical per seed") {
    SynthPair a = synth_generate(200, 80, 21, 0.7);
    SynthPair b = synth_generate(200, 80, 21, 0.7);
    SynthPair c = synth_generate(200, 80, 22, 0.7);
    CHECK(serialize_dataset(a.primary) == serialize_dataset(b.primary));
    CHECK(serialize_dataset(a.auxiliary) == serialize_dataset(b.auxiliary));
    CHECK(serialize_dataset(a.primary) != serialize_dataset(c.primary));
}

TEST_CASE("synth rejects bad arguments") {
    CHECK_THROWS_AS(synth_generate(19, 40, 1, 0.5), ValueError);
    CHECK_THROWS_AS(synth_generate(100, 40, 1, 1.5), ConfigError);
}
